import math

import numpy as np
import pytest

from recoil.atoms import (
    EmitterSpec,
    ModeSpec,
    Species,
    build_mode,
    builtin_species,
    check_mode_matrix,
    diff_recoil_frequency,
    doppler_nbar,
    lamb_dicke,
    lookup_species,
    make_registry,
    recoil_frequency,
)
from recoil.errors import UnknownSpeciesError

KHZ = 2 * math.pi * 1e3
MHZ = 2 * math.pi * 1e6


def test_recoil_frequency_yb(yb):
    assert recoil_frequency(yb) / KHZ == pytest.approx(8.6, rel=0.01)


def test_recoil_frequency_be():
    assert recoil_frequency(lookup_species("9Be+@313")) / KHZ == pytest.approx(226, rel=0.01)


def test_recoil_frequency_projection(yb):
    assert recoil_frequency(yb, 0.0) == 0.0
    assert recoil_frequency(yb, 0.5) == pytest.approx(0.25 * recoil_frequency(yb))
    with pytest.raises(ValueError):
        recoil_frequency(yb, 1.5)


def test_diff_recoil_frequency_geometries(yb):
    z, x = (0, 0, 1), (1, 0, 0)
    assert diff_recoil_frequency(yb, z, z, z) == pytest.approx(0.0, abs=1e-20)
    assert diff_recoil_frequency(yb, z, (0, 0, -1), z) == pytest.approx(4 * recoil_frequency(yb))
    assert diff_recoil_frequency(yb, z, x, z) == pytest.approx(recoil_frequency(yb))


def test_lamb_dicke_yb(yb):
    assert lamb_dicke(yb, MHZ, 1.0) == pytest.approx(0.092568, rel=5e-3)


def test_lamb_dicke_relation_to_recoil_frequency(yb):
    rng = np.random.default_rng(0)
    for _ in range(20):
        frequency = rng.uniform(0.1, 10) * MHZ
        b = rng.uniform(0.1, 1)
        eta = lamb_dicke(yb, frequency, 1.0, b)
        assert eta**2 * frequency == pytest.approx(recoil_frequency(yb) * b**2, rel=1e-12)


def test_doppler_nbar(yb):
    assert doppler_nbar(MHZ, yb.excited_lifetime) == pytest.approx(9.8244, rel=1e-3)
    assert doppler_nbar(0.5, 1.0) == pytest.approx(1.0)
    assert doppler_nbar(2 * MHZ, 1e-8) < doppler_nbar(MHZ, 1e-8)
    with pytest.raises(ValueError):
        doppler_nbar(0.0, 1e-8)


def test_builtin_species_table():
    species = builtin_species()
    assert len(species) == 12
    assert len({s.name for s in species}) == 12
    yb = lookup_species("171Yb@1389")
    assert yb.excited_lifetime == pytest.approx(330e-9)
    assert yb.transition_wavelength == pytest.approx(1389e-9)


def test_unknown_species():
    with pytest.raises(UnknownSpeciesError) as excinfo:
        lookup_species("1H@121")
    assert isinstance(excinfo.value, KeyError)
    assert "1H@121" in str(excinfo.value)


def test_custom_species_registry():
    custom = Species.from_human("toy", 10, 500, 10)
    registry = make_registry([custom])
    assert lookup_species("toy", registry) is custom
    assert "171Yb+@369" in registry


@pytest.mark.parametrize("field", ["mass_amu", "wavelength_nm", "lifetime_ns"])
def test_species_rejects_non_positive(field):
    values = {"mass_amu": 40, "wavelength_nm": 397, "lifetime_ns": 6.8}
    values[field] = 0
    with pytest.raises(ValueError):
        Species.from_human("bad", **values)


def test_check_mode_matrix():
    s = math.sqrt(0.5)
    check_mode_matrix([[s, s], [s, -s]])
    with pytest.raises(ValueError, match="not normalised"):
        check_mode_matrix([[s, 1.0], [s, 0.5]])


def test_build_mode_default_geometry(yb):
    m = build_mode(yb, MHZ)
    assert m.eta_emit == pytest.approx(lamb_dicke(yb, MHZ, 1.0))
    assert m.eta_exc == pytest.approx(0.0, abs=1e-15)
    assert m.nbar == pytest.approx(doppler_nbar(MHZ, yb.excited_lifetime))
    assert m.diff_recoil_frequency == pytest.approx(recoil_frequency(yb))


def test_build_mode_explicit_nbar_and_participation(yb):
    m = build_mode(yb, MHZ, participation=math.sqrt(0.5), nbar=0.0)
    assert m.nbar == 0.0
    assert m.recoil_frequency == pytest.approx(0.5 * recoil_frequency(yb))


def test_mode_validation():
    with pytest.raises(ValueError):
        ModeSpec(frequency=0.0, nbar=0.0, eta_emit=0.1, eta_exc=0.0)
    with pytest.raises(ValueError):
        ModeSpec(frequency=MHZ, nbar=-1.0, eta_emit=0.1, eta_exc=0.0)
    with pytest.raises(ValueError):
        ModeSpec(frequency=MHZ, nbar=0.0, eta_emit=0.1, eta_exc=0.0, participation=1.2)


def test_emitter_requires_unit_directions(yb):
    with pytest.raises(ValueError, match="unit vector"):
        EmitterSpec(species=yb, modes=(), k_emit_direction=(0, 0, 2))
    with pytest.raises(ValueError):
        EmitterSpec(species=yb, modes=(), excite_prob=1.5)
