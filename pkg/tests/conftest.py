import json
import math

import pytest

from recoil.atoms import EmitterSpec, ModeSpec, build_mode, lookup_species
from recoil.herald import BeamsplitterSpec, ProtocolSpec
from recoil.temporal import DetectionWindows

MHZ = 2 * math.pi * 1e6


@pytest.fixture
def yb():
    return lookup_species("171Yb+@369")


@pytest.fixture
def make_spec(yb):
    """Factory for a symmetric link: both emitters carry the same ``modes``."""

    def build(
        modes=(),
        w=2.0,
        imbalance=0.0,
        timebin_delay=0.0,
        detector_window=math.inf,
        known_offset=0.0,
        species=None,
        emitter_b_modes=None,
        **kwargs,
    ):
        species = species or yb
        tau = species.excited_lifetime
        a = EmitterSpec(species=species, modes=tuple(modes))
        b = a if emitter_b_modes is None else EmitterSpec(species=species, modes=emitter_b_modes)
        windows = DetectionWindows(
            difference_window=w * tau if math.isfinite(w) else math.inf,
            detector_window=detector_window,
            known_offset=known_offset,
        )
        return ProtocolSpec(
            emitter_a=a,
            emitter_b=b,
            windows=windows,
            beamsplitter=BeamsplitterSpec.from_imbalance(imbalance),
            timebin_delay=timebin_delay,
            **kwargs,
        )

    return build


@pytest.fixture
def doppler_mode(yb):
    """Axial mode at ω = 10⁻²/τ, Doppler cooled, excitation beam perpendicular."""
    return build_mode(yb, 1e-2 / yb.excited_lifetime)


@pytest.fixture
def strong_mode():
    """Exaggerated recoil so quadrature and Monte Carlo differ visibly from F = 1."""
    return ModeSpec(frequency=2 * MHZ, nbar=2.0, eta_emit=0.3, eta_exc=0.1)


@pytest.fixture
def write_config(tmp_path):
    def write(document, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return path

    return write
