import math

import numpy as np
import pytest

from recoil.atoms import ModeSpec
from recoil.budget import KappaConvention, closed_form_infidelity
from recoil.herald import (
    BeamsplitterSpec,
    HeraldChannel,
    coherence_quadrature,
    discard_probability,
    fidelity,
    fidelity_all,
    herald_probability,
    phase_contrast_loss,
    total_psi,
)

OPPOSITE = (HeraldChannel.OPPOSITE_1001, HeraldChannel.OPPOSITE_0110)
SAME = (HeraldChannel.SAME_1100, HeraldChannel.SAME_0011)


def test_beamsplitter_from_imbalance():
    bs = BeamsplitterSpec.from_imbalance(0.1)
    assert bs.transmission**2 == pytest.approx(0.55)
    assert bs.reflection**2 == pytest.approx(0.45)
    assert bs.imbalance == pytest.approx(0.1)


@pytest.mark.parametrize("t, r", [(0.5, 0.5), (1.2, 0.0), (-0.1, 1.0)])
def test_beamsplitter_validation(t, r):
    with pytest.raises(ValueError):
        BeamsplitterSpec(t, r)


def test_channel_amplitudes():
    bs = BeamsplitterSpec.from_imbalance(0.2)
    t, r = bs.transmission, bs.reflection
    assert HeraldChannel.OPPOSITE_1001.amplitudes(bs) == pytest.approx((-(t**2), r**2))
    assert HeraldChannel.SAME_0011.amplitudes(bs) == pytest.approx((-r * t, -r * t))
    assert all(c.is_opposite for c in OPPOSITE)
    assert not any(c.is_opposite for c in SAME)


def test_no_recoil_gives_ideal_bell_states(make_spec):
    results = fidelity_all(make_spec(w=math.inf))
    for channel in OPPOSITE:
        assert results[channel].coherence.real == pytest.approx(-1.0, abs=1e-12)
    for channel in SAME:
        assert results[channel].coherence.real == pytest.approx(1.0, abs=1e-12)
    for result in results.values():
        assert result.fidelity == pytest.approx(1.0, abs=1e-12)
        assert result.population_down_up == pytest.approx(0.5)
        assert result.warnings == ()


def test_herald_probabilities_balanced(make_spec):
    spec = make_spec(w=math.inf)
    for channel in HeraldChannel:
        assert herald_probability(spec, channel) == pytest.approx(1 / 8)
    assert discard_probability(spec) == pytest.approx(0.5)


def test_herald_probability_scales_with_yield_and_efficiency(make_spec):
    spec = make_spec(w=2.0, detector_efficiency=0.5)
    expected = 0.25 * 0.25 * 0.5 * (1 - math.exp(-2))
    assert herald_probability(spec, HeraldChannel.OPPOSITE_1001) == pytest.approx(expected)
    assert herald_probability(make_spec(detector_efficiency=0.0), HeraldChannel.SAME_1100) == 0.0


def test_known_offset_delays_both_windows(make_spec, yb):
    tau = yb.excited_lifetime
    spec = make_spec(w=math.inf, known_offset=tau)
    assert herald_probability(spec, HeraldChannel.OPPOSITE_1001) == pytest.approx(math.exp(-1) / 8)
    result = fidelity(spec, HeraldChannel.OPPOSITE_1001)
    assert result.fidelity == pytest.approx(1.0, abs=1e-12)
    assert result.herald_probability == pytest.approx(math.exp(-1) / 8, rel=1e-8)


def test_coherence_quadrature_without_recoil(make_spec):
    spec = make_spec(w=3.0)
    for channel in HeraldChannel:
        assert abs(coherence_quadrature(spec, channel)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("delta", [0.1, 0.3])
def test_coherence_quadrature_with_imbalance(make_spec, delta):
    spec = make_spec(w=math.inf, imbalance=delta)
    for channel in OPPOSITE:
        assert abs(coherence_quadrature(spec, channel)) == pytest.approx(
            (1 - delta**2) / (1 + delta**2), abs=1e-6
        )
    for channel in SAME:
        assert abs(coherence_quadrature(spec, channel)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("delta", [0.05, 0.1, 0.2])
def test_imbalance_reduces_opposite_channel_coherence(make_spec, delta):
    spec = make_spec(w=math.inf, imbalance=delta)
    results = fidelity_all(spec)
    for channel in OPPOSITE:
        assert abs(results[channel].coherence) == pytest.approx(
            (1 - delta**2) / (1 + delta**2), abs=1e-6
        )
    for channel in SAME:
        assert results[channel].fidelity == pytest.approx(1.0, abs=1e-12)
    ratio = results[OPPOSITE[0]].herald_probability / results[SAME[0]].herald_probability
    assert ratio == pytest.approx((1 + delta**2) / (1 - delta**2))


@pytest.mark.parametrize("delta", [0.0, 0.1, 0.3])
def test_probabilities_close(make_spec, strong_mode, delta):
    spec = make_spec(modes=[strong_mode], imbalance=delta, timebin_delay=40e-9)
    total = sum(herald_probability(spec, c) for c in HeraldChannel) + discard_probability(spec)
    assert total == pytest.approx(4 * spec.chi * spec.window_yield(), rel=1e-10)


def test_populations_sum_to_one(make_spec, strong_mode):
    results = fidelity_all(make_spec(modes=[strong_mode], imbalance=0.2, timebin_delay=40e-9))
    for result in results.values():
        assert result.population_down_up + result.population_up_down == pytest.approx(1.0)
        assert 0.5 <= result.fidelity < 1.0


def test_recoil_lowers_fidelity_equally_in_all_balanced_channels(make_spec, strong_mode):
    results = fidelity_all(make_spec(modes=[strong_mode], timebin_delay=40e-9))
    values = [r.fidelity for r in results.values()]
    assert max(values) - min(values) < 1e-12
    assert values[0] < 1 - 1e-4


def test_same_channel_fidelity_ignores_imbalance(make_spec, strong_mode):
    balanced = fidelity(make_spec(modes=[strong_mode]), HeraldChannel.SAME_1100)
    skewed = fidelity(make_spec(modes=[strong_mode], imbalance=0.3), HeraldChannel.SAME_1100)
    assert skewed.fidelity == pytest.approx(balanced.fidelity, abs=1e-8)


def test_complete_decoherence_gives_half(make_spec):
    omega = 2 * math.pi * 2e6
    hot = ModeSpec(frequency=omega, nbar=1e4, eta_emit=0.3, eta_exc=0.0)
    spec = make_spec(modes=[hot], timebin_delay=0.5 * math.pi / omega)
    for result in fidelity_all(spec).values():
        assert result.fidelity == pytest.approx(0.5, abs=1e-6)


def test_random_emission_matches_closed_form(make_spec, doppler_mode):
    result = fidelity(make_spec(modes=[doppler_mode]), HeraldChannel.OPPOSITE_1001)
    assert result.infidelity == pytest.approx(1.647e-4, rel=0.01)
    assert result.infidelity == pytest.approx(
        closed_form_infidelity(make_spec(modes=[doppler_mode]), KappaConvention.ORACLE), rel=0.1
    )


def test_timebin_error_matches_closed_form(make_spec, yb):
    omega = 1e-2 / yb.excited_lifetime
    mode = ModeSpec(frequency=omega, nbar=1.0, eta_emit=0.2, eta_exc=0.0)
    delay = (20 * math.pi + 0.05) / omega
    spec = make_spec(modes=[mode], w=0.01, timebin_delay=delay)
    result = fidelity(spec, HeraldChannel.SAME_0011)
    assert result.infidelity == pytest.approx(closed_form_infidelity(spec), rel=1e-2)


def test_phase_contrast_loss(make_spec, strong_mode):
    assert phase_contrast_loss(make_spec()) == 0.0
    assert phase_contrast_loss(make_spec(modes=[strong_mode], timebin_delay=40e-9)) == pytest.approx(
        0.0, abs=1e-10
    )
    other = ModeSpec(frequency=strong_mode.frequency, nbar=2.0, eta_emit=0.1, eta_exc=0.3)
    asymmetric = make_spec(modes=[strong_mode], emitter_b_modes=(other,), timebin_delay=40e-9)
    assert phase_contrast_loss(asymmetric) > 1e-6


def test_total_psi_vanishes_for_equal_times(make_spec, strong_mode):
    spec = make_spec(modes=[strong_mode])
    t = np.linspace(0, 50e-9, 7)
    np.testing.assert_allclose(total_psi(spec, t, t), 0.0, atol=1e-15)
