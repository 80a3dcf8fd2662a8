"""Conditional rewind of the photon recoil once the detection times are known.

After heralding, the ↓ and ↑ qubit branches carry different recoil displacements that depend
on the measured detection times. A state-dependent displacement of the same size and opposite
sign returns both branches to the initial motional state, leaving only an overall phase that
does not depend on it.
"""

import functools
import logging
from dataclasses import dataclass

import numpy as np

from recoil.herald import (
    HeraldChannel,
    ProtocolSpec,
    bell_result,
    fidelity_all,
    window_integrals,
)
from recoil.phase_space import (
    RecoilBranch,
    chain_overlap,
    check_times,
    displace,
    evolve_beta,
    sample_thermal,
    z_exact,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewindPlan:
    """Displacement arguments for the ↓ (early) and ↑ (late) branches of one mode."""

    down: complex
    up: complex

    @property
    def differential(self):
        return self.down - self.up


def rewind_plan(mode, t_mu, t_nu, T) -> RewindPlan:
    check_times(t_mu=t_mu, t_nu=t_nu, T=T)
    omega = mode.frequency
    eta, eta_p = mode.eta_emit, mode.eta_exc
    return RewindPlan(
        down=1j * eta * np.exp(1j * omega * t_mu) - 1j * eta_p,
        up=1j * eta * np.exp(1j * omega * (t_nu + T)) - 1j * eta_p * np.exp(1j * omega * T),
    )


def rewind_branches(mode, alpha, t_mu, t_nu, T, efficiency=1.0, plan_times=None):
    """Recoiled early/late branches after the (possibly mistimed or scaled) rewind."""
    early = evolve_beta(mode, alpha, t_mu, T, RecoilBranch.EARLY)
    late = evolve_beta(mode, alpha, t_nu, T, RecoilBranch.LATE)
    plan = rewind_plan(mode, *(plan_times or (t_mu, t_nu)), T)
    return displace(early, efficiency * plan.down), displace(late, efficiency * plan.up)


def rewound_overlap(mode, alpha, t_mu, t_nu, T, efficiency=1.0, plan_times=None):
    """⟨β^T(t_ν)|β(t_μ)⟩ after rewinding both branches."""
    early, late = rewind_branches(mode, alpha, t_mu, t_nu, T, efficiency, plan_times)
    return chain_overlap(late, early)


def _emitter_times(spec: ProtocolSpec, t_mu, t_nu, plan_times):
    offset = spec.windows.known_offset
    shifted_plan = None
    if plan_times is not None:
        shifted_plan = (plan_times[0] - offset, plan_times[1] - offset)
    return (
        (False, spec.emitter_a, (t_mu, t_nu), plan_times),
        (True, spec.emitter_b, (t_mu - offset, t_nu - offset), shifted_plan),
    )


def verify_disentangle(
    spec: ProtocolSpec, t_mu, t_nu, trials, seed, plan_times=None, efficiency=1.0
):
    """Worst-case 1 - |⟨branch ↑↓|branch ↓↑⟩| over thermal draws after rewind.

    ``plan_times`` lets the rewind be computed from other detection times than the ones that
    actually occurred (negative control).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    total = np.ones(trials, dtype=complex)
    delay = spec.timebin_delay
    for conjugate, emitter, (mu, nu), plan in _emitter_times(spec, t_mu, t_nu, plan_times):
        for mode in emitter.modes:
            alpha = sample_thermal(mode.nbar, trials, rng)
            value = rewound_overlap(mode, alpha, mu, nu, delay, efficiency, plan)
            total = total * (np.conj(value) if conjugate else value)
    deficit = float(np.max(1 - np.abs(total)))
    logger.debug("rewind deficit over %d draws: %.3e", trials, deficit)
    return max(deficit, 0.0)


def rewound_thermal_overlap(spec: ProtocolSpec, t_mu, t_nu, efficiency=1.0):
    """Thermal 𝓜 after rewind, with the known residual phase removed.

    A rewind scaled by ε leaves (1-ε) of each recoil, so Z shrinks by (1-ε)².
    """
    offset = spec.windows.known_offset
    delay = spec.timebin_delay
    shrink = (1 - efficiency) ** 2
    exponent = 0.0
    for mode in spec.emitter_a.modes:
        exponent = exponent + (2 * mode.nbar + 1) * z_exact(mode, t_mu, t_nu, delay)
    for mode in spec.emitter_b.modes:
        exponent = exponent + (2 * mode.nbar + 1) * z_exact(
            mode, t_mu - offset, t_nu - offset, delay
        )
    return np.exp(-shrink * exponent) + 0j


def fidelity_with_rewind(spec: ProtocolSpec, channel: HeraldChannel, efficiency=1.0, settings=None):
    overlap = functools.partial(rewound_thermal_overlap, efficiency=efficiency)
    return bell_result(spec, channel, window_integrals(spec, settings, overlap=overlap))


def fidelity_with_rewind_all(spec: ProtocolSpec, efficiency=1.0, settings=None):
    overlap = functools.partial(rewound_thermal_overlap, efficiency=efficiency)
    return fidelity_all(spec, settings, strict=False, overlap=overlap)
