"""Coherent-state algebra for recoiled motional modes.

Everything here works on Python complex scalars and on numpy arrays alike, so the
quadrature and Monte-Carlo layers can evaluate whole grids of detection times or
thermal samples in one call.

Conventions: D[ξ]|α⟩ = e^{i Im(ξα*)}|α+ξ⟩. Times are seconds, mode frequencies are
rad/s, amplitudes are dimensionless.
"""

import enum
from dataclasses import dataclass

import numpy as np

from recoil.atoms import ModeSpec

CoherentAmplitude = complex | np.ndarray


class RecoilBranch(enum.Enum):
    """Which time bin the emission belongs to."""

    EARLY = "early"  # μ photon, qubit ↓, state β(t)
    LATE = "late"  # ν photon, qubit ↑, state β^T(t)


@dataclass(frozen=True)
class DisplacedState:
    """A coherent state |amplitude⟩ times the phase accumulated by its displacement chain."""

    amplitude: CoherentAmplitude
    accumulated_phase: float | np.ndarray = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.amplitude)):
            raise ValueError("coherent amplitude must be finite")
        if not np.all(np.isfinite(self.accumulated_phase)):
            raise ValueError("accumulated phase must be finite")


def displace(state: DisplacedState, xi) -> DisplacedState:
    """Apply D[ξ], tracking the phase Im(ξα*)."""
    return DisplacedState(
        amplitude=state.amplitude + xi,
        accumulated_phase=state.accumulated_phase + np.imag(xi * np.conj(state.amplitude)),
    )


def overlap(a, b):
    """⟨a|b⟩ = exp(-|a|²/2 - |b|²/2 + a*b) for coherent states.

    Evaluated as exp(-|a-b|²/2 + i Im(a*b)) so large amplitudes do not cancel.
    """
    return np.exp(-0.5 * np.abs(a - b) ** 2 + 1j * np.imag(np.conj(a) * b))


def chain_overlap(bra: DisplacedState, ket: DisplacedState):
    """Inner product of two displaced states including their tracked phases."""
    return np.exp(1j * (ket.accumulated_phase - bra.accumulated_phase)) * overlap(
        bra.amplitude, ket.amplitude
    )


def check_times(**times):
    for name, value in times.items():
        if np.any(np.asarray(value) < 0):
            raise ValueError(f"{name} must be >= 0")


def recoil_kicks(mode: ModeSpec, t, T, branch: RecoilBranch):
    """(excitation kick, emission kick) for one branch, in application order."""
    omega = mode.frequency
    if branch is RecoilBranch.EARLY:
        return 1j * mode.eta_exc, -1j * mode.eta_emit * np.exp(1j * omega * t)
    return (
        1j * mode.eta_exc * np.exp(1j * omega * T),
        -1j * mode.eta_emit * np.exp(1j * omega * (t + T)),
    )


def evolve_beta(mode: ModeSpec, alpha, t, T, branch: RecoilBranch) -> DisplacedState:
    """β(t) (early) or β^T(t) (late) starting from |α⟩: excitation kick then emission kick."""
    check_times(t=t, T=T)
    excitation, emission = recoil_kicks(mode, t, T, branch)
    state = DisplacedState(alpha)
    return displace(displace(state, excitation), emission)


def branch_overlap(mode: ModeSpec, alpha, t_mu, t_nu, T):
    """Pure-state motional overlap ⟨β^T(t_ν)|β(t_μ)⟩ for initial amplitude α."""
    early = evolve_beta(mode, alpha, t_mu, T, RecoilBranch.EARLY)
    late = evolve_beta(mode, alpha, t_nu, T, RecoilBranch.LATE)
    return chain_overlap(late, early)


def z_exact(mode: ModeSpec, t_mu, t_nu, T):
    """Recoil decoherence exponent Z = ½|β^T(t_ν) - β(t_μ)|².

    Evaluated in half-angle form, which is the same trigonometric expression written
    without 1 - cos cancellation.
    """
    check_times(t_mu=t_mu, t_nu=t_nu, T=T)
    omega = mode.frequency
    eta, eta_p = mode.eta_emit, mode.eta_exc
    x, y, half = omega * t_mu, omega * t_nu, 0.5 * omega * T
    z = (
        2 * eta_p**2 * np.sin(half) ** 2
        + 2 * eta**2 * np.sin(half + 0.5 * (y - x)) ** 2
        - 2 * eta * eta_p * np.sin(half) * (np.sin(half + y) + np.sin(half - x))
    )
    return np.maximum(z, 0.0)


def psi_phase(mode: ModeSpec, t_mu, t_nu, T):
    """Phase ψ of the thermally averaged overlap; independent of the initial state."""
    check_times(t_mu=t_mu, t_nu=t_nu, T=T)
    omega = mode.frequency
    eta, eta_p = mode.eta_emit, mode.eta_exc
    return (
        eta_p**2 * np.sin(omega * T)
        + eta**2 * np.sin(omega * (T + t_nu - t_mu))
        - eta_p
        * eta
        * (
            np.sin(omega * (T + t_nu))
            + np.sin(omega * t_nu)
            + np.sin(omega * (T - t_mu))
            - np.sin(omega * t_mu)
        )
    )


def z_approx(mode: ModeSpec, t_sigma, t_delta, T):
    """Z to second order in ωt, exact in ωT, odd powers of t_Δ dropped."""
    omega = mode.frequency
    eta, eta_p = mode.eta_emit, mode.eta_exc
    one_minus_cos = 1 - np.cos(omega * T)
    return (
        (eta - eta_p) ** 2 * one_minus_cos
        + 0.25 * eta_p * eta * one_minus_cos * omega**2 * t_sigma**2
        + (0.25 * eta * eta_p * one_minus_cos + 0.5 * eta**2 * np.cos(omega * T))
        * omega**2
        * t_delta**2
    )


def z_commensurate(mode: ModeSpec, t_sigma, t_delta, T_tilde):
    """Z when ωT = 2πN + ωT̃ with ωT̃ ≪ 1 (not enforced)."""
    omega = mode.frequency
    eta, eta_p = mode.eta_emit, mode.eta_exc
    return (
        0.5 * ((eta - eta_p) ** 2 + 0.25 * eta_p * eta * omega**2 * t_sigma**2) * (omega * T_tilde) ** 2
        + 0.5 * eta**2 * omega**2 * t_delta**2
    )


def thermal_overlap(mode: ModeSpec, t_mu, t_nu, T):
    """Thermal average of ⟨β^T(t_ν)|β(t_μ)⟩: e^{-iψ} e^{-(2n̄+1)Z}."""
    return np.exp(
        -1j * psi_phase(mode, t_mu, t_nu, T) - (2 * mode.nbar + 1) * z_exact(mode, t_mu, t_nu, T)
    )


def sample_thermal(nbar, size, rng: np.random.Generator):
    """Draw α from the thermal Glauber P distribution (variance n̄/2 per quadrature)."""
    if nbar < 0:
        raise ValueError(f"nbar must be >= 0, got {nbar}")
    scale = np.sqrt(nbar / 2)
    return rng.normal(0.0, scale, size) + 1j * rng.normal(0.0, scale, size)
