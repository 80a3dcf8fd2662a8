"""Two-photon interference, herald channels and Bell-state fidelity by window quadrature."""

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from recoil.atoms import EmitterSpec
from recoil.phase_space import psi_phase, thermal_overlap
from recoil.quadrature import integrate_band
from recoil.temporal import DetectionWindows, detection_yield, wavepacket

logger = logging.getLogger(__name__)

BS_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BeamsplitterSpec:
    """Field transmission 𝔱 and reflection 𝔯 with 𝔱² + 𝔯² = 1."""

    transmission: float = math.sqrt(0.5)
    reflection: float = math.sqrt(0.5)

    def __post_init__(self):
        for name in ("transmission", "reflection"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        norm = self.transmission**2 + self.reflection**2
        if abs(norm - 1) > BS_TOLERANCE:
            raise ValueError(f"beamsplitter is not unitary: t^2 + r^2 = {norm!r}")

    @classmethod
    def from_imbalance(cls, imbalance):
        """𝔱² = (1+δ)/2, 𝔯² = (1-δ)/2."""
        if not -1 <= imbalance <= 1:
            raise ValueError(f"imbalance must lie in [-1, 1], got {imbalance}")
        return cls(math.sqrt((1 + imbalance) / 2), math.sqrt((1 - imbalance) / 2))

    @property
    def imbalance(self):
        return self.transmission**2 - self.reflection**2


class HeraldChannel(enum.Enum):
    """Which detector pair clicked (early bin, late bin)."""

    OPPOSITE_1001 = "opposite_1001"
    OPPOSITE_0110 = "opposite_0110"
    SAME_1100 = "same_1100"
    SAME_0011 = "same_0011"

    @property
    def is_opposite(self):
        return self.value.startswith("opposite")

    def amplitudes(self, beamsplitter: BeamsplitterSpec):
        """Amplitudes of the |↓↑⟩ and |↑↓⟩ branches projected onto this click pattern."""
        t, r = beamsplitter.transmission, beamsplitter.reflection
        return {
            HeraldChannel.OPPOSITE_1001: (-(t**2), r**2),
            HeraldChannel.OPPOSITE_0110: (r**2, -(t**2)),
            HeraldChannel.SAME_1100: (r * t, r * t),
            HeraldChannel.SAME_0011: (-r * t, -r * t),
        }[self]


@dataclass(frozen=True)
class ProtocolSpec:
    emitter_a: EmitterSpec
    emitter_b: EmitterSpec
    windows: DetectionWindows
    beamsplitter: BeamsplitterSpec = field(default_factory=BeamsplitterSpec)
    timebin_delay: float = 0.0
    detector_efficiency: float = 1.0

    def __post_init__(self):
        if not (self.timebin_delay >= 0 and math.isfinite(self.timebin_delay)):
            raise ValueError(f"time-bin delay must be finite and >= 0, got {self.timebin_delay}")
        if not 0 <= self.detector_efficiency <= 1:
            raise ValueError(
                f"detector efficiency must lie in [0, 1], got {self.detector_efficiency}"
            )

    @property
    def chi(self):
        """P_A P_B p_A p_B ε_D² / 4."""
        a, b = self.emitter_a, self.emitter_b
        return (
            a.excite_prob * b.excite_prob * a.collect_prob * b.collect_prob
            * self.detector_efficiency**2 / 4
        )

    @property
    def identical_lifetimes(self):
        return self.emitter_a.lifetime == self.emitter_b.lifetime

    @property
    def quadrature_lifetime(self):
        """Decay scale for the quadrature map: harmonic mean of the two lifetimes."""
        return 2 / (1 / self.emitter_a.lifetime + 1 / self.emitter_b.lifetime)

    def window_yield(self):
        if not self.identical_lifetimes:
            return None
        return detection_yield(self.windows, self.emitter_a.lifetime)


@dataclass(frozen=True)
class BellResult:
    population_down_up: float
    population_up_down: float
    coherence: complex
    fidelity: float
    herald_probability: float
    fidelity_stderr: float | None = None
    coherence_stderr: float | None = None
    herald_probability_stderr: float | None = None
    warnings: tuple = ()

    @property
    def infidelity(self):
        return 1 - self.fidelity


@dataclass(frozen=True)
class WindowIntegrals:
    """∫P₁, ∫P₂ and the complex interference integral ∫I over the detection region."""

    branch_down_up: float
    branch_up_down: float
    interference: complex
    error_bound: float = 0.0
    converged: bool = True


def motional_overlap(spec: ProtocolSpec, t_mu, t_nu):
    """𝓜(t_μ, t_ν) = Π_A 𝓜_Ai · Π_B conj(𝓜_Bi); emitter B's recoil clock starts at δt₀."""
    delay = spec.timebin_delay
    offset = spec.windows.known_offset
    total = 1.0 + 0.0j
    for mode in spec.emitter_a.modes:
        total = total * thermal_overlap(mode, t_mu, t_nu, delay)
    for mode in spec.emitter_b.modes:
        total = total * np.conj(thermal_overlap(mode, t_mu - offset, t_nu - offset, delay))
    return total


def total_psi(spec: ProtocolSpec, t_mu, t_nu):
    """Phase of 𝓜 summed over every mode of both emitters."""
    delay = spec.timebin_delay
    offset = spec.windows.known_offset
    psi = 0.0
    for mode in spec.emitter_a.modes:
        psi = psi + psi_phase(mode, t_mu, t_nu, delay)
    for mode in spec.emitter_b.modes:
        psi = psi - psi_phase(mode, t_mu - offset, t_nu - offset, delay)
    return psi


def _envelopes(spec: ProtocolSpec, t_mu, t_nu):
    tau_a, tau_b = spec.emitter_a.lifetime, spec.emitter_b.lifetime
    offset = spec.windows.known_offset
    return (
        wavepacket(t_mu, tau_a),
        wavepacket(t_nu, tau_a),
        wavepacket(t_mu - offset, tau_b),
        wavepacket(t_nu - offset, tau_b),
    )


def _integrate(spec: ProtocolSpec, integrand, settings, strict):
    windows = spec.windows
    return integrate_band(
        integrand,
        windows.start,
        windows.stop,
        windows.difference_window,
        spec.quadrature_lifetime,
        settings=settings,
        strict=strict,
    )


def window_integrals(spec: ProtocolSpec, settings=None, strict=True, overlap=motional_overlap):
    """Evaluate the three channel-independent window integrals in one quadrature pass.

    ``overlap(spec, t_mu, t_nu)`` supplies 𝓜; recoil.rewind passes its rewound counterpart.
    """

    def integrand(t_mu, t_nu):
        fa_mu, fa_nu, fb_mu, fb_nu = _envelopes(spec, t_mu, t_nu)
        weight = fa_mu * fb_mu * fa_nu * fb_nu
        interference = weight * overlap(spec, t_mu, t_nu)
        return np.stack(
            [
                np.broadcast_to(fa_mu**2 * fb_nu**2, interference.shape),
                np.broadcast_to(fa_nu**2 * fb_mu**2, interference.shape),
                interference.real,
                interference.imag,
            ]
        )

    result = _integrate(spec, integrand, settings, strict)
    p1, p2, re, im = (float(v) for v in result.value)
    return WindowIntegrals(p1, p2, complex(re, im), result.error_bound, result.converged)


def bell_result(spec: ProtocolSpec, channel: HeraldChannel, integrals: WindowIntegrals):
    c1, c2 = channel.amplitudes(spec.beamsplitter)
    w1 = c1**2 * integrals.branch_down_up
    w2 = c2**2 * integrals.branch_up_down
    norm = w1 + w2
    warnings = ()
    if not integrals.converged:
        warnings = (f"quadrature not converged (error bound {integrals.error_bound:.3e})",)
    if norm <= 0:
        return BellResult(0.0, 0.0, 0j, 0.5, 0.0, warnings=warnings)
    coherence = 2 * c1 * c2 * integrals.interference / norm
    return BellResult(
        population_down_up=w1 / norm,
        population_up_down=w2 / norm,
        coherence=coherence,
        fidelity=0.5 * (1 + abs(coherence)),
        herald_probability=spec.chi * norm,
        warnings=warnings,
    )


def herald_probability(spec: ProtocolSpec, channel: HeraldChannel, settings=None):
    """χ(c₁²∫P₁ + c₂²∫P₂); with equal lifetimes this is χ(𝔱⁴+𝔯⁴)Y or 2χ𝔱²𝔯²Y."""
    c1, c2 = channel.amplitudes(spec.beamsplitter)
    y = spec.window_yield()
    if y is not None:
        return spec.chi * (c1**2 + c2**2) * y
    integrals = window_integrals(spec, settings)
    return spec.chi * (c1**2 * integrals.branch_down_up + c2**2 * integrals.branch_up_down)


def discard_probability(spec: ProtocolSpec, settings=None):
    """Probability of a coincidence from equal qubit states, which heralds nothing."""
    t2, r2 = spec.beamsplitter.transmission**2, spec.beamsplitter.reflection**2
    y = spec.window_yield()
    if y is None:
        integrals = window_integrals(spec, settings)
        y = 0.5 * (integrals.branch_down_up + integrals.branch_up_down)
    return 2 * spec.chi * y * (t2 + r2) ** 2


def coherence_quadrature(spec: ProtocolSpec, channel: HeraldChannel, settings=None):
    return fidelity(spec, channel, settings).coherence


def fidelity(spec: ProtocolSpec, channel: HeraldChannel, settings=None, strict=True):
    return bell_result(spec, channel, window_integrals(spec, settings, strict))


def fidelity_all(spec: ProtocolSpec, settings=None, strict=True, overlap=motional_overlap):
    """BellResult for every channel from a single set of window integrals."""
    integrals = window_integrals(spec, settings, strict, overlap)
    logger.debug(
        "window integrals: P1=%.12g P2=%.12g I=%r", integrals.branch_down_up,
        integrals.branch_up_down, integrals.interference,
    )
    return {channel: bell_result(spec, channel, integrals) for channel in HeraldChannel}


def phase_contrast_loss(spec: ProtocolSpec, settings=None):
    """1 - |⟨e^{-iψ}⟩| over the interference-weighted detection-time distribution.

    For two identical emitters with no offset the per-emitter phases cancel event by event
    and this is zero; it grows with any asymmetry between the emitters.
    """

    def integrand(t_mu, t_nu):
        fa_mu, fa_nu, fb_mu, fb_nu = _envelopes(spec, t_mu, t_nu)
        weight = fa_mu * fb_mu * fa_nu * fb_nu
        phase = np.exp(-1j * total_psi(spec, t_mu, t_nu))
        value = weight * phase
        return np.stack([np.broadcast_to(weight, value.shape), value.real, value.imag])

    result = _integrate(spec, integrand, settings, strict=True)
    norm, re, im = (float(v) for v in result.value)
    if norm <= 0:
        return 0.0
    return max(0.0, 1 - abs(complex(re, im)) / norm)
