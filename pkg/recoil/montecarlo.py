"""Monte-Carlo oracle for the heralded Bell state.

Detection times are drawn from the product of the two emitters' photon densities, thermal
motional amplitudes from the Glauber P distribution, and every sample is scored with exact
coherent-state overlaps. Each sample contributes the importance-weighted vector

    v = (Re x, Im x, a, b)

where x is the interference term and a, b the two branch weights. All four herald channels are
ratios of the same four means, so they are estimated from one sample stream.

Samples are processed in fixed-size batches whose random streams are derived from the seed and
the batch index alone, so results do not depend on how many workers run them.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from recoil.herald import BellResult, HeraldChannel, ProtocolSpec
from recoil.phase_space import chain_overlap, sample_thermal
from recoil.rewind import rewind_branches
from recoil.temporal import wavepacket

logger = logging.getLogger(__name__)

BATCH_SIZE = 1 << 15


@dataclass
class MomentAccumulator:
    """Running sums of v and vvᵀ; merging two accumulators is exact addition."""

    proposals: int = 0
    accepted: int = 0
    sums: np.ndarray = field(default_factory=lambda: np.zeros(4))
    products: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))

    def add(self, values, proposals):
        values = np.asarray(values, dtype=float).reshape(-1, 4)
        self.proposals += int(proposals)
        self.accepted += len(values)
        self.sums += values.sum(axis=0)
        self.products += values.T @ values
        return self

    def merge(self, other):
        return MomentAccumulator(
            self.proposals + other.proposals,
            self.accepted + other.accepted,
            self.sums + other.sums,
            self.products + other.products,
        )

    @property
    def mean(self):
        return self.sums / self.proposals

    @property
    def covariance(self):
        n = self.proposals
        mean = self.mean
        cov = self.products / n - np.outer(mean, mean)
        return cov * n / max(n - 1, 1)


@dataclass(frozen=True)
class MonteCarloReport:
    channels: dict
    discard_probability: float
    discard_stderr: float
    samples: int
    accepted: int
    seed: int
    rewind_efficiency: float | None = None

    @property
    def acceptance(self):
        return self.accepted / self.samples


def _truncated_exponential(rng, size, start, stop, lifetime, origin):
    """Draw t ∈ [start, stop) with density ∝ e^{-(t-origin)/τ}; returns (t, mass of f² there)."""
    span = -math.expm1(-(stop - start) / lifetime)
    t = start - lifetime * np.log1p(-rng.random(size) * span)
    return t, math.exp(-(start - origin) / lifetime) * span


def propose_detection_times(spec: ProtocolSpec, size, rng: np.random.Generator):
    """Proposal draws inside the detector windows.

    Returns ``(t_mu, t_nu, density, accepted)``: t_μ follows emitter A's photon density, t_ν
    emitter B's (delayed by δt₀); ``accepted`` marks draws that pass the difference veto.
    """
    windows = spec.windows
    tau_a, tau_b = spec.emitter_a.lifetime, spec.emitter_b.lifetime
    offset = windows.known_offset
    t_mu, mass_a = _truncated_exponential(rng, size, windows.start, windows.stop, tau_a, 0.0)
    t_nu, mass_b = _truncated_exponential(rng, size, windows.start, windows.stop, tau_b, offset)
    density = wavepacket(t_mu, tau_a) ** 2 * wavepacket(t_nu - offset, tau_b) ** 2
    density = density / (mass_a * mass_b)
    accepted = np.abs(t_mu - t_nu) <= windows.difference_window
    return t_mu, t_nu, density, accepted


def _sampled_overlap(spec: ProtocolSpec, t_mu, t_nu, rng, rewind_efficiency):
    """Pure-state 𝓜 for one thermal draw per sample and mode."""
    offset = spec.windows.known_offset
    delay = spec.timebin_delay
    efficiency = 0.0 if rewind_efficiency is None else rewind_efficiency
    total = np.ones(len(t_mu), dtype=complex)
    for conjugate, emitter, mu, nu in (
        (False, spec.emitter_a, t_mu, t_nu),
        (True, spec.emitter_b, t_mu - offset, t_nu - offset),
    ):
        for mode in emitter.modes:
            alpha = sample_thermal(mode.nbar, len(t_mu), rng)
            early, late = rewind_branches(mode, alpha, mu, nu, delay, efficiency)
            value = chain_overlap(late, early)
            if rewind_efficiency is not None:
                # remove the residual phase, known from the detection times alone
                e0, l0 = rewind_branches(mode, 0j, mu, nu, delay, efficiency)
                frame = chain_overlap(l0, e0)
                value = value * np.conj(frame) / np.abs(frame)
            total = total * (np.conj(value) if conjugate else value)
    return total


def run_batch(spec: ProtocolSpec, size, seed, index, rewind_efficiency=None):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    t_mu, t_nu, density, accepted = propose_detection_times(spec, size, rng)
    t_mu, t_nu, density = t_mu[accepted], t_nu[accepted], density[accepted]

    tau_a, tau_b = spec.emitter_a.lifetime, spec.emitter_b.lifetime
    offset = spec.windows.known_offset
    fa_mu, fa_nu = wavepacket(t_mu, tau_a), wavepacket(t_nu, tau_a)
    fb_mu, fb_nu = wavepacket(t_mu - offset, tau_b), wavepacket(t_nu - offset, tau_b)

    overlap = _sampled_overlap(spec, t_mu, t_nu, rng, rewind_efficiency)
    x = fa_mu * fb_mu * fa_nu * fb_nu * overlap / density
    values = np.column_stack(
        [x.real, x.imag, fa_mu**2 * fb_nu**2 / density, fa_nu**2 * fb_mu**2 / density]
    )
    return MomentAccumulator().add(values, size)


def _batch_sizes(samples):
    full, rest = divmod(samples, BATCH_SIZE)
    return [BATCH_SIZE] * full + ([rest] if rest else [])


def accumulate(spec: ProtocolSpec, samples, seed, workers=1, rewind_efficiency=None):
    sizes = _batch_sizes(samples)
    logger.info("Monte Carlo: %d samples in %d batches, %d worker(s)", samples, len(sizes), workers)

    def job(item):
        index, size = item
        return run_batch(spec, size, seed, index, rewind_efficiency)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, enumerate(sizes)))
    else:
        parts = [job(item) for item in enumerate(sizes)]

    total = MomentAccumulator()
    for part in parts:
        total = total.merge(part)
    return total


def channel_estimate(spec: ProtocolSpec, channel: HeraldChannel, moments: MomentAccumulator):
    """Ratio estimator for one channel with delta-method standard errors."""
    c1, c2 = channel.amplitudes(spec.beamsplitter)
    re, im, a, b = moments.mean
    cov = moments.covariance
    n = moments.proposals
    norm = c1**2 * a + c2**2 * b
    if norm <= 0:
        return BellResult(0.0, 0.0, 0j, 0.5, 0.0, 0.0, 0.0, 0.0)

    interference = complex(re, im)
    coherence = 2 * c1 * c2 * interference / norm
    magnitude = abs(coherence)
    phase = math.atan2(im, re) if interference else 0.0
    scale = 2 * abs(c1 * c2)
    gradient = np.array(
        [scale * math.cos(phase), scale * math.sin(phase), -magnitude * c1**2, -magnitude * c2**2]
    ) / norm
    coherence_stderr = math.sqrt(max(gradient @ cov @ gradient, 0.0) / n)

    herald_gradient = spec.chi * np.array([0.0, 0.0, c1**2, c2**2])
    herald_stderr = math.sqrt(max(herald_gradient @ cov @ herald_gradient, 0.0) / n)

    return BellResult(
        population_down_up=c1**2 * a / norm,
        population_up_down=c2**2 * b / norm,
        coherence=coherence,
        fidelity=0.5 * (1 + magnitude),
        herald_probability=spec.chi * norm,
        fidelity_stderr=0.5 * coherence_stderr,
        coherence_stderr=coherence_stderr,
        herald_probability_stderr=herald_stderr,
    )


def mc_protocol(spec: ProtocolSpec, samples, seed, workers=1, rewind_efficiency=None):
    """Estimate every channel's BellResult and the discard probability from one sample stream.

    ``rewind_efficiency`` applies the conditional rewind (scaled by ε) to every event.
    """
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
        raise ValueError(f"samples must be a positive integer, got {samples!r}")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    moments = accumulate(spec, samples, seed, workers, rewind_efficiency)
    channels = {channel: channel_estimate(spec, channel, moments) for channel in HeraldChannel}

    bs = spec.beamsplitter
    weight = 2 * spec.chi * (bs.transmission**2 + bs.reflection**2) ** 2
    discard_gradient = weight * np.array([0.0, 0.0, 0.5, 0.5])
    discard = float(discard_gradient @ moments.mean)
    discard_stderr = math.sqrt(
        max(discard_gradient @ moments.covariance @ discard_gradient, 0.0) / samples
    )
    logger.info(
        "Monte Carlo: %d of %d proposals accepted", moments.accepted, moments.proposals
    )
    return MonteCarloReport(
        channels=channels,
        discard_probability=discard,
        discard_stderr=discard_stderr,
        samples=samples,
        accepted=moments.accepted,
        seed=seed,
        rewind_efficiency=rewind_efficiency,
    )
