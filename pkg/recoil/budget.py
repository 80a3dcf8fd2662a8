"""Closed-form recoil error budget, the time-bin fixed point and the species table.

Errors are fidelity errors per atom and per mode unless a name says otherwise; the "pair"
values reported in tables are the sums over the two emitters of a link.
"""

import enum
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

from scipy.optimize import bisect

from recoil.atoms import builtin_species, recoil_frequency
from recoil.errors import ConventionError, RootBracketError
from recoil.temporal import window_variance_factor

logger = logging.getLogger(__name__)

ELL_BRACKET = (0.1, 60.0)
KHZ = 2 * math.pi * 1e3


class KappaConvention(enum.Enum):
    """Overall constant κ in the pair random-emission error 2E^R = κ·W·ω^R·τ (Doppler limit).

    ``oracle`` is the value the window quadrature and Monte-Carlo oracle reproduce,
    ``table`` reproduces the tabulated column and ``printed-eq37`` the displayed closed form.
    """

    TABLE = "table"
    PRINTED_FORMULA = "printed-eq37"
    ORACLE = "oracle"

    @property
    def kappa(self):
        return {"table": 0.5, "printed-eq37": 2.0, "oracle": 1.0}[self.value]

    @classmethod
    def parse(cls, tag):
        if isinstance(tag, cls):
            return tag
        try:
            return cls(tag)
        except ValueError:
            known = ", ".join(c.value for c in cls)
            raise ConventionError(f"unknown kappa convention '{tag}' (known: {known})") from None


class DopplerErrors(NamedTuple):
    """Pair totals 2E^T and 2E^R."""

    timebin: float
    random: float


@dataclass(frozen=True)
class ErrorBudgetRow:
    species_label: str
    recoil_frequency_khz: float
    timebin_error: float
    random_error: float
    timebin_length_ell: float
    convention: KappaConvention

    @property
    def recoil_khz_display(self):
        if round(self.recoil_frequency_khz, 1) >= 100:
            return f"{self.recoil_frequency_khz:.0f}"
        return f"{self.recoil_frequency_khz:.1f}"

    @property
    def timebin_pct_display(self):
        return f"{100 * self.timebin_error:.2f}"

    @property
    def random_pct_display(self):
        return f"{100 * self.random_error:.3f}"


def timebin_residual(frequency, T):
    """T̃ with ωT = 2πN + ωT̃ and N the nearest integer."""
    periods = round(frequency * T / (2 * math.pi))
    return T - 2 * math.pi * periods / frequency


def timebin_error_general(modes, T_tilde):
    """¼(2n̄+1)(η-η')²ω²T̃² summed over ``modes`` (a ModeSpec or an iterable of them)."""
    if not isinstance(modes, (list, tuple)):
        modes = (modes,)
    return sum(
        0.25 * (2 * m.nbar + 1) * (m.eta_emit - m.eta_exc) ** 2 * (m.frequency * T_tilde) ** 2
        for m in modes
    )


def random_error_general(mode, lifetime, w, kappa_convention=KappaConvention.TABLE):
    """(κ/2)(2n̄+1)·ω^R·ω·τ²·W(w) for one mode of one atom."""
    convention = KappaConvention.parse(kappa_convention)
    return (
        0.5
        * convention.kappa
        * (2 * mode.nbar + 1)
        * mode.recoil_frequency
        * mode.frequency
        * lifetime**2
        * window_variance_factor(w)
    )


def doppler_errors(species, ell, w, kappa_convention=KappaConvention.TABLE) -> DopplerErrors:
    """Pair totals at the Doppler limit with |k - k'| = |k|: ½ℓ²ω^{ΔR}τ and κWω^Rτ."""
    if ell < 0:
        raise ValueError(f"ell must be >= 0, got {ell}")
    convention = KappaConvention.parse(kappa_convention)
    omega_r = recoil_frequency(species)
    tau = species.excited_lifetime
    timebin = 2 * 0.25 * ell**2 * omega_r * tau
    random = convention.kappa * window_variance_factor(w) * omega_r * tau
    return DopplerErrors(timebin, random)


def timebin_overlap_error(ell):
    """Photonic error e^{-ℓ} from wavepacket tails crossing into the other time bin."""
    if ell < 0:
        raise ValueError(f"ell must be >= 0, got {ell}")
    return math.exp(-ell)


def solve_timebin_length(species):
    """ℓ* where the overlap error e^{-ℓ} equals the pair recoil error ½ℓ²ω^{ΔR}τ."""
    rate = recoil_frequency(species) * species.excited_lifetime

    def residual(ell):
        return math.exp(-ell) - 0.5 * ell**2 * rate

    lo, hi = ELL_BRACKET
    if residual(lo) * residual(hi) > 0:
        raise RootBracketError(
            f"{species.name}: no time-bin length in [{lo}, {hi}] balances the errors "
            f"(omega_R tau = {rate:.3e})"
        )
    ell, info = bisect(residual, lo, hi, xtol=1e-14, maxiter=200, full_output=True)
    logger.debug("%s: ell=%.12f after %d bisections", species.name, ell, info.iterations)
    return ell


def generate_table1(w=2.0, kappa_convention=KappaConvention.TABLE, species=None):
    """One row per species: ω^R/2π, 2E^T at the balanced time-bin length and 2E^R."""
    convention = KappaConvention.parse(kappa_convention)
    rows = []
    for entry in species or builtin_species():
        ell = solve_timebin_length(entry)
        errors = doppler_errors(entry, ell, w, convention)
        rows.append(
            ErrorBudgetRow(
                species_label=entry.name,
                recoil_frequency_khz=recoil_frequency(entry) / KHZ,
                timebin_error=errors.timebin,
                random_error=errors.random,
                timebin_length_ell=ell,
                convention=convention,
            )
        )
    return rows


def _modes_with_lifetimes(spec):
    for emitter in (spec.emitter_a, spec.emitter_b):
        for mode in emitter.modes:
            yield mode, emitter.lifetime


def closed_form_infidelity(spec, kappa_convention=KappaConvention.ORACLE):
    """1 - F from the small-parameter closed forms, summed over every mode of both emitters.

    T̃ is taken per mode from the time-bin delay; W uses T_Δ in units of each emitter's
    lifetime with an unbounded detector window.
    """
    convention = KappaConvention.parse(kappa_convention)
    total = 0.0
    for mode, lifetime in _modes_with_lifetimes(spec):
        w = spec.windows.w(lifetime)
        total += timebin_error_general(mode, timebin_residual(mode.frequency, spec.timebin_delay))
        total += random_error_general(mode, lifetime, w, convention)
    return total


class KappaEstimate(NamedTuple):
    value: float
    stderr: float


def measure_kappa(infidelity, spec, stderr=0.0) -> KappaEstimate:
    """κ that makes the closed form reproduce ``infidelity`` (time-bin part removed first).

    ``stderr`` is the standard error of ``infidelity``; κ is linear in it.
    """
    timebin = 0.0
    unit_random = 0.0
    for mode, lifetime in _modes_with_lifetimes(spec):
        timebin += timebin_error_general(mode, timebin_residual(mode.frequency, spec.timebin_delay))
        unit_random += random_error_general(
            mode, lifetime, spec.windows.w(lifetime), KappaConvention.ORACLE
        )
    if unit_random <= 0:
        raise ValueError("random-emission error vanishes for this configuration; kappa undefined")
    return KappaEstimate((infidelity - timebin) / unit_random, stderr / unit_random)
