"""Atomic species, recoil frequencies, Lamb-Dicke parameters and motional modes.

All quantities are SI internally: kilograms, metres, seconds, radians per second.
Human units (amu, nm, ns, kHz) only appear in the ``from_human`` constructors and in
``recoil.config``.
"""

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from recoil.errors import UnknownSpeciesError

logger = logging.getLogger(__name__)

# CODATA 2018 values, fixed so the tabulated numbers are reproducible bit for bit.
HBAR = 1.054571817e-34
ATOMIC_MASS_UNIT = 1.66053906660e-27

UNIT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Species:
    """An emitting atom: mass, transition wavelength and excited-state lifetime (SI)."""

    name: str
    mass: float
    transition_wavelength: float
    excited_lifetime: float

    def __post_init__(self):
        for field in ("mass", "transition_wavelength", "excited_lifetime"):
            value = getattr(self, field)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{self.name}: {field} must be positive and finite, got {value}")

    @classmethod
    def from_human(cls, name, mass_amu, wavelength_nm, lifetime_ns):
        return cls(
            name=name,
            mass=mass_amu * ATOMIC_MASS_UNIT,
            transition_wavelength=wavelength_nm * 1e-9,
            excited_lifetime=lifetime_ns * 1e-9,
        )

    @property
    def wavenumber(self):
        """|k| = 2π/λ in 1/m."""
        return 2 * math.pi / self.transition_wavelength


@dataclass(frozen=True)
class ModeSpec:
    """One motional mode of one emitter.

    ``eta_emit`` and ``eta_exc`` already include the wavevector projection on the mode
    axis and the normal-mode participation, so the recoil kicks are iη' (excitation)
    and -iη e^{iωt} (emission).
    """

    frequency: float
    nbar: float
    eta_emit: float
    eta_exc: float
    participation: float = 1.0

    def __post_init__(self):
        if not (self.frequency > 0 and math.isfinite(self.frequency)):
            raise ValueError(f"mode frequency must be positive, got {self.frequency}")
        if not (self.nbar >= 0 and math.isfinite(self.nbar)):
            raise ValueError(f"mode nbar must be >= 0, got {self.nbar}")
        if abs(self.participation) > 1:
            raise ValueError(f"participation must satisfy |b| <= 1, got {self.participation}")
        if not (math.isfinite(self.eta_emit) and math.isfinite(self.eta_exc)):
            raise ValueError("Lamb-Dicke parameters must be finite")

    @property
    def recoil_frequency(self):
        """Emission recoil seen by this mode, η²ω (rad/s)."""
        return self.eta_emit**2 * self.frequency

    @property
    def diff_recoil_frequency(self):
        """Differential recoil seen by this mode, (η-η')²ω (rad/s)."""
        return (self.eta_emit - self.eta_exc) ** 2 * self.frequency

    def with_nbar(self, nbar):
        return ModeSpec(self.frequency, nbar, self.eta_emit, self.eta_exc, self.participation)


@dataclass(frozen=True)
class EmitterSpec:
    """An emitter: species, excitation/emission geometry and its motional modes."""

    species: Species
    modes: tuple
    k_emit_direction: tuple = (0.0, 0.0, 1.0)
    k_exc_direction: tuple = (1.0, 0.0, 0.0)
    excite_prob: float = 1.0
    collect_prob: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "k_emit_direction", tuple(_unit(self.k_emit_direction, "k_emit")))
        object.__setattr__(self, "k_exc_direction", tuple(_unit(self.k_exc_direction, "k_exc")))
        for field in ("excite_prob", "collect_prob"):
            value = getattr(self, field)
            if not 0 <= value <= 1:
                raise ValueError(f"{field} must lie in [0, 1], got {value}")

    @property
    def lifetime(self):
        return self.species.excited_lifetime


def _unit(vector, name):
    v = np.asarray(vector, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {v.shape}")
    norm = float(np.linalg.norm(v))
    if abs(norm - 1) > UNIT_TOLERANCE:
        raise ValueError(f"{name} must be a unit vector (|v| = {norm})")
    return v


def recoil_frequency(species, projection=1.0):
    """ħ(k·projection)²/2m in rad/s."""
    if abs(projection) > 1:
        raise ValueError(f"projection must satisfy |p| <= 1, got {projection}")
    k = species.wavenumber * projection
    return HBAR * k**2 / (2 * species.mass)


def diff_recoil_frequency(species, k_emit, k_exc, mode_axis, participation=1.0):
    """ħ[(k_emit - k_exc)·axis]² b²/2m with both wavevectors of length 2π/λ."""
    emit = _unit(k_emit, "k_emit")
    exc = _unit(k_exc, "k_exc")
    axis = _unit(mode_axis, "mode_axis")
    dk = species.wavenumber * float(np.dot(emit - exc, axis)) * participation
    return HBAR * dk**2 / (2 * species.mass)


def lamb_dicke(species, frequency, projection, participation=1.0):
    """η = k·projection·b·sqrt(ħ/2mω)."""
    if not frequency > 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    return (
        species.wavenumber
        * projection
        * participation
        * math.sqrt(HBAR / (2 * species.mass * frequency))
    )


def doppler_nbar(frequency, lifetime):
    """Doppler-limit occupation n̄ = 1/(2ωτ)."""
    if not (frequency > 0 and lifetime > 0):
        raise ValueError("frequency and lifetime must be positive")
    return 1.0 / (2 * frequency * lifetime)


def build_mode(
    species,
    frequency,
    axis=(0.0, 0.0, 1.0),
    k_emit_direction=(0.0, 0.0, 1.0),
    k_exc_direction=(1.0, 0.0, 0.0),
    participation=1.0,
    nbar=None,
):
    """Derive a ModeSpec from trap frequency and geometry.

    ``nbar=None`` selects the Doppler limit of the species. The default geometry puts
    the mode along the emission direction with the excitation beam perpendicular, so
    |(k - k')·axis| = |k| and the differential recoil equals the emission recoil.
    """
    axis = _unit(axis, "axis")
    eta_emit = lamb_dicke(
        species, frequency, float(np.dot(_unit(k_emit_direction, "k_emit"), axis)), participation
    )
    eta_exc = lamb_dicke(
        species, frequency, float(np.dot(_unit(k_exc_direction, "k_exc"), axis)), participation
    )
    if nbar is None:
        nbar = doppler_nbar(frequency, species.excited_lifetime)
    return ModeSpec(
        frequency=frequency,
        nbar=nbar,
        eta_emit=eta_emit,
        eta_exc=eta_exc,
        participation=participation,
    )


def check_mode_matrix(participations, tol=UNIT_TOLERANCE):
    """Validate Σ_q b_qi² = 1 for every mode i of an N-emitter participation matrix.

    ``participations[q][i]`` is the participation of emitter q in mode i.
    """
    b = np.asarray(participations, dtype=float)
    if b.ndim != 2:
        raise ValueError("participation matrix must be two-dimensional (emitters x modes)")
    norms = np.sum(b**2, axis=0)
    bad = np.flatnonzero(np.abs(norms - 1) > tol)
    if bad.size:
        raise ValueError(f"modes {bad.tolist()} are not normalised: sum b^2 = {norms[bad].tolist()}")
    return b


# (label, mass number, wavelength nm, lifetime ns)
_TABLE_SPECIES = (
    ("9Be+@313", 9, 313, 8.2),
    ("40Ca+@397", 40, 397, 6.8),
    ("40Ca+@866", 40, 866, 6.8),
    ("87Rb@780", 87, 780, 26),
    ("88Sr+@422", 88, 422, 7.8),
    ("88Sr+@1092", 88, 1092, 7.8),
    ("88Sr@461", 88, 461, 5.3),
    ("138Ba+@493", 138, 493, 7.9),
    ("138Ba+@650", 138, 650, 7.9),
    ("171Yb+@369", 171, 369, 8.1),
    ("171Yb@399", 171, 399, 5.5),
    ("171Yb@1389", 171, 1389, 330),
)


def builtin_species():
    """The twelve tabulated emitters, masses taken as mass number times u."""
    return tuple(
        Species.from_human(label, mass_number, wavelength, lifetime)
        for label, mass_number, wavelength, lifetime in _TABLE_SPECIES
    )


def make_registry(extra: Iterable[Species] = ()) -> dict:
    """Name -> Species for the builtin table plus user species (user entries win)."""
    registry = {species.name: species for species in builtin_species()}
    for species in extra:
        if species.name in registry:
            logger.debug("custom species %s overrides the builtin entry", species.name)
        registry[species.name] = species
    return registry


def lookup_species(name, registry: Mapping | None = None):
    registry = make_registry() if registry is None else registry
    try:
        return registry[name]
    except KeyError:
        known = ", ".join(sorted(registry))
        raise UnknownSpeciesError(f"unknown species '{name}' (known: {known})") from None

