"""Run configuration: one JSON document in human units, validated and converted to SI."""

import copy
import json
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from recoil.atoms import (
    EmitterSpec,
    ModeSpec,
    Species,
    build_mode,
    check_mode_matrix,
    doppler_nbar,
    lookup_species,
    make_registry,
)
from recoil.errors import ConfigError, UnknownSpeciesError
from recoil.herald import BeamsplitterSpec, ProtocolSpec
from recoil.quadrature import QuadratureSettings
from recoil.temporal import DetectionWindows

logger = logging.getLogger(__name__)

NS = 1e-9
FREQUENCY_UNITS = {
    "Hz_linear": 2 * math.pi * 1e3,
    "rad_per_s": 1e3,
}
OUTPUT_FORMATS = ("csv", "json", "markdown")

# Allowed keys per section; a nested dict describes a sub-section, ``None`` a leaf.
_MODE_KEYS = {
    "frequency_khz": None,
    "frequency_unit": None,
    "nbar": None,
    "axis": None,
    "participation": None,
    "eta_emit": None,
    "eta_exc": None,
}
_EMITTER_KEYS = {
    "species": None,
    "k_emit_direction": None,
    "k_exc_direction": None,
    "excite_prob": None,
    "collect_prob": None,
    "mode_participations": None,
    "chain_index": None,
    "modes": [_MODE_KEYS],
}
SCHEMA = {
    "species": [{"name": None, "mass_amu": None, "wavelength_nm": None, "lifetime_ns": None}],
    "emitters": {"A": _EMITTER_KEYS, "B": _EMITTER_KEYS},
    "protocol": {
        "timebin_ns": None,
        "detector_efficiency": None,
        "beamsplitter": {"imbalance": None, "transmission": None, "reflection": None},
    },
    "windows": {
        "w": None,
        "difference_window_ns": None,
        "detector_window_ns": None,
        "known_offset_ns": None,
    },
    "quadrature": {"nodes": None, "max_nodes": None, "rtol": None, "atol": None},
    "mc": {"samples": None, "seed": None, "workers": None},
    "rewind": {"efficiency": None, "pairs": None, "trials": None},
    "sweep": {"name": None, "values": None},
    "output": {"format": None, "path": None},
}

# Setting one key of a pair through an override removes the other.
_EXCLUSIVE = {
    ("windows", "w"): [("windows", "difference_window_ns")],
    ("windows", "difference_window_ns"): [("windows", "w")],
    ("protocol", "beamsplitter", "imbalance"): [
        ("protocol", "beamsplitter", "transmission"),
        ("protocol", "beamsplitter", "reflection"),
    ],
    ("protocol", "beamsplitter", "transmission"): [("protocol", "beamsplitter", "imbalance")],
    ("protocol", "beamsplitter", "reflection"): [("protocol", "beamsplitter", "imbalance")],
}


@dataclass(frozen=True)
class MonteCarloSettings:
    samples: int = 1_000_000
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class RewindSettings:
    efficiency: float = 1.0
    pairs: int = 8
    trials: int = 1000


@dataclass(frozen=True)
class SweepSpec:
    name: str
    values: tuple


@dataclass(frozen=True)
class OutputSettings:
    format: str | None = None
    path: str | None = None


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    protocol: ProtocolSpec
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)
    mc: MonteCarloSettings | None = None
    rewind: RewindSettings | None = None
    sweep: SweepSpec | None = None
    output: OutputSettings = field(default_factory=OutputSettings)

    def with_override(self, path, value):
        """Config with the dotted ``path`` replaced by ``value``, validated from scratch."""
        return build_config(override(self.raw, path, value))


def load_config(path):
    """Load and validate a run configuration file.

    Args:
        path: Path to the JSON document

    Returns:
        RunConfig: The validated configuration
    """
    path = Path(path)
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    logger.debug("loaded config %s", path)
    return build_config(raw)


def check_keys(raw, schema=SCHEMA, prefix=""):
    """Raise ConfigError naming the first key not present in ``schema``."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    for key, value in raw.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if key not in schema:
            raise ConfigError(f"unknown key '{dotted}'")
        sub = schema[key]
        if isinstance(sub, dict):
            check_keys(value, sub, dotted)
        elif isinstance(sub, list):
            if not isinstance(value, list):
                raise ConfigError(f"{dotted}: expected a list")
            for i, item in enumerate(value):
                check_keys(item, sub[0], f"{dotted}[{i}]")


def override(raw, path, value):
    keys = tuple(path.split("."))
    schema = SCHEMA
    for key in keys:
        if not isinstance(schema, dict) or key not in schema:
            raise ConfigError(f"cannot sweep unknown key '{path}'")
        schema = schema[key]
    if schema is not None:
        raise ConfigError(f"sweep target '{path}' is a section, not a value")

    updated = copy.deepcopy(raw)
    node = updated
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value
    for other in _EXCLUSIVE.get(keys, ()):
        parent = updated
        for key in other[:-1]:
            parent = parent.get(key, {})
        parent.pop(other[-1], None)
    return updated


def _number(section, key, default=None, *, dotted, minimum=None, maximum=None):
    value = section.get(key, default)
    if value is None:
        raise ConfigError(f"{dotted}.{key} is required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{dotted}.{key} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{dotted}.{key} must be finite")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{dotted}.{key} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{dotted}.{key} must be <= {maximum}, got {value}")
    return value


def _integer(section, key, default, *, dotted, minimum):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{dotted}.{key} must be an integer >= {minimum}, got {value!r}")
    return value


@contextmanager
def _invalid(dotted):
    """Re-raise domain ValueErrors as ConfigError prefixed with the config path."""
    try:
        yield
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"{dotted}: {e}") from e


def _registry(raw):
    extra = []
    for i, entry in enumerate(raw.get("species", [])):
        dotted = f"species[{i}]"
        if "name" not in entry:
            raise ConfigError(f"{dotted}.name is required")
        with _invalid(dotted):
            extra.append(
                Species.from_human(
                    entry["name"],
                    _number(entry, "mass_amu", dotted=dotted),
                    _number(entry, "wavelength_nm", dotted=dotted),
                    _number(entry, "lifetime_ns", dotted=dotted),
                )
            )
    return make_registry(extra)


def _mode(entry, species, geometry, dotted):
    unit = entry.get("frequency_unit")
    if unit not in FREQUENCY_UNITS:
        raise ConfigError(
            f"{dotted}.frequency_unit must be one of {sorted(FREQUENCY_UNITS)}, got {unit!r}"
        )
    frequency = _number(entry, "frequency_khz", dotted=dotted) * FREQUENCY_UNITS[unit]
    if frequency <= 0:
        raise ConfigError(f"{dotted}.frequency_khz must be > 0")

    if entry.get("nbar", "doppler") == "doppler":
        nbar = doppler_nbar(frequency, species.excited_lifetime)
    else:
        nbar = _number(entry, "nbar", dotted=dotted, minimum=0)
    participation = _number(entry, "participation", 1.0, dotted=dotted, minimum=-1, maximum=1)

    has_eta = "eta_emit" in entry or "eta_exc" in entry
    if has_eta and "axis" in entry:
        raise ConfigError(f"{dotted}: give either axis or eta_emit/eta_exc, not both")
    with _invalid(dotted):
        if has_eta:
            return ModeSpec(
                frequency=frequency,
                nbar=nbar,
                eta_emit=_number(entry, "eta_emit", 0.0, dotted=dotted),
                eta_exc=_number(entry, "eta_exc", 0.0, dotted=dotted),
                participation=participation,
            )
        return build_mode(
            species,
            frequency,
            axis=tuple(entry.get("axis", geometry["k_emit_direction"])),
            participation=participation,
            nbar=nbar,
            **geometry,
        )


def _chain_participations(raw, modes, dotted):
    """Fill each mode's participation from the emitter's row of a chain mode matrix.

    ``mode_participations[q][i]`` is emitter q's participation in mode i; ``chain_index``
    selects this emitter's row.
    """
    matrix = raw.get("mode_participations")
    if matrix is None:
        if "chain_index" in raw:
            raise ConfigError(f"{dotted}.chain_index needs mode_participations")
        return modes
    with _invalid(f"{dotted}.mode_participations"):
        b = check_mode_matrix(matrix)
    index = _integer(raw, "chain_index", 0, dotted=dotted, minimum=0)
    if index >= b.shape[0]:
        raise ConfigError(f"{dotted}.chain_index {index} is outside a {b.shape[0]}-emitter chain")
    if b.shape[1] != len(modes):
        raise ConfigError(
            f"{dotted}.mode_participations has {b.shape[1]} modes, modes lists {len(modes)}"
        )
    if any("participation" in m for m in modes):
        raise ConfigError(f"{dotted}: give either mode_participations or per-mode participation")
    return [m | {"participation": float(b[index, i])} for i, m in enumerate(modes)]


def _emitter(raw, registry, dotted):
    if "species" not in raw:
        raise ConfigError(f"{dotted}.species is required")
    try:
        species = lookup_species(raw["species"], registry)
    except UnknownSpeciesError as e:
        raise ConfigError(f"{dotted}.species: {e}") from e

    geometry = {
        "k_emit_direction": tuple(raw.get("k_emit_direction", (0.0, 0.0, 1.0))),
        "k_exc_direction": tuple(raw.get("k_exc_direction", (1.0, 0.0, 0.0))),
    }
    modes = raw.get("modes")
    if not modes:
        raise ConfigError(f"{dotted}.modes must list at least one mode")
    modes = _chain_participations(raw, modes, dotted)
    with _invalid(dotted):
        built = tuple(
            _mode(m, species, geometry, f"{dotted}.modes[{i}]") for i, m in enumerate(modes)
        )
        return EmitterSpec(
            species=species,
            modes=built,
            excite_prob=_number(raw, "excite_prob", 1.0, dotted=dotted, minimum=0, maximum=1),
            collect_prob=_number(raw, "collect_prob", 1.0, dotted=dotted, minimum=0, maximum=1),
            **geometry,
        )


def _beamsplitter(raw):
    dotted = "protocol.beamsplitter"
    has_pair = "transmission" in raw or "reflection" in raw
    if "imbalance" in raw and has_pair:
        raise ConfigError(f"{dotted}: give either imbalance or transmission/reflection")
    with _invalid(dotted):
        if has_pair:
            return BeamsplitterSpec(
                _number(raw, "transmission", dotted=dotted),
                _number(raw, "reflection", dotted=dotted),
            )
        return BeamsplitterSpec.from_imbalance(
            _number(raw, "imbalance", 0.0, dotted=dotted, minimum=-1, maximum=1)
        )


def _windows(raw, lifetime):
    dotted = "windows"
    if ("w" in raw) == ("difference_window_ns" in raw):
        raise ConfigError("windows: give exactly one of w or difference_window_ns")
    if "w" in raw:
        difference = _number(raw, "w", dotted=dotted) * lifetime
    else:
        difference = _number(raw, "difference_window_ns", dotted=dotted) * NS
    detector = math.inf
    if raw.get("detector_window_ns") is not None:
        detector = _number(raw, "detector_window_ns", dotted=dotted) * NS
    with _invalid(dotted):
        return DetectionWindows(
            difference_window=difference,
            detector_window=detector,
            known_offset=_number(raw, "known_offset_ns", 0.0, dotted=dotted, minimum=0) * NS,
        )


def _settings(raw):
    quad, base = raw.get("quadrature", {}), QuadratureSettings()
    with _invalid("quadrature"):
        quadrature = QuadratureSettings(
            nodes=_integer(quad, "nodes", base.nodes, dotted="quadrature", minimum=2),
            max_nodes=_integer(quad, "max_nodes", base.max_nodes, dotted="quadrature", minimum=4),
            rtol=_number(quad, "rtol", base.rtol, dotted="quadrature", minimum=0),
            atol=_number(quad, "atol", base.atol, dotted="quadrature", minimum=0),
        )

    mc = None
    if "mc" in raw:
        section, base = raw["mc"], MonteCarloSettings()
        mc = MonteCarloSettings(
            samples=_integer(section, "samples", base.samples, dotted="mc", minimum=1),
            seed=_integer(section, "seed", base.seed, dotted="mc", minimum=0),
            workers=_integer(section, "workers", base.workers, dotted="mc", minimum=1),
        )

    rewind = None
    if "rewind" in raw:
        section, base = raw["rewind"], RewindSettings()
        rewind = RewindSettings(
            efficiency=_number(section, "efficiency", base.efficiency, dotted="rewind", minimum=0),
            pairs=_integer(section, "pairs", base.pairs, dotted="rewind", minimum=1),
            trials=_integer(section, "trials", base.trials, dotted="rewind", minimum=1),
        )
    return quadrature, mc, rewind


def build_config(raw):
    """Validate a parsed JSON document and convert it to a RunConfig."""
    check_keys(raw)
    registry = _registry(raw)

    emitters = raw.get("emitters")
    if not emitters or "A" not in emitters:
        raise ConfigError("emitters.A is required")
    emitter_a = _emitter(emitters["A"], registry, "emitters.A")
    # B defaults to a copy of A
    emitter_b = _emitter(emitters["B"], registry, "emitters.B") if "B" in emitters else emitter_a

    protocol = raw.get("protocol", {})
    with _invalid("protocol"):
        spec = ProtocolSpec(
            emitter_a=emitter_a,
            emitter_b=emitter_b,
            windows=_windows(raw.get("windows", {}), emitter_a.lifetime),
            beamsplitter=_beamsplitter(protocol.get("beamsplitter", {})),
            timebin_delay=_number(protocol, "timebin_ns", 0.0, dotted="protocol", minimum=0) * NS,
            detector_efficiency=_number(
                protocol, "detector_efficiency", 1.0, dotted="protocol", minimum=0, maximum=1
            ),
        )
    quadrature, mc, rewind = _settings(raw)

    sweep = None
    if "sweep" in raw:
        name, values = raw["sweep"].get("name"), raw["sweep"].get("values")
        if not isinstance(name, str) or not isinstance(values, list):
            raise ConfigError("sweep needs a dotted 'name' and a list of 'values'")
        override(raw, name, None)
        sweep = SweepSpec(name, tuple(values))

    out = raw.get("output", {})
    fmt = out.get("format")
    if fmt is not None and fmt not in OUTPUT_FORMATS:
        raise ConfigError(f"output.format must be one of {OUTPUT_FORMATS}, got {fmt!r}")

    return RunConfig(
        raw=raw,
        protocol=spec,
        quadrature=quadrature,
        mc=mc,
        rewind=rewind,
        sweep=sweep,
        output=OutputSettings(fmt, out.get("path")),
    )
