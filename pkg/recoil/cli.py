"""Main CLI entry point for the recoil tool."""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from recoil.budget import (
    KappaConvention,
    closed_form_infidelity,
    generate_table1,
    measure_kappa,
)
from recoil.config import load_config
from recoil.errors import ConfigError, QuadratureError, RecoilError
from recoil.herald import HeraldChannel, discard_probability, fidelity_all, phase_contrast_loss
from recoil.montecarlo import mc_protocol, propose_detection_times
from recoil.output import (
    OutputFormatter,
    bell_record,
    channel_records,
    format_sweep,
    format_table,
    number,
    to_json,
)
from recoil.rewind import fidelity_with_rewind_all, verify_disentangle
from recoil.temporal import window_variance_factor

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_WRITE = 3
EXIT_QUADRATURE = 4
EXIT_ORACLE = 5

ORACLE_SIGMAS = 5.0
REWIND_TOLERANCE = 1e-12
# same-detector coherence carries no beamsplitter imbalance factor
KAPPA_CHANNEL = HeraldChannel.SAME_1100


def build_parser():
    parser = argparse.ArgumentParser(
        prog="recoil",
        description="Photon-recoil error budget for heralded two-photon remote entanglement",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  recoil table1                                  # Species table, markdown
  recoil table1 --format csv --kappa oracle      # Oracle constant, CSV
  recoil fidelity --config link.json             # Per-channel fidelity by quadrature
  recoil sweep --config sweep.json --workers 4   # Grid over one config value
  recoil oracle-compare --config link.json --samples 1000000 --seed 7
  recoil rewind-check --config link.json --samples 1000
        """,
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="More diagnostics on stderr (-vv for debug)"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    table = commands.add_parser("table1", help="Recoil errors for the builtin species")
    table.add_argument("--format", choices=("csv", "json", "markdown"), default="markdown")
    table.add_argument("--w", type=float, default=2.0, help="Difference window in lifetimes")
    table.add_argument(
        "--kappa",
        choices=[c.value for c in KappaConvention],
        default=KappaConvention.TABLE.value,
        help="Constant used for the random-emission column",
    )
    table.add_argument("--out", help="Write the table here instead of stdout")

    fidelity = commands.add_parser("fidelity", help="Bell-state fidelity for every herald channel")
    fidelity.add_argument("--config", required=True)
    fidelity.add_argument("--format", choices=("json",), default="json")
    fidelity.add_argument("--out")

    sweep = commands.add_parser("sweep", help="Fidelity over a grid of one config value")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--out")

    oracle = commands.add_parser("oracle-compare", help="Quadrature vs Monte Carlo vs closed form")
    oracle.add_argument("--config", required=True)
    oracle.add_argument("--samples", type=int)
    oracle.add_argument("--seed", type=int)
    oracle.add_argument("--workers", type=int)
    oracle.add_argument("--out")

    rewind = commands.add_parser("rewind-check", help="Verify recoil rewind on sampled events")
    rewind.add_argument("--config", required=True)
    rewind.add_argument("--samples", type=int, help="Thermal draws per detection-time pair")
    rewind.add_argument("--seed", type=int)
    rewind.add_argument("--out")
    return parser


def configure_logging(verbosity):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _emit(args, text, path=None):
    formatter = OutputFormatter(args.out or path)
    try:
        formatter.write(text)
    except OSError as e:
        print(f"ERROR: cannot write output: {e}", file=sys.stderr)
        return EXIT_WRITE
    return EXIT_OK


def _warnings(results):
    return sorted({w for result in results.values() for w in result.warnings})


def cmd_table1(args):
    if args.w < 0:
        print(f"ERROR: --w must be >= 0, got {args.w}", file=sys.stderr)
        return EXIT_USAGE
    convention = KappaConvention.parse(args.kappa)
    rows = generate_table1(args.w, convention)
    return _emit(args, format_table(rows, args.format, args.w, convention))


def _fidelity_record(config):
    spec = config.protocol
    results = fidelity_all(spec, config.quadrature, strict=False)
    lifetime = spec.emitter_a.lifetime
    record = {
        "command": "fidelity",
        "yield_prob": number(spec.window_yield()),
        "W_dimless": number(window_variance_factor(spec.windows.w(lifetime))),
        "timebin_delay_ns": number(spec.timebin_delay * 1e9),
        "discard_probability_prob": number(discard_probability(spec, config.quadrature)),
        "channels": channel_records(results),
    }
    warnings = _warnings(results)
    if config.rewind is not None:
        rewound = fidelity_with_rewind_all(spec, config.rewind.efficiency, config.quadrature)
        record["rewind_efficiency_dimless"] = number(config.rewind.efficiency)
        record["channels_with_rewind"] = channel_records(rewound)
        warnings += _warnings(rewound)
    record["warnings"] = warnings
    return record


def cmd_fidelity(args):
    config = load_config(args.config)

    record = _fidelity_record(config)
    status = _emit(args, to_json(record), config.output.path)
    if status == EXIT_OK and record["warnings"]:
        return EXIT_QUADRATURE
    return status


def cmd_sweep(args):
    config = load_config(args.config)
    if config.sweep is None:
        print("ERROR: config has no sweep section", file=sys.stderr)
        return EXIT_USAGE
    if args.workers < 1:
        print(f"ERROR: --workers must be >= 1, got {args.workers}", file=sys.stderr)
        return EXIT_USAGE

    # Validate every grid point before computing any of them
    points = [config.with_override(config.sweep.name, value) for value in config.sweep.values]

    def evaluate(point):
        spec = point.protocol
        results = fidelity_all(spec, point.quadrature, strict=False)
        w = window_variance_factor(spec.windows.w(spec.emitter_a.lifetime))
        return results, spec.window_yield(), w, _warnings(results)

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            evaluated = list(pool.map(evaluate, points))
    else:
        evaluated = [evaluate(point) for point in points]

    rows = [(value, *result) for value, result in zip(config.sweep.values, evaluated)]
    text = format_sweep(config.sweep.name, list(HeraldChannel), rows)
    status = _emit(args, text, config.output.path)
    if status == EXIT_OK and any(row[-1] for row in rows):
        return EXIT_QUADRATURE
    return status


def _kappa_record(infidelity, spec, stderr=0.0):
    try:
        estimate = measure_kappa(infidelity, spec, stderr)
    except ValueError:
        return None
    return {"value_dimless": number(estimate.value), "stderr_dimless": number(estimate.stderr)}


def cmd_oracle_compare(args):
    config = load_config(args.config)
    if config.mc is None and args.samples is None:
        print("ERROR: oracle-compare needs an mc section or --samples", file=sys.stderr)
        return EXIT_USAGE
    samples = args.samples if args.samples is not None else config.mc.samples
    seed = args.seed if args.seed is not None else (config.mc.seed if config.mc else 0)
    workers = args.workers if args.workers is not None else (config.mc.workers if config.mc else 1)
    if samples < 1 or seed < 0 or workers < 1:
        print("ERROR: --samples and --workers must be >= 1, --seed >= 0", file=sys.stderr)
        return EXIT_USAGE

    spec = config.protocol
    efficiency = config.rewind.efficiency if config.rewind is not None else None

    # Step 1: quadrature
    if efficiency is None:
        quadrature = fidelity_all(spec, config.quadrature, strict=False)
    else:
        quadrature = fidelity_with_rewind_all(spec, efficiency, config.quadrature)

    # Step 2: Monte Carlo from one seeded stream
    report = mc_protocol(spec, samples, seed, workers=workers, rewind_efficiency=efficiency)

    # Step 3: compare channel by channel
    comparison = {}
    worst = 0.0
    for channel in HeraldChannel:
        q, m = quadrature[channel], report.channels[channel]
        difference = m.fidelity - q.fidelity
        sigma = m.fidelity_stderr or 0.0
        z = abs(difference) / sigma if sigma > 0 else (0.0 if abs(difference) <= 1e-12 else np.inf)
        worst = max(worst, z)
        comparison[channel.value] = {
            "quadrature": bell_record(q),
            "monte_carlo": bell_record(m),
            "difference_prob": number(difference),
            "difference_sigma": number(z),
        }

    # Step 4: closed forms and the measured constant
    q_ref, m_ref = quadrature[KAPPA_CHANNEL], report.channels[KAPPA_CHANNEL]
    record = {
        "command": "oracle-compare",
        "samples": samples,
        "seed": seed,
        "accepted": report.accepted,
        "rewind_efficiency_dimless": number(efficiency),
        "channels": comparison,
        "discard_probability_prob": number(report.discard_probability),
        "discard_probability_stderr_prob": number(report.discard_stderr),
        "closed_form_infidelity_prob": {
            c.value: number(closed_form_infidelity(spec, c)) for c in KappaConvention
        },
        "kappa_channel": KAPPA_CHANNEL.value,
        "kappa_quadrature": _kappa_record(q_ref.infidelity, spec),
        "kappa_monte_carlo": _kappa_record(m_ref.infidelity, spec, m_ref.fidelity_stderr or 0.0),
        "phase_contrast_loss_dimless": number(phase_contrast_loss(spec, config.quadrature)),
        "max_difference_sigma": number(worst),
        "tolerance_sigma": ORACLE_SIGMAS,
        "agree": bool(worst <= ORACLE_SIGMAS),
        "warnings": _warnings(quadrature),
    }
    status = _emit(args, to_json(record), config.output.path)
    if status != EXIT_OK:
        return status
    if not record["agree"]:
        print(f"ERROR: Monte Carlo and quadrature differ by {worst:.1f} sigma", file=sys.stderr)
        return EXIT_ORACLE
    if record["warnings"]:
        return EXIT_QUADRATURE
    return EXIT_OK


def _sample_pairs(spec, count, seed):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    pairs = []
    while len(pairs) < count:
        t_mu, t_nu, _, accepted = propose_detection_times(spec, 4 * count, rng)
        pairs += list(zip(t_mu[accepted], t_nu[accepted]))
    return pairs[:count]


def cmd_rewind_check(args):
    config = load_config(args.config)
    settings = config.rewind
    trials = args.samples if args.samples is not None else (settings.trials if settings else 1000)
    seed = args.seed if args.seed is not None else (config.mc.seed if config.mc else 0)
    pairs = settings.pairs if settings else 8
    if trials < 1 or seed < 0:
        print("ERROR: --samples must be >= 1 and --seed >= 0", file=sys.stderr)
        return EXIT_USAGE
    spec = config.protocol

    events = []
    worst = 0.0
    for i, (t_mu, t_nu) in enumerate(_sample_pairs(spec, pairs, seed)):
        stream = np.random.SeedSequence(seed, spawn_key=(1, i))
        deficit = verify_disentangle(spec, t_mu, t_nu, trials, stream)
        control = verify_disentangle(spec, t_mu, t_nu, trials, stream, plan_times=(t_nu, t_mu))
        worst = max(worst, deficit)
        events.append(
            {
                "t_mu_ns": number(t_mu * 1e9),
                "t_nu_ns": number(t_nu * 1e9),
                "deficit_dimless": number(deficit),
                "swapped_times_deficit_dimless": number(control),
            }
        )

    efficiency = settings.efficiency if settings else 1.0
    rewound = fidelity_with_rewind_all(spec, efficiency, config.quadrature)
    record = {
        "command": "rewind-check",
        "trials": trials,
        "seed": seed,
        "events": events,
        "max_deficit_dimless": number(worst),
        "tolerance_dimless": REWIND_TOLERANCE,
        "rewind_efficiency_dimless": number(efficiency),
        "channels_with_rewind": channel_records(rewound),
        "warnings": _warnings(rewound),
    }
    status = _emit(args, to_json(record), config.output.path)
    if status != EXIT_OK:
        return status
    if worst > REWIND_TOLERANCE:
        print(f"ERROR: rewind leaves a deficit of {worst:.3e}", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_QUADRATURE if record["warnings"] else EXIT_OK


COMMANDS = {
    "table1": cmd_table1,
    "fidelity": cmd_fidelity,
    "sweep": cmd_sweep,
    "oracle-compare": cmd_oracle_compare,
    "rewind-check": cmd_rewind_check,
}


def main(argv=None):
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_USAGE
    except QuadratureError as e:
        print(f"ERROR: {e} (estimate {e.estimate}, error bound {e.error_bound:.3e})", file=sys.stderr)
        return EXIT_QUADRATURE
    except RecoilError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        logger.debug("command failed", exc_info=True)
        return EXIT_USAGE


def cli():
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    cli()
