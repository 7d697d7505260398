"""Sensing/pilot scheduling: optimize, sweep, validate and compare baselines."""
import argparse
import sys

from dualscale.config import set_runtime_config
from dualscale.errors import InfeasibleSensing, ScenarioError, ValidationBreach
from dualscale.jobs import (
    configure_logging,
    run_baselines,
    run_optimize,
    run_sweep,
    run_validate,
    with_seed,
    write_csv,
    write_json,
)
from dualscale.montecarlo import MIN_SAMPLES, SINR_TOLERANCE
from dualscale.scenario import SweepSpec, load_scenario, parse_counts, parse_values

EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_VALIDATION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    parser = _Parser()
    parser.add_argument("command", choices=["optimize", "sweep", "validate", "baselines"])
    parser.add_argument("--scenario", default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--samples", type=int, default=200_000)
    parser.add_argument("--axis", default="gamma")
    parser.add_argument(
        "--values",
        default=None,
        help=(
            "comma-separated axis values. Gamma values use the scenario's gamma_unit (rad2 by default). "
            "With a 1 deg angular spread every rad2 value from 0.05 to 0.5 is looser than the PSD floor "
            "on T_l, so such a sweep comes out flat; set gamma_unit to deg2 to see the CRB trend."
        ),
    )
    parser.add_argument("--fixed-M", dest="fixed_m", default="1,7,20")
    parser.add_argument("--workers", type=int, default=None)
    return parser


def _optimize(args, scenario) -> int:
    result = run_optimize(scenario, workers=args.workers)
    if args.out:
        write_json(args.out, result)
    plan = result["plan"]
    print(f"[dualscale-optimize] T_l_us={plan['T_l_us']:.6f} M={plan['M']} N_m={plan['N_m']}")
    print(f"[dualscale-optimize] rate_bitHz={result['rate_bitHz']:.6f} T_l_min_us={result['T_l_min_us']:.6f}")
    print(f"[dualscale-optimize] outer_loops={result['outer_loops']}")
    return 0


def _sweep(args, scenario) -> int:
    if args.values is None:
        raise ScenarioError("values", "required for sweep")
    spec = SweepSpec(axis=args.axis, values=parse_values(args.values), fixed_M=parse_counts(args.fixed_m, "fixed-M"))
    result = run_sweep(scenario, spec, workers=args.workers)
    if args.out:
        write_csv(args.out, result["header"], result["rows"])
    print(f"[dualscale-sweep] axis={spec.axis} rows={len(result['rows'])}")
    print(f"[dualscale-sweep] header={','.join(result['header'])}")
    return 0


def _validate(args, scenario) -> int:
    if args.samples < MIN_SAMPLES:
        raise ScenarioError("samples", f"at least {MIN_SAMPLES} required, got {args.samples}")
    result = run_validate(scenario, args.samples, workers=args.workers)
    if args.out:
        write_json(args.out, result)
    worst = max(r["relative_error"] for r in result["reports"])
    print(f"[dualscale-validate] samples={args.samples} reports={len(result['reports'])} worst_error={worst:.4f}")
    if result["failures"]:
        raise ValidationBreach([tuple(pair) for pair in result["failures"]], SINR_TOLERANCE)
    print("[dualscale-validate] passed=true")
    return 0


def _baselines(args, scenario) -> int:
    result = run_baselines(scenario, workers=args.workers)
    if args.out:
        write_json(args.out, result)
    for name in ("proposed", "ssu", "fsu", "rba"):
        print(f"[dualscale-baselines] {name} rate_bitHz={result[name]['rate_bitHz']:.6f} M={result[name]['plan']['M']}")
    return 0


COMMANDS = {"optimize": _optimize, "sweep": _sweep, "validate": _validate, "baselines": _baselines}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    configure_logging()
    if args.workers is not None:
        set_runtime_config({"DUALSCALE_WORKERS": args.workers})
    try:
        scenario = with_seed(load_scenario(args.scenario), args.seed)
        return COMMANDS[args.command](args, scenario)
    except InfeasibleSensing as exc:
        print(f"[dualscale-{args.command}] infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValidationBreach as exc:
        print(f"[dualscale-{args.command}] validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"[dualscale-{args.command}] error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
