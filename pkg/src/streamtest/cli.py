"""Command-line entry point: ``streamtest <subcommand> ...``.

Exit codes: 0 success, 2 invalid regime, 3 ledger breach, 4 calibration missing.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .calibration import Calibration, CalibrationMissing, CalibrationScale, calibrate_constants, default_calibration
from .core import ProblemParams, RegimeError, make_paninski_far, make_point_mass, make_uniform
from .harness import (
    FAMILIES,
    ExperimentSpec,
    auto_sample_size,
    run_experiment,
    sweep_tradeoff,
    write_csv,
)

EXIT_OK = 0
EXIT_REGIME = 2
EXIT_BREACH = 3
EXIT_CALIBRATION = 4


def _family_options(values: list[str] | None, pmf_file: str | None) -> dict:
    opts: dict = {}
    for item in values or []:
        key, _, val = item.partition("=")
        opts[key.replace("-", "_")] = val
    if pmf_file:
        opts["path"] = pmf_file
    return opts


def _add_common(p: argparse.ArgumentParser, algos: tuple[str, ...]) -> None:
    p.add_argument("--config", help="JSON experiment spec; flags override its fields")
    p.add_argument("--k", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--n", type=int, help="stream length (default: calibrated rate)")
    p.add_argument("--mem-bits", type=int, dest="m")
    p.add_argument("--algo", choices=algos)
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--family-param", action="append", metavar="KEY=VALUE")
    p.add_argument("--pmf-file")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--calibration", help="calibration JSON (default: bundled record)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="fill mean_runtime_ms (breaks byte-identical output)")


def _load_calibration(path: str | None) -> Calibration:
    return Calibration.load(path) if path else default_calibration()


def _spec_from_args(args: argparse.Namespace, algo_default: str, calibration: Calibration) -> ExperimentSpec:
    base: dict = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    params = dict(base.get("params", {}))
    for name in ("k", "eps", "n", "m"):
        if getattr(args, name) is not None:
            params[name] = getattr(args, name)
    missing = [x for x in ("k", "eps", "m") if x not in params]
    if missing:
        raise SystemExit(f"missing required parameters: {', '.join(missing)}")
    algo = args.algo or base.get("algo") or algo_default
    if params.get("n") is None:
        params["n"] = auto_sample_size(algo, params["k"], params["eps"], params["m"], calibration)
    family_params = dict(base.get("family_params", {}))
    family_params.update(_family_options(args.family_param, args.pmf_file))
    reference_family = base.get("reference_family", "uniform")
    if getattr(args, "p_family", None):
        reference_family = args.p_family
    return ExperimentSpec(
        algo=algo,
        params=ProblemParams(**params),
        family=args.family or base.get("family", "uniform"),
        trials=args.trials if args.trials is not None else base.get("trials", 100),
        master_seed=args.seed if args.seed is not None else base.get("master_seed", 0),
        family_params=family_params,
        reference_family=reference_family,
        reference_params=base.get("reference_params", {}),
        output=args.out or base.get("output"),
        record_timing=args.timing or base.get("record_timing", False),
    )


def _cmd_test(args: argparse.Namespace, algo_default: str) -> int:
    calibration = _load_calibration(args.calibration)
    spec = _spec_from_args(args, algo_default, calibration)
    report = run_experiment(spec, calibration, workers=args.workers)
    if not spec.output:
        sys.stdout.write(write_csv([report]))
    if report.failed:
        print(f"ledger breach in {len(report.breaches)} trial(s): {report.breaches[0]}", file=sys.stderr)
        return EXIT_BREACH
    return EXIT_OK


def _parse_grid(text: str) -> list[tuple[int, int]]:
    grid = []
    for item in text.split(","):
        m, _, n = item.strip().partition(":")
        grid.append((int(m), int(n)))
    return grid


def _cmd_sweep(args: argparse.Namespace) -> int:
    calibration = _load_calibration(args.calibration)
    if args.grid:
        grid = _parse_grid(args.grid)
    else:
        grid = [(m, n) for m in args.m_values for n in args.n_values]
    result = sweep_tradeoff(grid, args.k, args.eps, args.algo, args.trials, args.seed, calibration, out=args.out)
    if not args.out:
        sys.stdout.write(result.to_csv())
    print(f"monotone frontier: {result.monotone}", file=sys.stderr)
    if any(r["status"] == "LEDGER_BREACH" for r in result.rows):
        return EXIT_BREACH
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    scale = CalibrationScale()
    if args.quick:
        scale = CalibrationScale(partition_trials=300, power_replicates=500, null_replicates=4000)
    record = calibrate_constants(scale, seed=args.seed)
    text = json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(
        f"c1={record.c1} c2={record.c2} delta={record.delta} R={record.repetitions} "
        f"c4_identity={record.c4_identity} c4_closeness={record.c4_closeness} "
        f"large_gap={record.large_gap_constant}",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace) -> int:
    from .compression import contraction_probability_oracle
    from .oracles import exact_unseen_moments, monte_carlo_unseen, variance_bound

    ok = True
    if args.check in ("moments", "all"):
        mean, var = exact_unseen_moments(args.k, args.s)
        mc = monte_carlo_unseen(args.k, args.s, args.batches, args.seed)
        z = mc.z_score(mean)
        bound = variance_bound(args.k, args.s)
        passed = abs(z) <= 4 and var <= bound
        ok &= passed
        print(f"moments k={args.k} s={args.s}: mean={mean:.6f} mc={mc.mean:.6f} z={z:+.2f} "
              f"var={var:.3e} bound={bound:.3e} {'PASS' if passed else 'FAIL'}")
    if args.check in ("contraction", "all"):
        cal = _load_calibration(args.calibration)
        point = contraction_probability_oracle(make_point_mass(6), make_uniform(6), 2, 0, args.seed, cal.c1)
        far = contraction_probability_oracle(
            make_paninski_far(8, 0.4), make_uniform(8), 4, args.trials, args.seed, cal.c1, exhaustive=False
        )
        passed = point == 1.0 and far >= 0.05
        ok &= passed
        print(f"contraction c1={cal.c1}: pointmass(k=6,k'=2) exact={point:.4f} "
              f"paninski(k=8,k'=4) sampled={far:.4f} {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamtest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test-uniformity", help="error rates of a uniformity tester")
    _add_common(p, ("batch", "compress"))
    p.set_defaults(func=lambda a: _cmd_test(a, "batch"))

    p = sub.add_parser("test-closeness", help="error rates of the compressed closeness tester")
    _add_common(p, ("closeness",))
    p.add_argument("--p-family", choices=FAMILIES, help="family of the first stream (default uniform)")
    p.set_defaults(func=lambda a: _cmd_test(a, "closeness"))

    p = sub.add_parser("sweep", help="null/far error rates over a grid of (m, n)")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--algo", choices=("batch", "compress", "closeness"), default="batch")
    p.add_argument("--grid", help="comma-separated m:n pairs")
    p.add_argument("--m-values", type=int, nargs="+", default=[])
    p.add_argument("--n-values", type=int, nargs="+", default=[])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--calibration")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("calibrate", help="recompute the calibration record")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--quick", action="store_true", help="smaller replicate counts")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("oracle", help="cross-check testers against exact oracles")
    p.add_argument("--check", choices=("moments", "contraction", "all"), default="all")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--s", type=int, default=50)
    p.add_argument("--batches", type=int, default=100_000)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calibration")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RegimeError as exc:
        print(f"invalid regime ({exc.kind}): {exc}", file=sys.stderr)
        return EXIT_REGIME
    except CalibrationMissing as exc:
        print(f"calibration missing: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION


if __name__ == "__main__":
    sys.exit(main())
