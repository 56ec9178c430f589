"""Command-line entry point: gen, alloc, fit, abc and campaign subcommands.

Failures print one JSON record ``{"error": ..., "message": ...}`` to stderr
and exit with a nonzero status.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import allocator, harness, scaling_law, synthgen
from .curves import CurveSet, ModelSpec, read_curves, write_curves
from .preprocess import smooth_set
from .sources import RecordedCurveSource, SyntheticCurveSource


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", message, code=2)


def _fail(kind: str, message: str, code: int = 1):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    sys.exit(code)


def _noise(args) -> synthgen.NoiseConfig:
    return synthgen.NoiseConfig(args.noise, args.sigma2, args.weight)


def _add_noise_flags(p):
    p.add_argument("--noise", default="none", choices=[k.value for k in synthgen.NoiseKind])
    p.add_argument("--sigma2", type=float, default=0.0)
    p.add_argument("--weight", type=float, default=1.0)


def _sizes(args, rng) -> list[int]:
    if args.sizes:
        return [int(float(s)) for s in args.sizes]
    return synthgen.sample_model_sizes(rng, args.n_models)


def cmd_gen(args):
    rng = np.random.default_rng(args.seed)
    params = synthgen.preset(args.preset)
    src = SyntheticCurveSource(params, args.c_max, _noise(args), n_points=args.points, seed=args.seed)
    curves = [src.curve(ModelSpec(f"n{n}", n), args.c_max) for n in _sizes(args, rng)]
    curves = CurveSet([c for c in curves if len(c)])
    write_curves(curves, args.out)
    return {"written": args.out, "curves": len(curves)}


def cmd_alloc(args):
    if not args.budget > 0:
        raise ValueError("budget must be > 0")
    budget = int(round(args.budget * harness.PETA))
    if args.curves:
        data = read_curves(args.curves)
        if args.smooth:
            data = smooth_set(data, args.smooth)
        source = RecordedCurveSource(data)
        models = source.models
    else:
        rng = np.random.default_rng(args.seed)
        source = SyntheticCurveSource(synthgen.preset(args.preset), budget, _noise(args), seed=args.seed)
        models = [ModelSpec(f"n{n}", n) for n in _sizes(args, rng)]
    strat = harness.Strategy(args.strategy)
    cfg = allocator.AllocConfig(budget, args.eta, strat.surrogate, args.points, args.seed,
                                gp_restarts=args.restarts)
    runner = allocator.run_uniform if strat is harness.Strategy.UA else allocator.run_sh
    trace = runner(models, cfg, source)
    out = {
        "strategy": strat.value,
        "budget_flops": budget,
        "spent_flops": trace.spent,
        "selected": trace.selected,
        "min_loss": trace.min_loss,
        "schedule": trace.schedule(),
        "rounds": [dataclasses.asdict(r) for r in trace.rounds],
        "notes": trace.notes,
    }
    if args.out:
        laws = {}
        if args.region:
            try:
                laws["allocation"] = scaling_law.law_from_curves(trace.final_curves, tuple(args.region))
            except ValueError as exc:
                out["notes"].append(f"no law: {exc}")
        harness.emit_plotdata(trace.final_curves, laws, args.out)
        with open(f"{args.out}/trace.json", "w") as fh:
            json.dump(out, fh, indent=1, sort_keys=True, default=float)
    return out


def cmd_fit(args):
    curves = read_curves(args.curves).trained_only()
    if args.smooth:
        curves = smooth_set(curves, args.smooth)
    if args.law == "lc":
        region = tuple(args.region) if args.region else scaling_law.DEFAULT_REGION
        law = scaling_law.law_from_curves(curves, region)
        rec = law.to_record()
    else:
        obs = []
        for c in curves:
            idx = np.unique(np.linspace(0, len(c) - 1, args.points).astype(int))
            for i in idx:
                tokens = c.compute[i] / (6.0 * c.model.n_params)
                obs.append((c.model.n_params, tokens, c.loss[i]))
        p = scaling_law.fit_lnd_law(obs, restarts=args.restarts, seed=args.seed)
        rec = dataclasses.asdict(p)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rec, fh, indent=1, sort_keys=True)
    return rec


def _load_law(path) -> scaling_law.PowerScalingLaw:
    with open(path) as fh:
        return scaling_law.PowerScalingLaw.from_record(json.load(fh))


def cmd_abc(args):
    a, b = _load_law(args.law_a), _load_law(args.law_b)
    region = tuple(args.region) if args.region else (a.region_lo, a.region_hi)
    return {"abc": scaling_law.abc(a, b, region, args.grid), "grid": args.grid, "region": list(region)}


def cmd_campaign(args):
    cfg = harness.load_config(args.config).to_dict() if args.config else {}
    for key, val in (("runs", args.runs), ("base_seed", args.seed), ("eta", args.eta),
                     ("points_per_curve", args.points), ("gp_restarts", args.restarts)):
        if val is not None:
            cfg[key] = val
    if args.budget is not None:
        cfg["budgets"] = [args.budget]
    if args.strategy:
        cfg["strategies"] = args.strategy
    if args.region:
        cfg["region"] = args.region
    config = harness.ExperimentConfig.from_dict(cfg)
    report = harness.run_campaign(config, workers=args.workers)
    paths = harness.emit(report, args.format, args.out) if args.out else []
    if not args.out:
        sys.stdout.write(harness.format_table(report))
    failures = sum(c.failures for c in report.cells)
    return {"written": paths, "failures": failures} if args.out else None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scalealloc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic curve dataset")
    g.add_argument("--preset", default="hoffmann")
    g.add_argument("--sizes", nargs="+")
    g.add_argument("--n-models", type=int, default=20)
    g.add_argument("--c-max", type=float, default=1e19)
    g.add_argument("--points", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    _add_noise_flags(g)
    g.set_defaults(func=cmd_gen)

    a = sub.add_parser("alloc", help="run one allocation and print its trace")
    a.add_argument("--curves", help="recorded curve CSV (default: synthetic)")
    a.add_argument("--preset", default="hoffmann")
    a.add_argument("--sizes", nargs="+")
    a.add_argument("--n-models", type=int, default=5)
    a.add_argument("--budget", type=float, default=1e4, help="petaFLOPs")
    a.add_argument("--eta", type=int, default=2)
    a.add_argument("--strategy", default="SH", choices=[s.value for s in harness.Strategy])
    a.add_argument("--points", type=int, default=20)
    a.add_argument("--restarts", type=int, default=20)
    a.add_argument("--smooth", type=int, help="Savitzky-Golay window for recorded curves")
    a.add_argument("--region", nargs=2, type=float)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")
    _add_noise_flags(a)
    a.set_defaults(func=cmd_alloc)

    f = sub.add_parser("fit", help="fit a scaling law to a curve file")
    f.add_argument("--curves", required=True)
    f.add_argument("--law", choices=["lc", "lnd"], default="lc")
    f.add_argument("--region", nargs=2, type=float)
    f.add_argument("--smooth", type=int)
    f.add_argument("--points", type=int, default=20, help="observations per curve for lnd")
    f.add_argument("--restarts", type=int, default=20)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("abc", help="area between two fitted laws")
    b.add_argument("law_a")
    b.add_argument("law_b")
    b.add_argument("--region", nargs=2, type=float)
    b.add_argument("--grid", type=int, default=512)
    b.set_defaults(func=cmd_abc)

    c = sub.add_parser("campaign", help="run a multi-run experiment")
    c.add_argument("--config", help="JSON file with ExperimentConfig fields")
    c.add_argument("--runs", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--budget", type=float, help="single budget in petaFLOPs")
    c.add_argument("--eta", type=int)
    c.add_argument("--strategy", nargs="+")
    c.add_argument("--region", nargs=2, type=float)
    c.add_argument("--points", type=int)
    c.add_argument("--restarts", type=int)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--format", choices=["table", "plotdata"], default="table")
    c.add_argument("--out")
    c.set_defaults(func=cmd_campaign)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        _fail(type(exc).__name__, str(exc))
    if result is not None:
        sys.stdout.write(json.dumps(result, indent=1, sort_keys=True, default=float) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
