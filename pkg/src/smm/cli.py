"""Command line entry point: ``smm identify``, ``smm control`` and ``smm bench``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .control import ControllerConfig, ControllerKind, receding_horizon_run
from .kernel import fit_metric, ls_fir, regularize, smm_fir
from .lti import NoiseModel, impulse_response, read_trajectory_csv
from .signal_matrix import compress, partition

METHODS = {"ls": "LS", "ls-tc": "LS-TC", "smm": "SMM", "smm-tc": "SMM-TC"}


def _bool(s: str) -> bool:
    v = s.lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {s!r}")


def _estimate(method: str, u, y, n, L0, sigma2, past):
    if method in ("LS", "LS-TC"):
        est = ls_fir(u, y, n, sigma2, past)
    else:
        est = smm_fir(partition(u, y, L0, n), n, sigma2)
    if method.endswith("-TC"):
        est = regularize(est)[0]
    return est


def cmd_identify(args) -> int:
    method = METHODS[args.method]
    n = args.n
    rows = []
    if args.system.startswith("csv:"):
        traj = read_trajectory_csv(args.system[4:])
        u, y = traj.u[:, 0], traj.y[:, 0]
        past = None
        if args.known_past:
            past, u, y = u[: n - 1], u[n - 1:], y[n - 1:]
        est = _estimate(method, u, y, n, args.L0, args.sigma2, past)
        rows.append(dict(run=0, method=method, W="", **{f"h_{k}": est.h[k] for k in range(n)}))
    else:
        plant = bench.resolve_system(args.system)
        h = impulse_response(plant, n)
        for run in range(args.runs):
            u, y, _, past = bench.generate_data(
                plant, args.N, args.sigma2, args.seed + run, n_past=n - 1 if args.known_past else 0
            )
            est = _estimate(method, u, y, n, args.L0, args.sigma2, past)
            rows.append(dict(run=run, method=method, W=fit_metric(h, est.h), **{f"h_{k}": est.h[k] for k in range(n)}))
    if args.out:
        bench.write_csv(args.out, rows)
    else:
        _print_csv(rows)
    return 0


def cmd_control(args) -> int:
    kind = ControllerKind(args.controller)
    cfg = bench.default_config("fig5", system="g1", N=args.N, L0=args.L0, Lp=args.Lp, steps=args.steps,
                               seed=args.seed, compress=args.compress, sigma2=[args.sigma2],
                               sigma_p2=[args.sigmap2], lambda_y=args.lambda_y)
    plant = bench.resolve_system(cfg.system)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for run in range(args.runs):
        seed = cfg.seed + run
        u, y, _, _ = bench.generate_data(plant, cfg.N, args.sigma2, seed)
        sms = partition(u, y, cfg.L0, cfg.Lp)
        if cfg.compress:
            sms = compress(sms)
        config = ControllerConfig(
            kind=kind, L0=cfg.L0, Lp=cfg.Lp, noise=NoiseModel(args.sigma2, args.sigmap2),
            lambda_g=args.lambda_g, lambda_y=args.lambda_y,
        )
        res = receding_horizon_run(plant, config, sms, n_steps=cfg.steps, seed=bench.online_noise_seed(seed))
        bench.write_csv(
            out / f"run_{run:04d}.csv",
            [dict(t=t, u=res.u[t], y=res.y[t], y0=res.y0[t], r=res.r[t]) for t in range(len(res.u))],
        )
        summary.append(dict(run=run, J=res.J, solve_time_total=float(np.sum(res.solve_times))))
    bench.write_csv(out / "summary.csv", summary)
    print(f"wrote {args.runs} run(s) to {out}; median J = {np.median([s['J'] for s in summary]):.6g}")
    return 0


def cmd_bench(args) -> int:
    overrides = dict(seed=args.seed, out=args.out, workers=args.workers, runs=args.runs)
    if args.config:
        cfg = bench.ExperimentConfig.from_json(args.config, experiment=args.experiment, **overrides)
    else:
        cfg = bench.default_config(args.experiment, **overrides)
    report = bench.run_experiment(cfg)
    d = report.write()
    print(f"{cfg.experiment}: {len(report.records)} records -> {d}")
    return 0


def _print_csv(rows):
    import csv

    if not rows:
        return
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: f"{v:.17g}" if isinstance(v, float) else v for k, v in r.items()})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    ident = sub.add_parser("identify", help="FIR impulse response estimation")
    ident.add_argument("--system", default="g1", help="g1, g2 or csv:<trajectory file>")
    ident.add_argument("--n", type=int, default=11)
    ident.add_argument("--sigma2", type=float, default=0.01)
    ident.add_argument("--N", type=int, default=50)
    ident.add_argument("--L0", type=int, default=4)
    ident.add_argument("--method", choices=sorted(METHODS), default="smm-tc")
    ident.add_argument("--known-past", type=_bool, default=False)
    ident.add_argument("--seed", type=int, default=0)
    ident.add_argument("--runs", type=int, default=1)
    ident.add_argument("--out", help="CSV output path (default: stdout)")
    ident.set_defaults(func=cmd_identify)

    ctrl = sub.add_parser("control", help="closed-loop receding-horizon simulation on G1")
    ctrl.add_argument("--controller", choices=[k.value for k in ControllerKind], default="smmpc")
    ctrl.add_argument("--N", type=int, default=200)
    ctrl.add_argument("--L0", type=int, default=4)
    ctrl.add_argument("--Lp", type=int, default=11)
    ctrl.add_argument("--sigma2", type=float, default=1.0)
    ctrl.add_argument("--sigmap2", type=float, default=1.0)
    ctrl.add_argument("--lambda-g", type=float, default=100.0)
    ctrl.add_argument("--lambda-y", type=float, default=1000.0)
    ctrl.add_argument("--steps", type=int, default=60)
    ctrl.add_argument("--seed", type=int, default=0)
    ctrl.add_argument("--runs", type=int, default=1)
    ctrl.add_argument("--compress", type=_bool, default=True, help="on/off")
    ctrl.add_argument("--out", default="control_out")
    ctrl.set_defaults(func=cmd_control)

    b = sub.add_parser("bench", help="reproduce an experiment as CSV tables")
    b.add_argument("--experiment", required=True, choices=bench.EXPERIMENTS)
    b.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    b.add_argument("--out", default="results")
    b.add_argument("--seed", type=int)
    b.add_argument("--runs", type=int)
    b.add_argument("--workers", type=int, default=1)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
