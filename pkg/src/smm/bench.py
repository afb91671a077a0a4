"""Monte Carlo experiment harness producing CSV data tables.

Every stochastic draw comes from a generator keyed by
``(base_seed + run, stream name)``, so any single run can be reproduced in
isolation. Runs may execute in worker processes; records are sorted before
aggregation, so results do not depend on scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .control import ControllerConfig, ControllerKind, receding_horizon_run
from .kernel import fit_metric, ls_fir, regularize, smm_fir
from .lti import LtiSystem, NoiseModel, g1, g2, impulse_response, simulate
from .signal_matrix import compress, partition

logger = logging.getLogger(__name__)

EXPERIMENTS = ("fig1a", "fig1b", "fig2", "fig3", "fig4", "fig5", "fig6a", "fig6b", "fig7", "fig8")
IDENT_METHODS = ("LS", "LS-TC", "SMM", "SMM-TC")
CONTROLLERS = ("mpc", "subpc", "deepc", "smmpc")
DEEPC_LAMBDA_G = tuple(np.logspace(1, 3, 9).tolist())
BURN_IN = 100


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent PCG64 generator for one named stream of one run seed."""
    return np.random.default_rng([int(seed), zlib.crc32(stream.encode())])


def online_noise_seed(seed: int) -> np.random.SeedSequence:
    """Seed for closed-loop measurement noise; shared by all controllers of a run."""
    return np.random.SeedSequence([int(seed), zlib.crc32(b"online-noise")])


def resolve_system(name: str) -> LtiSystem:
    systems = {"g1": g1, "g2": g2}
    if name not in systems:
        raise ValueError(f"unknown system {name!r}; expected one of {sorted(systems)}")
    return systems[name]()


def generate_data(plant: LtiSystem, N: int, sigma2: float, seed: int, burn_in: int = BURN_IN, n_past: int = 0):
    """Offline record driven by unit i.i.d. Gaussian input.

    The plant runs for ``burn_in`` samples before the record starts, so the
    initial state is unknown. Returns ``(u, y, y0, past_u)`` where
    ``past_u`` are the ``n_past`` inputs just before the record.
    """
    if n_past > burn_in:
        raise ValueError("n_past cannot exceed burn_in")
    u = stream_rng(seed, "data-input").standard_normal(burn_in + N)
    y0 = simulate(plant, u).y[:, 0]
    w = np.sqrt(sigma2) * stream_rng(seed, "data-noise").standard_normal(burn_in + N)
    past = u[burn_in - n_past:burn_in] if n_past else None
    return u[burn_in:], (y0 + w)[burn_in:], y0[burn_in:], past


@dataclass
class ExperimentConfig:
    experiment: str
    system: str = "g1"
    N: int = 50
    L0: int = 4
    Lp: int = 11
    sigma2: list = field(default_factory=lambda: [0.01])
    sigma_p2: Optional[list] = None
    N_list: Optional[list] = None
    runs: int = 100
    seed: int = 0
    out: str = "results"
    known_past: bool = True
    steps: int = 60
    Q: float = 1.0
    R: float = 1.0
    lambda_g: list = field(default_factory=lambda: list(DEEPC_LAMBDA_G))
    lambda_y: float = 1000.0
    compress: bool = True
    alpha_grid: Optional[list] = None
    beta_grid: Optional[list] = None
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.sigma2 or (self.N_list is not None and not self.N_list) or not self.lambda_g:
            raise ValueError("sweep lists must be nonempty")

    def noise_pairs(self) -> list[tuple[float, float]]:
        sp = self.sigma2 if self.sigma_p2 is None else self.sigma_p2
        if len(sp) != len(self.sigma2):
            raise ValueError("sigma2 and sigma_p2 sweeps must have equal length")
        return list(zip(map(float, self.sigma2), map(float, sp)))

    def hash(self) -> str:
        # output location and worker count do not change results
        d = {k: v for k, v in asdict(self).items() if k not in ("out", "workers")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        with open(path) as f:
            data = json.load(f)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    """Published parameters for each experiment; ``overrides`` replace any field."""
    ident = dict(N=50, L0=4, Lp=11, runs=100)
    ctrl = dict(system="g1", N=200, L0=4, Lp=11, sigma2=[1.0], runs=100, steps=60)
    presets = {
        "fig1a": dict(ident, system="g1", sigma2=[0.0], runs=1, known_past=True),
        "fig1b": dict(ident, system="g1", sigma2=[0.01], known_past=True),
        "fig2": dict(ident, system="g2", sigma2=[0.01], known_past=False),
        "fig3": dict(ident, sigma2=[0.01]),
        "fig4": ctrl,
        "fig5": ctrl,
        "fig6a": dict(ctrl, N_list=[50, 100, 200, 400, 600, 800]),
        "fig6b": dict(ctrl, sigma2=[0.01, 0.03, 0.1, 0.3, 1.0]),
        "fig7": dict(ctrl, sigma2=[0.01, 0.03, 0.1, 0.3, 1.0]),
        "fig8": dict(ctrl, N_list=[100, 200, 400, 800, 1600], runs=3),
    }
    params = dict(presets[experiment])
    params.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(experiment=experiment, **params)


# -- identification ---------------------------------------------------------


def identification_trial(plant, N, n, L0, sigma2, known_past, seed, alpha_grid=None, beta_grid=None, methods=IDENT_METHODS):
    """All four FIR estimates on one noisy record."""
    u, y, _, past = generate_data(plant, N, sigma2, seed, n_past=n - 1 if known_past else 0)
    out = {}
    if "LS" in methods or "LS-TC" in methods:
        ls = ls_fir(u, y, n, sigma2, past)
        out["LS"] = ls
        if "LS-TC" in methods:
            out["LS-TC"] = regularize(ls, alpha_grid, beta_grid)[0]
    if "SMM" in methods or "SMM-TC" in methods:
        sm = smm_fir(partition(u, y, L0, n), n, sigma2)
        out["SMM"] = sm
        if "SMM-TC" in methods:
            out["SMM-TC"] = regularize(sm, alpha_grid, beta_grid)[0]
    return {m: out[m] for m in methods}


def _impulse_records(cfg: ExperimentConfig, run: int, methods) -> list[dict]:
    plant = resolve_system(cfg.system)
    n = cfg.Lp
    h = impulse_response(plant, n)
    est = identification_trial(
        plant, cfg.N, n, cfg.L0, float(cfg.sigma2[0]), cfg.known_past, cfg.seed + run,
        cfg.alpha_grid, cfg.beta_grid, methods,
    )
    rows = []
    for m, e in est.items():
        sd = np.sqrt(np.clip(np.diag(e.cov), 0, None))
        W = fit_metric(h, e.h)
        for k in range(n):
            rows.append(dict(run=run, method=m, k=k, h_true=h[k], h=e.h[k], sd_model=sd[k], W=W))
    return rows


FIG3_EXAMPLES = (("ex1", "g1", True), ("ex2-unknown", "g2", False), ("ex2-known", "g2", True))


def _fig3_records(cfg: ExperimentConfig, run: int) -> list[dict]:
    rows = []
    for label, system, known in FIG3_EXAMPLES:
        plant = resolve_system(system)
        h = impulse_response(plant, cfg.Lp)
        est = identification_trial(
            plant, cfg.N, cfg.Lp, cfg.L0, float(cfg.sigma2[0]), known, cfg.seed + run, cfg.alpha_grid, cfg.beta_grid
        )
        for m, e in est.items():
            rows.append(dict(run=run, example=label, method=m, W=fit_metric(h, e.h)))
    return rows


# -- control ----------------------------------------------------------------


def control_trial(cfg: ExperimentConfig, run: int, N: int, sigma2: float, sigma_p2: float, controllers=CONTROLLERS, compress_data=None):
    """Closed-loop runs of each controller on one offline record and one online noise realization.

    DeePC is run for every ``lambda_g`` in the grid; the best cost is
    selected per run. Returns ``{name: ClosedLoopResult}`` plus
    ``"deepc_all"`` (list of results in grid order).
    """
    plant = resolve_system(cfg.system)
    seed = cfg.seed + run
    u, y, _, _ = generate_data(plant, N, sigma2, seed)
    sms = partition(u, y, cfg.L0, cfg.Lp)
    if cfg.compress if compress_data is None else compress_data:
        sms = compress(sms)
    noise = NoiseModel(sigma2, sigma_p2)
    online_seed = online_noise_seed(seed)
    common = dict(L0=cfg.L0, Lp=cfg.Lp, Q=cfg.Q, R=cfg.R, noise=noise, lambda_y=cfg.lambda_y)

    def run_one(kind, **kw):
        config = ControllerConfig(kind=kind, **dict(common, **kw))
        return receding_horizon_run(plant, config, sms, n_steps=cfg.steps, seed=online_seed)

    out = {}
    for c in controllers:
        if c == "deepc":
            allres = [run_one(ControllerKind.DEEPC, lambda_g=float(lg)) for lg in cfg.lambda_g]
            best = int(np.argmin([r.J for r in allres]))
            out["deepc"] = allres[best]
            out["deepc_all"] = allres
            out["deepc_best_lambda_g"] = float(cfg.lambda_g[best])
        else:
            out[c] = run_one(ControllerKind(c))
    return out


def _cost_rows(res, base: dict) -> list[dict]:
    rows = []
    for c in CONTROLLERS:
        if c in res:
            r = res[c]
            row = dict(base, controller=c, J=r.J, failed_steps=sum(s != "ok" for s in r.status))
            row["lambda_g"] = res["deepc_best_lambda_g"] if c == "deepc" else ""
            rows.append(row)
    return rows


def _control_records(cfg: ExperimentConfig, run: int) -> list[dict]:
    exp = cfg.experiment
    pairs = cfg.noise_pairs()
    if exp == "fig4":
        s2, sp2 = pairs[0]
        res = control_trial(cfg, run, cfg.N, s2, sp2)
        rows = []
        for c in CONTROLLERS:
            r = res[c]
            for t in range(len(r.u)):
                rows.append(dict(run=run, controller=c, t=t, u=r.u[t], y=r.y[t], y0=r.y0[t], r=r.r[t]))
        return rows
    if exp == "fig5":
        s2, sp2 = pairs[0]
        return _cost_rows(control_trial(cfg, run, cfg.N, s2, sp2), dict(run=run, N=cfg.N, sigma2=s2, sigma_p2=sp2))
    if exp == "fig6a":
        s2, sp2 = pairs[0]
        rows = []
        for N in cfg.N_list:
            rows += _cost_rows(control_trial(cfg, run, int(N), s2, sp2), dict(run=run, N=int(N), sigma2=s2, sigma_p2=sp2))
        return rows
    if exp == "fig6b":
        rows = []
        for s2, sp2 in pairs:
            rows += _cost_rows(control_trial(cfg, run, cfg.N, s2, sp2), dict(run=run, N=cfg.N, sigma2=s2, sigma_p2=sp2))
        return rows
    if exp == "fig7":
        rows = []
        for s2, sp2 in pairs:
            res = control_trial(cfg, run, cfg.N, s2, sp2, controllers=("deepc",))
            lg = res["deepc_best_lambda_g"]
            rows.append(dict(run=run, sigma2=s2, sigma_p2=sp2, best_lambda_g=lg, log10_best_lambda_g=np.log10(lg)))
        return rows
    if exp == "fig8":
        s2, sp2 = pairs[0]
        rows = []
        for N in cfg.N_list:
            for comp in (True, False):
                r = control_trial(cfg, run, int(N), s2, sp2, controllers=("smmpc",), compress_data=comp)["smmpc"]
                rows.append(
                    dict(
                        run=run, N=int(N), compressed=int(comp),
                        median_step_time=float(np.median(r.solve_times)),
                        mean_step_time=float(np.mean(r.solve_times)),
                        decision_dim=int(max(r.decision_dims)),
                    )
                )
        return rows
    raise ValueError(exp)


def _safe_run_records(cfg: ExperimentConfig, run: int):
    try:
        return run_records(cfg, run), None
    except (np.linalg.LinAlgError, ValueError) as exc:
        logger.warning("run %d failed: %s", run, exc)
        return [], f"{type(exc).__name__}: {exc}"


def run_records(cfg: ExperimentConfig, run: int) -> list[dict]:
    """Per-run records of one experiment; reproducible in isolation."""
    exp = cfg.experiment
    if exp == "fig1a":
        return _impulse_records(cfg, run, ("LS", "SMM"))
    if exp in ("fig1b", "fig2"):
        return _impulse_records(cfg, run, IDENT_METHODS)
    if exp == "fig3":
        return _fig3_records(cfg, run)
    return _control_records(cfg, run)


# -- aggregation and persistence --------------------------------------------

GROUP_KEYS = {
    "fig1a": ("method", "k"),
    "fig1b": ("method", "k"),
    "fig2": ("method", "k"),
    "fig3": ("example", "method"),
    "fig4": ("controller", "t"),
    "fig5": ("controller",),
    "fig6a": ("N", "controller"),
    "fig6b": ("sigma2", "controller"),
    "fig7": ("sigma2",),
    "fig8": ("N", "compressed"),
}
VALUE_KEYS = {
    "fig1a": ("h", "h_true"),
    "fig1b": ("h", "sd_model", "W"),
    "fig2": ("h", "sd_model", "W"),
    "fig3": ("W",),
    "fig4": ("u", "y0", "y"),
    "fig5": ("J",),
    "fig6a": ("J",),
    "fig6b": ("J",),
    "fig7": ("best_lambda_g", "log10_best_lambda_g"),
    "fig8": ("median_step_time", "mean_step_time", "decision_dim"),
}


def aggregate(records: list[dict], keys, values) -> list[dict]:
    """Group statistics: count, mean, sample std, median and type-7 (linear) quartiles.

    Groups are emitted in sorted key order; input order does not matter.
    """
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict = {}
    for rec in records:
        groups.setdefault(tuple(rec[k] for k in keys), []).append(rec)
    out = []
    for key in sorted(groups):
        recs = groups[key]
        row = dict(zip(keys, key))
        row["count"] = len(recs)
        for v in values:
            x = np.sort(np.array([float(r[v]) for r in recs]))
            q1, med, q3 = np.percentile(x, [25, 50, 75])
            row[f"{v}_mean"] = float(np.mean(x))
            row[f"{v}_std"] = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
            row[f"{v}_median"] = float(med)
            row[f"{v}_q1"] = float(q1)
            row[f"{v}_q3"] = float(q3)
        out.append(row)
    return out


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return v


def write_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    header = list(rows[0].keys())
    for r in rows[1:]:
        header += [k for k in r if k not in header]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list
    summary: list
    meta: dict

    def column(self, name: str, **where) -> np.ndarray:
        """Values of ``name`` over the records matching all ``where`` filters."""
        return np.array([r[name] for r in self.records if all(r.get(k) == v for k, v in where.items())], dtype=float)

    def write(self, out_dir=None) -> Path:
        d = Path(out_dir or self.config.out) / self.config.experiment
        d.mkdir(parents=True, exist_ok=True)
        write_csv(d / "runs.csv", self.records)
        write_csv(d / "summary.csv", self.summary)
        (d / "meta.json").write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")
        return d


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    runs = range(cfg.runs)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            per_run = list(ex.map(_safe_run_records, [cfg] * cfg.runs, runs))
    else:
        per_run = [_safe_run_records(cfg, r) for r in runs]
    records = [rec for recs, _ in per_run for rec in recs]
    failures = {run: err for run, (_, err) in enumerate(per_run) if err}
    summary = aggregate(records, GROUP_KEYS[cfg.experiment], VALUE_KEYS[cfg.experiment]) if records else []
    meta = dict(
        experiment=cfg.experiment,
        config=asdict(replace(cfg, out="", workers=1)),
        config_hash=cfg.hash(),
        seed=cfg.seed,
        seed_rule="run r uses seed + r; streams: data-input, data-noise, online-noise",
        version=__version__,
        quartiles="linear interpolation (type 7)",
        failed_runs={str(k): v for k, v in failures.items()},
    )
    return ExperimentReport(cfg, records, summary, meta)
