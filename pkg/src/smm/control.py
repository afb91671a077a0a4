"""Receding-horizon tracking controllers built on data-driven predictors.

All controllers here are unconstrained, so every step reduces to a convex
quadratic in the input plan and is solved in closed form.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .estimator import _affine_maps, lambda_weight, pinv_solution
from .lti import LtiSystem, NoiseModel

logger = logging.getLogger(__name__)


class ControllerKind(str, Enum):
    SUBPC = "subpc"
    DEEPC = "deepc"
    SMMPC = "smmpc"
    MPC = "mpc"


def _weights(W, n: int) -> np.ndarray:
    w = np.asarray(W, dtype=float).reshape(-1)
    if w.size == 1:
        w = np.full(n, w[0])
    if w.shape != (n,):
        raise ValueError(f"weight must be scalar or a length-{n} diagonal")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    return w


def control_cost(u, y, r, Q=1.0, R=1.0) -> float:
    """Tracking cost ``sum ||y_k - r_k||_Q^2 + ||u_k||_R^2`` with diagonal weights."""
    u, y, r = (np.asarray(v, dtype=float).reshape(-1) for v in (u, y, r))
    if not (u.size == y.size == r.size):
        raise ValueError("u, y and r must have equal length")
    e = y - r
    return float(e @ (_weights(Q, e.size) * e) + u @ (_weights(R, u.size) * u))


def _track_affine(G: np.ndarray, f: np.ndarray, r, Q, R):
    """Minimize the tracking cost for the affine predictor ``y = G u + f``."""
    n = G.shape[1]
    q = _weights(Q, G.shape[0])
    rw = _weights(R, n)
    H = G.T @ (q[:, None] * G)
    H[np.diag_indices(n)] += rw
    b = G.T @ (q * (np.asarray(r, dtype=float).reshape(-1) - f))
    try:
        u = linalg.solve(H, b, assume_a="pos", check_finite=False)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError("singular reduced Hessian in tracking problem") from exc
    return u, G @ u + f


@dataclass(frozen=True)
class StepResult:
    u: np.ndarray
    y_pred: np.ndarray
    g: Optional[np.ndarray] = None
    yhat_ini: Optional[np.ndarray] = None


def subpc_step(sms, u_ini, y_ini, r, Q=1.0, R=1.0) -> StepResult:
    """Subspace predictive control: predictor ``Yf g_pinv(u; u_ini, y_ini)``."""
    L0n, Lpn = sms.Up.shape[0], sms.Uf.shape[0]
    Hpinv = np.linalg.pinv(np.vstack([sms.Up, sms.Yp, sms.Uf]))
    K = sms.Yf @ Hpinv
    G = K[:, L0n + sms.Yp.shape[0]:]
    f = K[:, :L0n] @ np.asarray(u_ini, float).reshape(-1) + K[:, L0n:L0n + sms.Yp.shape[0]] @ np.asarray(
        y_ini, float
    ).reshape(-1)
    assert G.shape[1] == Lpn
    u, y = _track_affine(G, f, r, Q, R)
    return StepResult(u=u, y_pred=y, g=pinv_solution(sms, u_ini, y_ini, u).g)


def deepc_step(sms, u_ini, y_ini, r, Q=1.0, R=1.0, lambda_g=100.0, lambda_y=1000.0) -> StepResult:
    """Regularized DeePC with squared 2-norm penalties on ``g`` and the past-output slack.

    With ``u = Uf g``, ``y = Yf g`` and ``yhat_ini = Yp g`` substituted the
    problem is a ridge-type quadratic in ``g`` under ``Up g = u_ini``,
    solved through its KKT system.
    """
    if not (lambda_g > 0 and lambda_y > 0):
        raise ValueError("lambda_g and lambda_y must be positive")
    u_ini = np.asarray(u_ini, dtype=float).reshape(-1)
    y_ini = np.asarray(y_ini, dtype=float).reshape(-1)
    r = np.asarray(r, dtype=float).reshape(-1)
    Up, Uf, Yp, Yf = sms.Up, sms.Uf, sms.Yp, sms.Yf
    M = sms.M
    q = _weights(Q, Yf.shape[0])
    rw = _weights(R, Uf.shape[0])
    H = Yf.T @ (q[:, None] * Yf) + Uf.T @ (rw[:, None] * Uf) + lambda_y * (Yp.T @ Yp)
    H[np.diag_indices(M)] += lambda_g
    c = Yf.T @ (q * r) + lambda_y * (Yp.T @ y_ini)
    m = Up.shape[0]
    K = np.zeros((M + m, M + m))
    K[:M, :M] = H
    K[:M, M:] = Up.T
    K[M:, :M] = Up
    try:
        sol = linalg.solve(K, np.concatenate([c, u_ini]), assume_a="sym", check_finite=False)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError("singular DeePC KKT system") from exc
    g = sol[:M]
    return StepResult(u=Uf @ g, y_pred=Yf @ g, g=g, yhat_ini=Yp @ g)


def smmpc_maps(sms, noise: NoiseModel, g_prev):
    """Affine predictor ``g = P y_ini + Q col(u_ini, u)`` frozen at ``g_prev``."""
    lam = lambda_weight(g_prev, noise, sms.L0, sms.Lp)
    P, Qm, *_ = _affine_maps(sms, lam)
    return P, Qm


def smmpc_step(sms, u_ini, y_ini, r, Q=1.0, R=1.0, noise: NoiseModel = NoiseModel(1.0, 1.0), g_prev=None) -> StepResult:
    """Predictive control with the one-iteration, warm-started signal matrix model predictor."""
    u_ini = np.asarray(u_ini, dtype=float).reshape(-1)
    y_ini = np.asarray(y_ini, dtype=float).reshape(-1)
    if g_prev is None:
        g_prev = pinv_solution(sms, u_ini, y_ini, np.zeros(sms.Uf.shape[0])).g
    P, Qm = smmpc_maps(sms, noise, g_prev)
    m = sms.Up.shape[0]
    g0 = P @ y_ini + Qm[:, :m] @ u_ini
    Gg = Qm[:, m:]
    u, y = _track_affine(sms.Yf @ Gg, sms.Yf @ g0, r, Q, R)
    return StepResult(u=u, y_pred=y, g=g0 + Gg @ u)


def prediction_matrices(system: LtiSystem, horizon: int):
    """Condensed prediction ``y = Obs x + Gam u`` over ``horizon`` steps (SISO stacking per step)."""
    ny, nu, nx = system.ny, system.nu, system.nx
    Obs = np.zeros((horizon * ny, nx))
    Gam = np.zeros((horizon * ny, horizon * nu))
    CAk = system.C.copy()
    markov = [system.D]
    AkB = system.B
    for k in range(horizon):
        Obs[k * ny:(k + 1) * ny] = CAk
        CAk = CAk @ system.A
        if k:
            markov.append(system.C @ AkB)
            AkB = system.A @ AkB
    for i in range(horizon):
        for j in range(i + 1):
            Gam[i * ny:(i + 1) * ny, j * nu:(j + 1) * nu] = markov[i - j]
    return Obs, Gam


def ideal_mpc_step(system: LtiSystem, x, r, Q=1.0, R=1.0) -> StepResult:
    """Model-based MPC with the true model and exact state."""
    r = np.asarray(r, dtype=float).reshape(-1)
    Obs, Gam = prediction_matrices(system, r.size // system.ny)
    u, y = _track_affine(Gam, Obs @ np.asarray(x, dtype=float).reshape(-1), r, Q, R)
    return StepResult(u=u, y_pred=y)


@dataclass(frozen=True)
class ControllerConfig:
    kind: ControllerKind
    L0: int = 4
    Lp: int = 11
    Q: float = 1.0
    R: float = 1.0
    lambda_g: float = 100.0
    lambda_y: float = 1000.0
    noise: NoiseModel = NoiseModel(1.0, 1.0)
    eps: float = 1e-6
    u_bounds: Optional[tuple] = None
    y_bounds: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ControllerKind(self.kind))
        if self.u_bounds is not None or self.y_bounds is not None:
            raise NotImplementedError("input/output constraints are not implemented")
        if np.any(np.asarray(self.Q) < 0) or np.any(np.asarray(self.R) < 0):
            raise ValueError("Q and R must be nonnegative")
        if self.kind is ControllerKind.DEEPC and not (self.lambda_g > 0 and self.lambda_y > 0):
            raise ValueError("DeePC needs positive lambda_g and lambda_y")


def sine_reference(t) -> np.ndarray:
    """Default tracking target ``0.5 sin(pi t / 10)``."""
    return 0.5 * np.sin(np.pi * np.asarray(t, dtype=float) / 10.0)


@dataclass
class ClosedLoopResult:
    u: np.ndarray
    y: np.ndarray
    y0: np.ndarray
    r: np.ndarray
    status: list
    J: float
    solve_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    decision_dims: list = field(default_factory=list)

    def recompute_cost(self, Q=1.0, R=1.0) -> float:
        return control_cost(self.u, self.y0, self.r, Q, R)


def _make_stepper(config: ControllerConfig, sms, plant: LtiSystem):
    """Return ``step(t, x, u_ini, y_ini, r) -> (u_plan, decision_dim)`` with precomputed data maps."""
    kind = config.kind
    Q, R = config.Q, config.R
    if kind is ControllerKind.MPC:
        Obs, Gam = prediction_matrices(plant, config.Lp)

        def step(x, u_ini, y_ini, r):
            return _track_affine(Gam, Obs @ x, r, Q, R)[0], config.Lp

        return step
    if sms is None:
        raise ValueError(f"{kind.value} needs a data matrix set")
    if kind is ControllerKind.SUBPC:
        m, p = sms.Up.shape[0], sms.Yp.shape[0]
        K = sms.Yf @ np.linalg.pinv(np.vstack([sms.Up, sms.Yp, sms.Uf]))
        Ku, Ky, G = K[:, :m], K[:, m:m + p], K[:, m + p:]

        def step(x, u_ini, y_ini, r):
            return _track_affine(G, Ku @ u_ini + Ky @ y_ini, r, Q, R)[0], sms.M

        return step
    if kind is ControllerKind.DEEPC:

        def step(x, u_ini, y_ini, r):
            return deepc_step(sms, u_ini, y_ini, r, Q, R, config.lambda_g, config.lambda_y).u, sms.M

        return step
    state = {"g": None}

    def step(x, u_ini, y_ini, r):
        res = smmpc_step(sms, u_ini, y_ini, r, Q, R, config.noise, state["g"])
        state["g"] = res.g
        return res.u, res.g.size

    return step


def receding_horizon_run(
    plant: LtiSystem,
    config: ControllerConfig,
    sms,
    r_gen: Callable = sine_reference,
    n_steps: int = 60,
    seed=None,
    x0=None,
) -> ClosedLoopResult:
    """Closed-loop simulation; the cost uses noise-free outputs.

    ``L0`` zero-input warm-up samples precede ``t = 0`` to fill the past
    windows. Measurements carry ``N(0, sigma_p2)`` noise (``config.noise``).
    A failed controller step applies zero input and records the error.
    """
    rng = np.random.default_rng(seed)
    L0, Lp = config.L0, config.Lp
    sp = np.sqrt(config.noise.sigma_p2)
    step = _make_stepper(config, sms, plant)
    x = np.zeros(plant.nx) if x0 is None else np.asarray(x0, dtype=float).copy()
    A, B, C, D = plant.A, plant.B, plant.C, plant.D

    total = L0 + n_steps
    u_hist = np.zeros(total)
    y_meas = np.zeros(total)
    y0_hist = np.zeros(total)
    noise = sp * rng.standard_normal(total)
    status, times, dims = [], [], []
    for k in range(total):
        t = k - L0
        if t >= 0:
            r = r_gen(np.arange(t, t + Lp))
            t0 = time.perf_counter()
            try:
                plan, dim = step(x, u_hist[k - L0:k], y_meas[k - L0:k], r)
                uk = float(plan[0])
                status.append("ok")
            except (np.linalg.LinAlgError, ValueError) as exc:
                logger.warning("controller step failed at t=%d: %s", t, exc)
                uk, dim = 0.0, 0
                status.append(f"failed: {exc}")
            times.append(time.perf_counter() - t0)
            dims.append(dim)
        else:
            uk = 0.0
        u_hist[k] = uk
        y0_hist[k] = (C @ x)[0] + D[0, 0] * uk
        y_meas[k] = y0_hist[k] + noise[k]
        x = A @ x + B[:, 0] * uk

    sl = slice(L0, total)
    r_all = r_gen(np.arange(n_steps))
    res = ClosedLoopResult(
        u=u_hist[sl].copy(),
        y=y_meas[sl].copy(),
        y0=y0_hist[sl].copy(),
        r=np.asarray(r_all, dtype=float),
        status=status,
        J=0.0,
        solve_times=np.asarray(times),
        decision_dims=dims,
    )
    res.J = res.recompute_cost(config.Q, config.R)
    return res
