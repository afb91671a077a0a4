"""Kernel-regularized FIR identification from least-squares or signal matrix model estimates."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg

from .estimator import SmmProblem, smm_simulate
from .lti import NoiseModel, _as_2d_signal
from .signal_matrix import SignalMatrixSet

DEFAULT_ALPHA_GRID = np.logspace(-2, 2, 20)
DEFAULT_BETA_GRID = np.linspace(0.5, 0.99, 20)


class FirMethod(str, Enum):
    LS = "LS"
    LS_TC = "LS-TC"
    SMM = "SMM"
    SMM_TC = "SMM-TC"


_REGULARIZED = {FirMethod.LS: FirMethod.LS_TC, FirMethod.SMM: FirMethod.SMM_TC}


@dataclass(frozen=True)
class KernelSpec:
    """Tuned/correlated kernel ``alpha * min(beta^i, beta^j)`` with ``i, j = 1..n``."""

    alpha: float
    beta: float
    n: int

    def __post_init__(self):
        if not self.alpha > 0 or not 0 < self.beta < 1 or self.n < 1:
            raise ValueError(f"invalid TC kernel parameters alpha={self.alpha}, beta={self.beta}, n={self.n}")


def tc_kernel(spec: KernelSpec) -> np.ndarray:
    p = spec.beta ** np.arange(1, spec.n + 1)
    return spec.alpha * np.minimum.outer(p, p)


@dataclass(frozen=True)
class FirEstimate:
    h: np.ndarray
    cov: np.ndarray
    method: FirMethod


def fir_regressor(u, n: int, past_u=None) -> np.ndarray:
    """Toeplitz regressor with rows ``(u_t, u_{t-1}, ..., u_{t-n+1})``.

    ``past_u`` holds ``u_{1-n} .. u_{-1}`` in time order; without it the
    first ``n - 1`` rows (which need unknown inputs) are dropped.
    """
    u = _as_2d_signal(u, "u")[:, 0]
    if past_u is not None:
        past_u = np.asarray(past_u, dtype=float).reshape(-1)
        if past_u.size != n - 1:
            raise ValueError(f"past_u must hold n-1={n - 1} samples")
        full = np.concatenate([past_u, u])
        first = 0
    else:
        full = u
        first = n - 1
    N = u.size
    offset = full.size - N
    rows = np.arange(first, N)[:, None] + offset - np.arange(n)[None, :]
    if rows.shape[0] == 0:
        raise ValueError("not enough samples for the FIR regressor")
    return full[rows]


def ls_fir(u, y, n: int, sigma2: float, past_u=None) -> FirEstimate:
    """Least-squares FIR estimate and its covariance ``sigma2 (Phi^T Phi)^-1``."""
    Phi = fir_regressor(u, n, past_u)
    yN = _as_2d_signal(y, "y")[:, 0]
    yN = yN[yN.size - Phi.shape[0]:]
    if np.linalg.matrix_rank(Phi) < n:
        raise np.linalg.LinAlgError("FIR regressor is rank deficient")
    h, *_ = np.linalg.lstsq(Phi, yN, rcond=None)
    cov = sigma2 * np.linalg.inv(Phi.T @ Phi)
    return FirEstimate(h=h, cov=0.5 * (cov + cov.T), method=FirMethod.LS)


def kernel_combine(est: FirEstimate, kernel: np.ndarray) -> FirEstimate:
    """Posterior of ``h`` given the data estimate ``N(h_hat, Sd)`` and the prior ``N(0, kernel)``.

    Mean ``K h_hat`` with gain ``K = Sk (Sk + Sd)^-1``; covariance
    ``Sk - Sk (Sk + Sd)^-1 Sk``.
    """
    Sk = np.asarray(kernel, dtype=float)
    S = Sk + est.cov
    if not np.linalg.cond(S) <= 1e14:
        raise np.linalg.LinAlgError("Sk + Sd is singular")
    lu = linalg.lu_factor(S, check_finite=False)
    h = Sk @ linalg.lu_solve(lu, est.h)
    cov = Sk - Sk @ linalg.lu_solve(lu, Sk)
    method = _REGULARIZED.get(FirMethod(est.method), FirMethod(est.method))
    return FirEstimate(h=h, cov=0.5 * (cov + cov.T), method=method)


def marginal_objective(h_hat, data_cov, kernel) -> float:
    """``logdet(Sk + Sd) + h^T (Sk + Sd)^-1 h``; ``inf`` when not positive definite."""
    S = np.asarray(kernel) + np.asarray(data_cov)
    try:
        c = linalg.cholesky(S, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return np.inf
    z = linalg.solve_triangular(c, h_hat, lower=True, check_finite=False)
    return 2.0 * float(np.sum(np.log(np.diag(c)))) + float(z @ z)


@dataclass(frozen=True)
class EmpiricalBayesResult:
    spec: KernelSpec
    objective_surface: np.ndarray  # shape (len(alpha_grid), len(beta_grid))
    alpha_grid: np.ndarray
    beta_grid: np.ndarray


def empirical_bayes(h_hat, data_cov, alpha_grid=None, beta_grid=None) -> EmpiricalBayesResult:
    """Grid search of TC hyperparameters maximizing the marginal likelihood of ``h_hat``.

    Ties go to the smallest alpha, then the smallest beta.
    """
    h_hat = np.asarray(h_hat, dtype=float).reshape(-1)
    alphas = np.sort(np.asarray(DEFAULT_ALPHA_GRID if alpha_grid is None else alpha_grid, dtype=float).reshape(-1))
    betas = np.sort(np.asarray(DEFAULT_BETA_GRID if beta_grid is None else beta_grid, dtype=float).reshape(-1))
    if alphas.size == 0 or betas.size == 0:
        raise ValueError("hyperparameter grids must be nonempty")
    n = h_hat.size
    surface = np.empty((alphas.size, betas.size))
    for j, b in enumerate(betas):
        base = tc_kernel(KernelSpec(1.0, b, n))
        for i, a in enumerate(alphas):
            surface[i, j] = marginal_objective(h_hat, data_cov, a * base)
    if not np.isfinite(surface).any():
        raise np.linalg.LinAlgError("kernel plus data covariance is singular at every grid point")
    # argmin over the row-major (alpha, beta) order picks the first minimum
    i, j = np.unravel_index(np.argmin(np.where(np.isfinite(surface), surface, np.inf)), surface.shape)
    return EmpiricalBayesResult(KernelSpec(float(alphas[i]), float(betas[j]), n), surface, alphas, betas)


def impulse_problem(sms: SignalMatrixSet, sigma2: float) -> SmmProblem:
    """Zero initial condition and a unit impulse as the future input; no online noise."""
    sms.require_siso()
    u = np.zeros(sms.Lp)
    u[0] = 1.0
    return SmmProblem(
        sms=sms,
        u_ini=np.zeros(sms.L0),
        y_ini=np.zeros(sms.L0),
        u=u,
        noise=NoiseModel(sigma2=sigma2, sigma_p2=0.0),
    )


def smm_fir(sms: SignalMatrixSet, n: int, sigma2: float) -> FirEstimate:
    """Impulse response of length ``n`` simulated by the signal matrix model."""
    if sms.Lp != n:
        raise ValueError(f"the data set must have Lp == n (Lp={sms.Lp}, n={n})")
    res = smm_simulate(impulse_problem(sms, sigma2))
    return FirEstimate(h=res.y, cov=res.cov.future.copy(), method=FirMethod.SMM)


def regularize(est: FirEstimate, alpha_grid=None, beta_grid=None) -> tuple[FirEstimate, KernelSpec]:
    """Empirical-Bayes TC kernel fit followed by the posterior combination."""
    eb = empirical_bayes(est.h, est.cov, alpha_grid, beta_grid)
    return kernel_combine(est, tc_kernel(eb.spec)), eb.spec


def smm_tc(sms: SignalMatrixSet, n: int, sigma2: float, alpha_grid=None, beta_grid=None) -> FirEstimate:
    """Kernel-regularized impulse response from the signal matrix model estimate."""
    return regularize(smm_fir(sms, n, sigma2), alpha_grid, beta_grid)[0]


def ls_tc(u, y, n: int, sigma2: float, past_u=None, alpha_grid=None, beta_grid=None) -> FirEstimate:
    return regularize(ls_fir(u, y, n, sigma2, past_u), alpha_grid, beta_grid)[0]


def fit_metric(h_true, h_est) -> float:
    """Model fit ``100 (1 - ||h - h_est|| / ||h - mean(h)||)``."""
    h = np.asarray(h_true, dtype=float).reshape(-1)
    e = np.asarray(h_est, dtype=float).reshape(-1)
    if h.shape != e.shape:
        raise ValueError("h_true and h_est must have equal length")
    den = float(np.sum((h - h.mean()) ** 2))
    if den == 0.0:
        raise ValueError("h_true is constant; fit is undefined")
    return 100.0 * (1.0 - np.sqrt(float(np.sum((h - e) ** 2)) / den))


def two_sigma_band(est: FirEstimate) -> tuple[np.ndarray, np.ndarray]:
    sd = np.sqrt(np.clip(np.diag(est.cov), 0.0, None))
    return est.h - 2 * sd, est.h + 2 * sd
