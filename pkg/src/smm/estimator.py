"""Maximum-likelihood estimation of the trajectory-combination vector ``g``.

The signal matrix model predicts ``y = Yf g`` where ``g`` solves a
sequence of equality-constrained least-squares problems whose weight
``lam(g)`` accounts for output noise in the data matrices and in the
online initial-condition measurements.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy import linalg

from .lti import NoiseModel, numerical_rank
from .signal_matrix import MatrixKind, SignalMatrixSet

logger = logging.getLogger(__name__)

# singular values below this fraction of the largest are dropped in the
# noise-free (lam == 0) null-space solve
NULLSPACE_RTOL = 1e-10


class Provenance(str, Enum):
    PINV = "pinv"
    SMM_CONVERGED = "smm-converged"
    SMM_ONE_STEP = "smm-one-step"


class DegenerateInputError(ValueError):
    """Zero combination vector where the weight needs ``1/||g||^2``."""


class SingularConstraintError(np.linalg.LinAlgError):
    """The input constraint matrix ``U F^-1 U^T`` cannot be factorized."""

    def __init__(self, rank: int, size: int):
        super().__init__(f"U F^-1 U^T is singular: numerical rank {rank} < {size}")
        self.rank = rank
        self.size = size


@dataclass(frozen=True)
class ParameterVector:
    g: np.ndarray
    provenance: Provenance
    iters: int = 0
    lam: Optional[float] = None


@dataclass(frozen=True)
class OutputCovariance:
    """Covariance of the stacked (past residual, future output) estimate."""

    sigma_y: np.ndarray
    diag_only: bool = False
    L0: int = 0

    @property
    def future(self) -> np.ndarray:
        """Block belonging to the predicted future outputs."""
        return self.sigma_y[self.L0:, self.L0:]


def _vec(x, n: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got {x.size}")
    return x


def _check_online(sms: SignalMatrixSet, u_ini, y_ini, u):
    return (
        _vec(u_ini, sms.Up.shape[0], "u_ini"),
        _vec(y_ini, sms.Yp.shape[0], "y_ini"),
        _vec(u, sms.Uf.shape[0], "u"),
    )


def pinv_solution(sms: SignalMatrixSet, u_ini, y_ini, u) -> ParameterVector:
    """Minimum-norm least-squares ``g`` for ``col(Up, Yp, Uf) g = col(u_ini, y_ini, u)``."""
    u_ini, y_ini, u = _check_online(sms, u_ini, y_ini, u)
    H = np.vstack([sms.Up, sms.Yp, sms.Uf])
    g = np.linalg.lstsq(H, np.concatenate([u_ini, y_ini, u]), rcond=None)[0]
    return ParameterVector(g=g, provenance=Provenance.PINV)


def sigma_y(g, noise: NoiseModel, L0: int, Lp: int, kind="hankel") -> OutputCovariance:
    """Covariance of ``col(Yp g - y_ini, Yf g)`` for a fixed ``g``.

    Hankel data gives entries ``sigma2 * sum_k g_k g_{k+|i-j|}`` (the
    autocorrelation of ``g``) plus ``sigma_p2`` on the first ``L0``
    diagonal entries. Page data has independent noise in every entry, so
    only the diagonal survives. For compressed data the off-diagonal terms
    are not recoverable and only the diagonal is returned.
    """
    g = np.asarray(g, dtype=float).reshape(-1)
    kind = MatrixKind(kind)
    L = L0 + Lp
    M = g.size
    if kind is MatrixKind.HANKEL:
        ac = np.correlate(g, g, mode="full")[M - 1:]
        lags = np.abs(np.subtract.outer(np.arange(L), np.arange(L)))
        acL = np.zeros(L)
        acL[: min(L, M)] = ac[: min(L, M)]
        S = noise.sigma2 * acL[lags]
    else:
        S = noise.sigma2 * float(g @ g) * np.eye(L)
    S[np.arange(L0), np.arange(L0)] += noise.sigma_p2
    return OutputCovariance(sigma_y=S, diag_only=kind is MatrixKind.COMPRESSED, L0=L0)


def lambda_weight(g, noise: NoiseModel, L0: int, Lp: int) -> float:
    """Ridge weight ``Lp*sigma_p2/||g||^2 + (L0 + Lp)*sigma2``."""
    lam = (L0 + Lp) * noise.sigma2
    if noise.sigma_p2 > 0:
        gg = float(np.dot(g, g))
        if gg == 0.0:
            raise DegenerateInputError("zero pseudoinverse solution: ||g|| = 0 with sigma_p2 > 0")
        lam += Lp * noise.sigma_p2 / gg
    return lam


@dataclass(frozen=True)
class SqpStep:
    """``g_next = P @ y_ini + Q @ col(u_ini, u)``; ``nu`` is the constraint multiplier."""

    g: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    nu: np.ndarray
    lam: float


def _affine_maps(sms: SignalMatrixSet, lam: float):
    """P, Q and the multiplier maps of the equality-constrained ridge problem."""
    U, Yp = sms.U, sms.Yp
    M = sms.M
    if lam > 0:
        F = Yp.T @ Yp
        F[np.diag_indices(M)] += lam
        cF = linalg.cho_factor(F, lower=True, check_finite=False)
        FiUt = linalg.cho_solve(cF, U.T, check_finite=False)
        FiYt = linalg.cho_solve(cF, Yp.T, check_finite=False)
        S = U @ FiUt
        try:
            cS = linalg.cho_factor(S, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise SingularConstraintError(numerical_rank(S), S.shape[0]) from None
        if np.linalg.cond(S) > 1e14:
            raise SingularConstraintError(numerical_rank(S), S.shape[0])
        Q = FiUt @ linalg.cho_solve(cS, np.eye(S.shape[0]), check_finite=False)
        P = FiYt - Q @ (U @ FiYt)
        # nu = (U F^-1 U^T)^-1 (U F^-1 Yp^T y_ini - u~)
        Nu_y = linalg.cho_solve(cS, U @ FiYt, check_finite=False)
        Nu_u = -linalg.cho_solve(cS, np.eye(S.shape[0]), check_finite=False)
        return P, Q, Nu_y, Nu_u
    # lam == 0: minimum-norm minimizer of ||Yp g - y_ini|| on {U g = u~}
    Upinv = np.linalg.pinv(U, rcond=NULLSPACE_RTOL)
    if numerical_rank(U) < U.shape[0]:
        raise SingularConstraintError(numerical_rank(U), U.shape[0])
    _, s, Vt = np.linalg.svd(U)
    Nb = Vt[U.shape[0]:].T
    YN_pinv = np.linalg.pinv(Yp @ Nb, rcond=NULLSPACE_RTOL)
    P = Nb @ YN_pinv
    Q = Upinv - P @ Yp @ Upinv
    # multipliers satisfy U^T nu = Yp^T (y_ini - Yp g)
    R = np.eye(Yp.shape[0]) - Yp @ P
    Nu_y = Upinv.T @ Yp.T @ R
    Nu_u = -Upinv.T @ Yp.T @ Yp @ Q
    return P, Q, Nu_y, Nu_u


def sqp_step(g_prev, sms: SignalMatrixSet, y_ini, u_ini, u, noise: NoiseModel) -> SqpStep:
    """One closed-form SQP update with the weight frozen at ``lam(g_prev)``.

    Solves ``min lam ||g||^2 + ||Yp g - y_ini||^2`` s.t. ``U g = col(u_ini, u)``.
    With ``lam == 0`` (noise-free data) the minimum-norm minimizer is returned.
    """
    u_ini, y_ini, u = _check_online(sms, u_ini, y_ini, u)
    lam = lambda_weight(g_prev, noise, sms.L0, sms.Lp)
    P, Q, Nu_y, Nu_u = _affine_maps(sms, lam)
    ut = np.concatenate([u_ini, u])
    return SqpStep(g=P @ y_ini + Q @ ut, P=P, Q=Q, nu=Nu_y @ y_ini + Nu_u @ ut, lam=lam)


@dataclass(frozen=True)
class SmmProblem:
    sms: SignalMatrixSet
    u_ini: np.ndarray
    y_ini: np.ndarray
    u: np.ndarray
    noise: NoiseModel
    eps: float = 1e-6
    max_iters: int = 50

    def __post_init__(self):
        u_ini, y_ini, u = _check_online(self.sms, self.u_ini, self.y_ini, self.u)
        object.__setattr__(self, "u_ini", u_ini)
        object.__setattr__(self, "y_ini", y_ini)
        object.__setattr__(self, "u", u)
        if self.eps <= 0 or self.max_iters < 1:
            raise ValueError("eps must be > 0 and max_iters >= 1")


@dataclass(frozen=True)
class SmmResult:
    g: ParameterVector
    y: np.ndarray
    cov: OutputCovariance
    converged: bool
    norms: tuple = field(default=())

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iters"

    def to_record(self) -> dict:
        return {
            "g": self.g.g.tolist(),
            "y": self.y.tolist(),
            "diag_sigma_y": np.diag(self.cov.sigma_y).tolist(),
            "iters": self.g.iters,
            "lambda": self.g.lam,
            "status": self.status,
        }


def smm_simulate(problem: SmmProblem) -> SmmResult:
    """Maximum-likelihood data-driven simulation (the signal matrix model).

    Starts from the pseudoinverse solution and repeats :func:`sqp_step`
    until ``||g_k - g_{k-1}|| < eps ||g_{k-1}||``. Without online noise the
    weight does not depend on ``g`` and a single step is exact.
    ``norms`` holds ``||g_k||`` for every iterate, starting with ``k = 0``.
    """
    p = problem
    sms = p.sms
    g = pinv_solution(sms, p.u_ini, p.y_ini, p.u).g
    norms = [float(np.linalg.norm(g))]
    converged = False
    lam = None
    k = 0
    if p.noise.sigma_p2 == 0:
        lam = lambda_weight(g, p.noise, sms.L0, sms.Lp)
        P, Q, *_ = _affine_maps(sms, lam)
        g = P @ p.y_ini + Q @ np.concatenate([p.u_ini, p.u])
        norms.append(float(np.linalg.norm(g)))
        k, converged = 1, True
    else:
        while k < p.max_iters:
            step = sqp_step(g, sms, p.y_ini, p.u_ini, p.u, p.noise)
            k += 1
            diff = np.linalg.norm(step.g - g)
            ref = np.linalg.norm(g)
            g, lam = step.g, step.lam
            norms.append(float(np.linalg.norm(g)))
            if diff < p.eps * ref:
                converged = True
                break
        if not converged:
            logger.warning("SQP did not converge in %d iterations", p.max_iters)
    cov = sigma_y(g, p.noise, sms.L0, sms.Lp, sms.kind)
    return SmmResult(
        g=ParameterVector(g=g, provenance=Provenance.SMM_CONVERGED, iters=k, lam=lam),
        y=sms.Yf @ g,
        cov=cov,
        converged=converged,
        norms=tuple(norms),
    )


def mle_objective(g, sms: SignalMatrixSet, y_ini, noise: NoiseModel) -> float:
    """Negative log-likelihood (up to constants) with the diagonal covariance approximation."""
    g = np.asarray(g, dtype=float).reshape(-1)
    y_ini = _vec(y_ini, sms.Yp.shape[0], "y_ini")
    gg = float(g @ g)
    s = noise.sigma2 * gg + noise.sigma_p2
    r = sms.Yp @ g - y_ini
    return sms.Lp * np.log(gg) + sms.L0 * np.log(s) + float(r @ r) / s
