"""Discrete-time LTI systems with additive output noise.

These serve both as the data generator for experiments and as the
ground-truth oracle in tests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

RANK_RTOL = 1e-10


def numerical_rank(X: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Rank with singular values below ``rtol * s_max`` treated as zero."""
    X = np.atleast_2d(X)
    if X.size == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _as_2d_signal(x, name: str = "signal") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D (time x channels), got shape {x.shape}")
    return x


@dataclass(frozen=True)
class LtiSystem:
    """State-space model ``x+ = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        D = np.atleast_2d(np.array(self.D, dtype=float))
        nx = A.shape[0] if A.size else 0
        ny, nu = D.shape
        B = np.array(self.B, dtype=float).reshape(nx, nu)
        C = np.array(self.C, dtype=float).reshape(ny, nx)
        if nx:
            if A.shape != (nx, nx):
                raise ValueError(f"A must be square, got {A.shape}")
        else:
            A = np.zeros((0, 0))
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.D.shape[1]

    @property
    def ny(self) -> int:
        return self.D.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Input/output (and optionally state) samples, arrays shaped (N, channels)."""

    u: np.ndarray
    y: np.ndarray
    x: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        u = _as_2d_signal(self.u, "u")
        y = _as_2d_signal(self.y, "y")
        if len(u) != len(y) or len(u) < 1:
            raise ValueError(f"u and y must have equal length >= 1, got {len(u)} and {len(y)}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)
        if self.x is not None:
            x = _as_2d_signal(self.x, "x")
            if len(x) != len(u):
                raise ValueError("x must have the same length as u")
            object.__setattr__(self, "x", x)

    def __len__(self) -> int:
        return len(self.u)


@dataclass(frozen=True)
class NoiseModel:
    """Output-noise variances: ``sigma2`` on offline data, ``sigma_p2`` on online measurements."""

    sigma2: float = 0.0
    sigma_p2: float = 0.0

    def __post_init__(self):
        if self.sigma2 < 0 or self.sigma_p2 < 0:
            raise ValueError("noise variances must be nonnegative")


def tf_to_ss(numerator, denominator) -> LtiSystem:
    """Controllable canonical realization of a SISO transfer function.

    Coefficients are in descending powers of z. ``D`` is the direct
    feedthrough; a static gain gives a system with zero states.
    """
    num = np.atleast_1d(np.asarray(numerator, dtype=float))
    den = np.atleast_1d(np.asarray(denominator, dtype=float))
    if den.size == 0 or den[0] == 0.0:
        raise ValueError("leading denominator coefficient must be nonzero")
    num = np.trim_zeros(num, "f")
    if num.size > den.size:
        raise ValueError("improper transfer function: deg(num) > deg(den)")
    num = np.concatenate([np.zeros(den.size - num.size), num]) / den[0]
    den = den / den[0]
    n = den.size - 1
    d = num[0]
    if n == 0:
        return LtiSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d]])
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = (num[1:] - d * den[1:])[None, :]
    return LtiSystem(A, B, C, [[d]])


def simulate(system: LtiSystem, u, x0=None) -> Trajectory:
    """Noise-free state and output recursion driven by ``u`` from ``x0``."""
    u = _as_2d_signal(u, "input")
    if u.shape[1] != system.nu:
        raise ValueError(f"input has {u.shape[1]} channels, system expects {system.nu}")
    x = np.zeros(system.nx) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if x.shape != (system.nx,):
        raise ValueError(f"x0 must have dimension {system.nx}")
    N = len(u)
    X = np.empty((N, system.nx))
    Y = np.empty((N, system.ny))
    A, B, C, D = system.A, system.B, system.C, system.D
    for t in range(N):
        X[t] = x
        Y[t] = C @ x + D @ u[t]
        x = A @ x + B @ u[t]
    return Trajectory(u=u, y=Y, x=X)


def impulse_response(system: LtiSystem, n: int) -> np.ndarray:
    """Markov parameters ``h_0 = D, h_k = C A^{k-1} B``.

    Returns shape (n,) for SISO systems and (n, ny, nu) otherwise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    h = np.zeros((n, system.ny, system.nu))
    h[0] = system.D
    AkB = system.B
    for k in range(1, n):
        h[k] = system.C @ AkB
        AkB = system.A @ AkB
    if system.ny == 1 and system.nu == 1:
        return h[:, 0, 0]
    return h


def add_noise(traj: Trajectory, sigma2: float, seed=None) -> Trajectory:
    """Return ``traj`` with i.i.d. N(0, sigma2) noise added to every output sample.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if sigma2 == 0:
        return traj
    rng = np.random.default_rng(seed)
    w = np.sqrt(sigma2) * rng.standard_normal(traj.y.shape)
    return Trajectory(u=traj.u, y=traj.y + w, x=traj.x)


@dataclass(frozen=True)
class MinimalityReport:
    controllable: bool
    observable: bool

    @property
    def minimal(self) -> bool:
        return self.controllable and self.observable


def check_minimality(system: LtiSystem, rtol: float = RANK_RTOL) -> MinimalityReport:
    nx = system.nx
    if nx == 0:
        return MinimalityReport(True, True)
    ctrb = [system.B]
    obsv = [system.C]
    for _ in range(nx - 1):
        ctrb.append(system.A @ ctrb[-1])
        obsv.append(obsv[-1] @ system.A)
    return MinimalityReport(
        controllable=numerical_rank(np.hstack(ctrb), rtol) == nx,
        observable=numerical_rank(np.vstack(obsv), rtol) == nx,
    )


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Write ``t,u_1..u_nu,y_1..y_ny`` rows with 17 significant digits."""
    nu, ny = traj.u.shape[1], traj.y.shape[1]
    header = ["t"] + [f"u_{i + 1}" for i in range(nu)] + [f"y_{i + 1}" for i in range(ny)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for t in range(len(traj)):
            w.writerow([t] + [f"{v:.17g}" for v in traj.u[t]] + [f"{v:.17g}" for v in traj.y[t]])


def read_trajectory_csv(path) -> Trajectory:
    with open(Path(path), newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t":
        raise ValueError("trajectory CSV must start with a 't' column")
    u_cols = [i for i, h in enumerate(header) if h.startswith("u_")]
    y_cols = [i for i, h in enumerate(header) if h.startswith("y_")]
    if not u_cols or not y_cols:
        raise ValueError("trajectory CSV needs u_* and y_* columns")
    data = np.array([[float(v) for v in row] for row in body if row])
    return Trajectory(u=data[:, u_cols], y=data[:, y_cols])


# Benchmark plants, coefficients in descending powers of z.
G1_NUM = [0.1159, 0.0, 0.5 * 0.1159, 0.0]
G1_DEN = [1.0, -2.2, 2.42, -1.87, 0.7225]
G2_NUM = [0.9183, 0.0]
G2_DEN = [1.0, 0.24, 0.36]


def g1() -> LtiSystem:
    """Fourth-order slow benchmark plant with a long impulse response tail."""
    return tf_to_ss(G1_NUM, G1_DEN)


def g2() -> LtiSystem:
    """Second-order fast benchmark plant."""
    return tf_to_ss(G2_NUM, G2_DEN)
