"""Hankel and Page data matrices, excitation checks and SVD compression."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .lti import RANK_RTOL, _as_2d_signal, numerical_rank


class MatrixKind(str, Enum):
    HANKEL = "hankel"
    PAGE = "page"
    COMPRESSED = "compressed"


class SisoOnlyError(ValueError):
    """Raised when a SISO-only operation receives multichannel data."""


def build_hankel(signal, L: int) -> np.ndarray:
    """Block Hankel matrix of depth ``L``; column ``j`` is the window starting at sample ``j``.

    Multichannel signals (N, n) give ``L*n`` rows: block row ``i`` holds
    sample ``i + j`` with channels stacked inside the block.
    """
    x = _as_2d_signal(signal)
    N, n = x.shape
    if L < 1 or N < L:
        raise ValueError(f"need 1 <= L <= N, got L={L}, N={N}")
    # (M, n, L) -> (L, n, M) -> (L*n, M)
    win = sliding_window_view(x, L, axis=0)
    return np.ascontiguousarray(win.transpose(2, 1, 0).reshape(L * n, N - L + 1))


def build_page(signal, L: int) -> np.ndarray:
    """Page matrix: disjoint consecutive windows of length ``L``; the remainder is dropped."""
    x = _as_2d_signal(signal)
    N, n = x.shape
    if L < 1 or N < L:
        raise ValueError(f"need 1 <= L <= N, got L={L}, N={N}")
    M = N // L
    # (M, L, n) -> (L, n, M)
    return np.ascontiguousarray(x[: M * L].reshape(M, L, n).transpose(1, 2, 0).reshape(L * n, M))


def persistency_order(signal, L: int, rtol: float = RANK_RTOL) -> bool:
    """True iff ``signal`` is persistently exciting of order ``L``."""
    x = _as_2d_signal(signal)
    N, n = x.shape
    if L < 1 or N < L * (n + 1) - 1:
        return False
    return numerical_rank(build_hankel(x, L), rtol) == L * n


@dataclass(frozen=True)
class SignalMatrixSet:
    """Past/future partition of input and output data matrices.

    Row counts are ``L0*nu`` (Up), ``Lp*nu`` (Uf), ``L0*ny`` (Yp) and
    ``Lp*ny`` (Yf); all four share ``M`` columns.
    """

    Up: np.ndarray
    Uf: np.ndarray
    Yp: np.ndarray
    Yf: np.ndarray
    L0: int
    Lp: int
    kind: MatrixKind = MatrixKind.HANKEL

    def __post_init__(self):
        mats = [np.array(m, dtype=float) for m in (self.Up, self.Uf, self.Yp, self.Yf)]
        M = mats[0].shape[1]
        if any(m.ndim != 2 or m.shape[1] != M for m in mats):
            raise ValueError("all data matrices must be 2-D with the same column count")
        if mats[0].shape[0] % self.L0 or mats[1].shape[0] % self.Lp:
            raise ValueError("row counts inconsistent with L0/Lp")
        nu = mats[0].shape[0] // self.L0
        ny = mats[2].shape[0] // self.L0
        if mats[1].shape[0] != self.Lp * nu or mats[2].shape[0] != self.L0 * ny or mats[3].shape[0] != self.Lp * ny:
            raise ValueError("row counts inconsistent with L0/Lp")
        for name, m in zip(("Up", "Uf", "Yp", "Yf"), mats):
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        object.__setattr__(self, "kind", MatrixKind(self.kind))

    @property
    def L(self) -> int:
        return self.L0 + self.Lp

    @property
    def M(self) -> int:
        return self.Up.shape[1]

    @property
    def nu(self) -> int:
        return self.Up.shape[0] // self.L0

    @property
    def ny(self) -> int:
        return self.Yp.shape[0] // self.L0

    @property
    def U(self) -> np.ndarray:
        return np.vstack([self.Up, self.Uf])

    @property
    def Y(self) -> np.ndarray:
        return np.vstack([self.Yp, self.Yf])

    def require_siso(self) -> None:
        if self.nu != 1 or self.ny != 1:
            raise SisoOnlyError(f"operation supports SISO data only (nu={self.nu}, ny={self.ny})")


def partition(u, y, L0: int, Lp: int, kind="hankel") -> SignalMatrixSet:
    """Split depth ``L0 + Lp`` data matrices of ``u`` and ``y`` into past and future blocks."""
    kind = MatrixKind(kind)
    if kind is MatrixKind.COMPRESSED:
        raise ValueError("use compress() to obtain a compressed set")
    if L0 < 1 or Lp < 1:
        raise ValueError("L0 and Lp must be >= 1")
    u = _as_2d_signal(u, "u")
    y = _as_2d_signal(y, "y")
    if len(u) != len(y):
        raise ValueError("u and y must have equal length")
    L = L0 + Lp
    if len(u) < L:
        raise ValueError(f"insufficient data: N={len(u)} < L0+Lp={L}")
    build = build_hankel if kind is MatrixKind.HANKEL else build_page
    Hu, Hy = build(u, L), build(y, L)
    nu, ny = u.shape[1], y.shape[1]
    return SignalMatrixSet(
        Up=Hu[: L0 * nu], Uf=Hu[L0 * nu:], Yp=Hy[: L0 * ny], Yf=Hy[L0 * ny:], L0=L0, Lp=Lp, kind=kind
    )


@dataclass(frozen=True)
class RankReport:
    rank_UY: int
    full_row_rank_U: bool
    consistent_with_nx: bool


def check_rank_conditions(sms: SignalMatrixSet, nx_hint: int, rtol: float = RANK_RTOL) -> RankReport:
    """Rank diagnostics of the data matrices.

    For noise-free data from a minimal system with a sufficiently exciting
    input, ``rank(col(U, Y)) == nx + nu*L``; noisy data is full rank.
    """
    U = sms.U
    rank_UY = numerical_rank(np.vstack([U, sms.Y]), rtol)
    return RankReport(
        rank_UY=rank_UY,
        full_row_rank_U=numerical_rank(U, rtol) == U.shape[0],
        consistent_with_nx=rank_UY == nx_hint + sms.nu * sms.L,
    )


def compress(sms: SignalMatrixSet) -> SignalMatrixSet:
    """Replace the ``M`` data columns by the ``2L`` columns of ``W S`` from the SVD of col(U, Y).

    Simulation outputs of the signal matrix model are unchanged; the
    right singular vectors are discarded.
    """
    sms.require_siso()
    if sms.kind is MatrixKind.COMPRESSED:
        return sms
    L = sms.L
    if sms.M < 2 * L:
        raise ValueError(f"compression needs M >= 2L (M={sms.M}, 2L={2 * L})")
    data = np.vstack([sms.Up, sms.Uf, sms.Yp, sms.Yf])
    W, s, _ = np.linalg.svd(data, full_matrices=False)
    WS = W * s
    L0, Lp = sms.L0, sms.Lp
    return SignalMatrixSet(
        Up=WS[:L0],
        Uf=WS[L0:L],
        Yp=WS[L:L + L0],
        Yf=WS[L + L0:],
        L0=L0,
        Lp=Lp,
        kind=MatrixKind.COMPRESSED,
    )


def write_matrix_csv(path, X: np.ndarray) -> None:
    """Dump a matrix row-major with a ``# rows cols`` header line."""
    X = np.atleast_2d(X)
    with open(path, "w") as f:
        f.write(f"# {X.shape[0]} {X.shape[1]}\n")
        for row in X:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as f:
        rows, cols = (int(v) for v in f.readline().lstrip("#").split())
        X = np.loadtxt(f, delimiter=",", ndmin=2)
    return X.reshape(rows, cols)
