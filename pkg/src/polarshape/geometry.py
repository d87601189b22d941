"""
Landmark preprocessing and polar shape coordinates.

A configuration ``X`` (``N`` landmarks in ``K`` dimensions) is reduced to
``Y = L X Theta^{-1/2}`` with ``L`` the Helmert submatrix, then factored as
``Y = R H`` with ``R = (Y Y')^{1/2}``.  The size is ``r = ||R||_F`` and the
shape is ``W = R / r``.

Shape coordinates use the weighted half-vectorization

    x = (w_11, sqrt(2) w_21, ..., sqrt(2) w_n1, w_22, sqrt(2) w_32, ..., w_nn)

(lower triangle, column by column), whose Euclidean norm equals ``||W||_F = 1``.
The point ``x`` on the unit sphere in ``m + 1 = n(n+1)/2`` dimensions is written
in hyperspherical angles

    x_1     = sin(t_1) ... sin(t_{m-1}) sin(t_m)
    x_2     = sin(t_1) ... sin(t_{m-1}) cos(t_m)
    ...
    x_{m+1} = cos(t_1)

with ``t_1..t_{m-1}`` in ``[0, pi]`` and ``t_m`` in ``[0, 2 pi)``.  The surface
element is ``J(u) = prod_i sin(t_i)^(m - i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "LandmarkMatrix",
    "PolarFactors",
    "PolarShape",
    "helmert_submatrix",
    "whiten_and_center",
    "polar_decompose",
    "shape_of",
    "shape_to_angles",
    "angles_to_shape",
    "weighted_vech",
    "weighted_unvech",
    "jacobian_J",
    "pair_sum_product",
    "is_pd_shape",
    "n_angles",
    "order_from_angles",
    "theta1_max",
    "batch_polar_shapes",
    "spd_power",
]


@dataclass
class LandmarkMatrix:
    """Raw ``N x K`` landmark coordinates of one specimen."""

    values: np.ndarray
    specimen: Optional[str] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("landmark matrix must be two-dimensional")
        N, K = v.shape
        if N < 3:
            raise ValueError(f"need at least 3 landmarks, got {N}")
        if K < N - 1:
            raise ValueError(
                f"polar decomposition needs K >= N - 1 (got N={N}, K={K}); "
                "select fewer landmarks"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("landmark coordinates must be finite")
        self.values = v

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class PolarFactors:
    """``Y = R H`` with ``R`` symmetric PSD and ``H`` having orthonormal rows."""

    R: np.ndarray
    H: np.ndarray
    degenerate: bool = False

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.R)


@dataclass(frozen=True)
class PolarShape:
    """Unit-norm shape ``W``, size ``r`` and angles ``u``."""

    W: np.ndarray
    r: float
    u: np.ndarray = field(repr=False)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.W)

    @property
    def m(self) -> int:
        return self.u.size


def helmert_submatrix(N: int) -> np.ndarray:
    """``(N-1) x N`` Helmert submatrix; row ``j`` is ``(-1, ..., -1, j, 0, ...)/sqrt(j(j+1))``."""
    N = int(N)
    if N < 2:
        raise ValueError("Helmert submatrix needs N >= 2")
    L = np.zeros((N - 1, N))
    for j in range(1, N):
        s = np.sqrt(j * (j + 1.0))
        L[j - 1, :j] = -1.0 / s
        L[j - 1, j] = j / s
    return L


def spd_power(A: np.ndarray, power: float, name: str = "matrix") -> np.ndarray:
    """``A**power`` for a symmetric positive definite ``A`` via its eigendecomposition."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(A, A.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{name} must be symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (A + A.T))
    if vals[0] <= 0:
        raise ValueError(f"{name} is not positive definite: eigenvalue {vals[0]:.6g} <= 0")
    return (vecs * vals ** power) @ vecs.T


def whiten_and_center(X, Theta=None) -> np.ndarray:
    """``Y = L X Theta^{-1/2}``; ``Theta=None`` means the identity."""
    X = np.asarray(X, dtype=float)
    L = helmert_submatrix(X.shape[0])
    Y = L @ X
    if Theta is not None:
        Y = Y @ spd_power(Theta, -0.5, "Theta")
    return Y


def polar_decompose(Y, rank_tol: float = 1e-12) -> PolarFactors:
    """Polar factors from the SVD ``Y = P diag(s) Q'``: ``R = P diag(s) P'``, ``H = P Q'``."""
    Y = np.asarray(Y, dtype=float)
    n, K = Y.shape
    if K < n:
        raise ValueError(f"polar decomposition needs K >= n (got n={n}, K={K})")
    P, s, Qt = np.linalg.svd(Y, full_matrices=False)
    R = (P * s) @ P.T
    R = 0.5 * (R + R.T)
    H = P @ Qt
    degenerate = bool(s[-1] <= rank_tol * max(s[0], np.finfo(float).tiny))
    return PolarFactors(R=R, H=H, degenerate=degenerate)


def shape_of(R) -> PolarShape:
    """Size ``r = ||R||_F``, shape ``W = R / r`` and its angles."""
    R = np.asarray(R, dtype=float)
    r = float(np.linalg.norm(R))
    if r == 0.0:
        raise ValueError("zero matrix has no shape")
    W = R / r
    return PolarShape(W=W, r=r, u=shape_to_angles(W))


def n_angles(n: int) -> int:
    """Number of shape angles ``m = n(n+1)/2 - 1`` for ``n x n`` shapes."""
    return n * (n + 1) // 2 - 1


def order_from_angles(m: int) -> int:
    """Inverse of :func:`n_angles`."""
    n = int(round((np.sqrt(8 * (m + 1) + 1) - 1) / 2))
    if n_angles(n) != m:
        raise ValueError(f"{m} angles do not correspond to a square shape matrix")
    return n


def _vech_index(n: int):
    rows, cols = [], []
    for j in range(n):
        for i in range(j, n):
            rows.append(i)
            cols.append(j)
    rows = np.array(rows)
    cols = np.array(cols)
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, weights


def weighted_vech(W) -> np.ndarray:
    """Weighted half-vectorization (works on stacks ``(..., n, n)``)."""
    W = np.asarray(W, dtype=float)
    rows, cols, w = _vech_index(W.shape[-1])
    return W[..., rows, cols] * w


def weighted_unvech(x, n: Optional[int] = None) -> np.ndarray:
    """Inverse of :func:`weighted_vech`."""
    x = np.asarray(x, dtype=float)
    if n is None:
        n = order_from_angles(x.shape[-1] - 1)
    rows, cols, w = _vech_index(n)
    W = np.zeros(x.shape[:-1] + (n, n))
    v = x / w
    W[..., rows, cols] = v
    W[..., cols, rows] = v
    return W


def _sphere_to_angles(x: np.ndarray) -> np.ndarray:
    m = x.shape[-1] - 1
    u = np.empty(x.shape[:-1] + (m,))
    # t_j pairs the head x_1..x_{m+1-j} against x_{m+2-j}
    sq = np.cumsum(x ** 2, axis=-1)
    for j in range(1, m):
        head = np.sqrt(sq[..., m - j])
        u[..., j - 1] = np.arctan2(head, x[..., m + 1 - j])
    u[..., m - 1] = np.mod(np.arctan2(x[..., 0], x[..., 1]), 2 * np.pi)
    return u


def _angles_to_sphere(u: np.ndarray) -> np.ndarray:
    m = u.shape[-1]
    x = np.empty(u.shape[:-1] + (m + 1,))
    prod = np.ones(u.shape[:-1])
    # x_{m+2-j} = sin(t_1)...sin(t_{j-1}) cos(t_j)
    for j in range(1, m + 1):
        x[..., m + 1 - j] = prod * np.cos(u[..., j - 1])
        prod = prod * np.sin(u[..., j - 1])
    x[..., 0] = prod
    return x


def shape_to_angles(W) -> np.ndarray:
    """Hyperspherical angles of a unit-norm shape (works on stacks)."""
    W = np.asarray(W, dtype=float)
    x = weighted_vech(W)
    nrm = np.linalg.norm(x, axis=-1)
    if np.any(np.abs(nrm - 1.0) > 1e-8):
        raise ValueError("shape matrix must have unit Frobenius norm")
    return _sphere_to_angles(x / nrm[..., None])


def angles_to_shape(u, check: bool = True) -> np.ndarray:
    """Unit-norm shape from angles; raises if the result is not positive definite."""
    u = np.asarray(u, dtype=float)
    n = order_from_angles(u.shape[-1])
    W = weighted_unvech(_angles_to_sphere(u), n)
    if check:
        lam = np.linalg.eigvalsh(W)
        bad = lam[..., 0] <= 0
        if np.any(bad):
            worst = float(np.min(lam[..., 0]))
            raise ValueError(
                f"angles lie outside the positive definite region: smallest eigenvalue {worst:.6g} <= 0"
            )
    return W


def is_pd_shape(u) -> np.ndarray:
    """Indicator of the positive definite angle region."""
    W = angles_to_shape(u, check=False)
    return np.linalg.eigvalsh(W)[..., 0] > 0


def theta1_max(theta2):
    """Upper limit of ``t_1`` inside the PD region for 2 x 2 shapes (``t_2`` in ``(0, pi)``)."""
    theta2 = np.asarray(theta2, dtype=float)
    return np.arctan2(2.0 * np.sin(theta2), np.cos(theta2) ** 2)


def jacobian_J(u) -> np.ndarray:
    """``J(u) = prod_{i=1}^m sin(t_i)^(m - i)``."""
    u = np.asarray(u, dtype=float)
    m = u.shape[-1]
    powers = np.arange(m - 1, -1, -1)
    out = np.prod(np.sin(u) ** powers, axis=-1)
    return out if out.ndim else float(out)


def pair_sum_product(eigenvalues: Sequence[float]) -> float:
    """``prod_{i<j} (l_i + l_j)``; 1 for a single eigenvalue."""
    lam = np.asarray(eigenvalues, dtype=float)
    out = np.ones(lam.shape[:-1])
    p = lam.shape[-1]
    for i in range(p):
        for j in range(i + 1, p):
            out = out * (lam[..., i] + lam[..., j])
    return out if out.ndim else float(out)


def batch_polar_shapes(Xs: Iterable, Theta=None):
    """Vectorized ``X -> (W, r, u, degenerate)`` over a collection of configurations.

    Returns arrays of shapes ``(S, n, n)``, ``(S,)``, ``(S, m)`` and ``(S,)``.
    """
    X = np.stack([np.asarray(x, dtype=float) for x in Xs])
    L = helmert_submatrix(X.shape[1])
    Y = np.einsum("ij,sjk->sik", L, X)
    if Theta is not None:
        Y = Y @ spd_power(Theta, -0.5, "Theta")
    return shapes_from_reduced(Y)


def shapes_from_reduced(Y: np.ndarray):
    """Vectorized shapes from reduced configurations ``Y`` of shape ``(S, n, K)``."""
    Y = np.asarray(Y, dtype=float)
    P, s, _ = np.linalg.svd(Y, full_matrices=False)
    R = np.einsum("sij,sj,skj->sik", P, s, P)
    R = 0.5 * (R + np.swapaxes(R, -1, -2))
    r = np.linalg.norm(R, axis=(-2, -1))
    W = R / r[:, None, None]
    u = _sphere_to_angles(weighted_vech(W))
    degenerate = s[:, -1] <= 1e-12 * s[:, 0]
    return W, r, u, degenerate
