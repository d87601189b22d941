"""
Elliptical generators and the polar size-and-shape and shape densities.

Conventions
-----------
Every density is parameterized after whitening: ``mu`` is the ``n x K``
Helmert-reduced, ``Theta``-whitened mean (``n = N - 1``) and ``Sigma`` the
``n x n`` row covariance, so the reduced configuration ``Y`` has density

    |Sigma|^{-K/2} h(tr Sigma^{-1} (Y - mu)(Y - mu)').

With ``c = nK/2``, ``b = K/2``, ``a = tr Sigma^{-1} W^2`` and
``G = Sigma^{-1} mu mu' Sigma^{-1}`` the noncentral shape density of a Kotz
type I model with integer ``T`` is

    f(u) = C |Sigma|^{-K/2} a^{-c} prod_{i<j}(l_i + l_j) |W|^{K-n} J(u) e^{-w}
           * sum_t S_t(R W G W / a) Gamma(c + t) beta_t(w)

    C = 2^{n-1} 2^{-n(n-1)/4} Gamma(c) / (Gamma_n(b) Gamma(T - 1 + c)),
    w = R tr(Sigma^{-1} mu mu'),

where ``S_t`` is :func:`polarshape.zonal.degree_term` with ``a = b`` and
``beta_t`` is the polynomial from :func:`kotz_beta`.  The factor
``2^{-n(n-1)/4}`` comes from measuring angles with the weighted
vectorization of :mod:`polarshape.geometry`; ``|W|^{K-n}`` is the part of
the polar Jacobian ``(dY) = |R|^{K-n} prod(L_i + L_j) (dR)(H dH')`` that
vanishes when ``K = n``.  All sums run in log space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate
from scipy.special import gammaln, multigammaln

from . import geometry as geo
from .zonal import (
    SeriesControl,
    SeriesConvergenceError,
    log_degree_terms,
    truncate_log_series,
)

__all__ = [
    "GeneratorSpec",
    "ModelParams",
    "Noncentrality",
    "QuadratureError",
    "VARIANTS",
    "variant_spec",
    "kotz_h",
    "kotz_h_derivative",
    "log_kotz_h_derivative",
    "kotz_beta",
    "noncentrality",
    "size_and_shape_density",
    "central_size_and_shape_density",
    "shape_density_general",
    "central_shape_density",
    "gaussian_shape_density",
    "kotz_shape_density",
    "isotropic_shape_density",
    "log_shape_density_batch",
    "log_isotropic_density_batch",
]

LOG2 = math.log(2.0)

VARIANTS = ("gaussian", "kotz-t2", "kotz-t3")


class QuadratureError(ArithmeticError):
    """Numerical integration did not reach its tolerance."""


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class GeneratorSpec:
    """Elliptical generator for an ``N x K`` landmark model.

    ``family`` is ``"gaussian"``, ``"kotz"`` (type I, ``s = 1``) or ``"custom"``.
    A custom generator supplies ``derivative(y, k)`` returning ``h^{(k)}(y)``;
    it is only usable by the quadrature routes.
    """

    family: str
    N: int
    K: int
    T: float = 1.0
    R: float = 0.5
    s: float = 1.0
    derivative: Optional[Callable] = None

    def __post_init__(self):
        if self.family not in ("gaussian", "kotz", "custom"):
            raise ValueError(f"unknown generator family {self.family!r}")
        if self.N < 2 or self.K < self.N - 1:
            raise ValueError(f"need N >= 2 and K >= N - 1, got N={self.N}, K={self.K}")
        if self.family == "gaussian" and (self.T != 1.0 or self.R != 0.5):
            raise ValueError("the Gaussian generator has T = 1 and R = 1/2")
        if self.family != "custom":
            if self.s != 1.0:
                raise ValueError("only s = 1 is supported for Kotz generators")
            if not self.R > 0:
                raise ValueError("Kotz parameter R must be positive")
            if not self.T > 1.0 - self.c:
                raise ValueError("Kotz parameter T must exceed 1 - nK/2")
        elif self.derivative is None:
            raise ValueError("a custom generator needs a derivative callable")

    @classmethod
    def gaussian(cls, N: int, K: int) -> "GeneratorSpec":
        return cls("gaussian", N, K)

    @classmethod
    def kotz(cls, T: float, R: float, N: int, K: int) -> "GeneratorSpec":
        return cls("kotz", N, K, T=float(T), R=float(R))

    @classmethod
    def custom(cls, derivative: Callable, N: int, K: int) -> "GeneratorSpec":
        return cls("custom", N, K, derivative=derivative)

    @property
    def n(self) -> int:
        return self.N - 1

    @property
    def c(self) -> float:
        return self.n * self.K / 2.0

    @property
    def is_integer_T(self) -> bool:
        return float(self.T).is_integer()

    @property
    def log_norm(self) -> float:
        """log of ``R^{T-1+c} Gamma(c) / (pi^c Gamma(T-1+c))``."""
        c, T, R = self.c, self.T, self.R
        return (T - 1 + c) * math.log(R) + math.lgamma(c) - c * math.log(math.pi) - math.lgamma(T - 1 + c)

    def radial_shape(self) -> float:
        """Gamma shape of ``rho^2`` in ``Y = mu + Sigma^{1/2} rho U``: ``T - 1 + nK/2``."""
        return self.T - 1 + self.c


def variant_spec(variant: str, N: int, K: int) -> GeneratorSpec:
    """Generator of one of the isotropic model variants."""
    if variant == "gaussian":
        return GeneratorSpec.gaussian(N, K)
    if variant == "kotz-t2":
        return GeneratorSpec.kotz(2, 0.5, N, K)
    if variant == "kotz-t3":
        return GeneratorSpec.kotz(3, 0.5, N, K)
    raise ValueError(f"unknown model variant {variant!r}; choose from {VARIANTS}")


def _bracket_coeffs(T: float, k: int) -> list:
    # coefficients of (-Ry)^{-m}, m = 0..k, in the derivative bracket
    out = [1.0]
    prod = 1.0
    binom = 1.0
    for m in range(1, k + 1):
        prod *= T - 1 - (m - 1)
        binom = binom * (k - m + 1) / m
        if prod == 0.0:
            break
        out.append(binom * prod)
    return out


def log_kotz_h_derivative(y, k: int, spec: GeneratorSpec):
    """``(log|h^{(k)}(y)|, sign)`` for ``y > 0``, vectorized over ``y``."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("generator derivatives need y > 0")
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    if spec.family == "custom":
        v = np.asarray(spec.derivative(y, k), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(v)), np.sign(v)
    T, R = spec.T, spec.R
    coeffs = _bracket_coeffs(T, k)
    z = -1.0 / (R * y)
    bracket = np.zeros_like(y)
    zp = np.ones_like(y)
    for cm in coeffs:
        bracket = bracket + cm * zp
        zp = zp * z
    sign = np.sign(bracket) * (-1.0) ** k
    with np.errstate(divide="ignore"):
        logv = spec.log_norm + k * math.log(R) + (T - 1) * np.log(y) - R * y + np.log(np.abs(bracket))
    return logv, sign


def kotz_h(y, spec: GeneratorSpec):
    """Generator value ``h(y)``."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("generator argument must be nonnegative")
    if spec.family == "custom":
        out = np.asarray(spec.derivative(y, 0), dtype=float)
        return out if out.ndim else float(out)
    T = spec.T
    if T < 1 and np.any(y == 0):
        raise ValueError("h(0) diverges for T < 1")
    with np.errstate(divide="ignore"):
        logy = np.where(y > 0, np.log(np.where(y > 0, y, 1.0)), -np.inf)
    if T == 1:
        logp = np.zeros_like(y)
    else:
        logp = (T - 1) * logy
    out = np.exp(spec.log_norm + logp - spec.R * y)
    return out if out.ndim else float(out)


def kotz_h_derivative(y, k: int, spec: GeneratorSpec):
    """Closed-form ``k``-th derivative ``h^{(k)}(y)`` for ``y > 0``."""
    logv, sign = log_kotz_h_derivative(y, k, spec)
    out = sign * np.exp(logv)
    return out if np.ndim(out) else float(out)


def kotz_beta(t: int, w: float, T: int, c: float) -> float:
    """Polynomial weight of degree ``t`` in the Kotz shape series.

    ``sum_{m=0}^{min(2t, T-1)} sum_{i=0}^{T-1-m} (-1)^m C(2t, m) (T-1)!/(T-1-m)!
    C(T-1-m, i) w^{T-1-m-i} (c + t)_i``; equal to 1 when ``T = 1``.
    """
    T = int(T)
    total = 0.0
    for m in range(0, min(2 * t, T - 1) + 1):
        fall = math.factorial(T - 1) / math.factorial(T - 1 - m)
        outer = (-1) ** m * math.comb(2 * t, m) * fall
        for i in range(0, T - m):
            rising = math.exp(math.lgamma(c + t + i) - math.lgamma(c + t))
            total += outer * math.comb(T - 1 - m, i) * w ** (T - 1 - m - i) * rising
    return total


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class Noncentrality:
    """Symmetrized noncentrality ``Sigma^{-1/2} mu mu' Sigma^{-1/2}``."""

    Omega: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.Omega))


@dataclass
class ModelParams:
    """Whitened, Helmert-reduced model parameters.

    ``Sigma`` is an ``n x n`` SPD matrix or a positive scalar ``sigma^2``
    (isotropic mode).  ``Theta`` is kept only to map samples back to landmark
    coordinates; densities assume data already whitened by it.
    """

    mu: np.ndarray
    Sigma: Union[np.ndarray, float]
    Theta: Optional[np.ndarray] = None

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        n, K = self.mu.shape
        if K < n:
            raise ValueError(f"mean must be n x K with K >= n, got {self.mu.shape}")
        if np.ndim(self.Sigma) == 0:
            s2 = float(self.Sigma)
            if not s2 > 0:
                raise ValueError("sigma^2 must be positive")
            self.Sigma = s2
        else:
            S = np.asarray(self.Sigma, dtype=float)
            if S.shape != (n, n):
                raise ValueError(f"Sigma must be {n} x {n}")
            geo.spd_power(S, 1.0, "Sigma")
            self.Sigma = 0.5 * (S + S.T)
        if self.Theta is not None:
            Th = np.asarray(self.Theta, dtype=float)
            if Th.shape != (K, K):
                raise ValueError(f"Theta must be {K} x {K}")
            geo.spd_power(Th, 1.0, "Theta")
            self.Theta = Th

    @classmethod
    def isotropic(cls, mu, sigma2: float) -> "ModelParams":
        return cls(mu, float(sigma2))

    @classmethod
    def from_landmark_params(cls, mu_X, Sigma_X, Theta=None) -> "ModelParams":
        """Convert ``(mu_X, Sigma_X, Theta)`` on the ``N x K`` landmark scale."""
        mu_X = np.asarray(mu_X, dtype=float)
        L = geo.helmert_submatrix(mu_X.shape[0])
        mu = L @ mu_X
        if Theta is not None:
            mu = mu @ geo.spd_power(Theta, -0.5, "Theta")
        Sigma = L @ np.asarray(Sigma_X, dtype=float) @ L.T
        return cls(mu, Sigma, Theta)

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def K(self) -> int:
        return self.mu.shape[1]

    @property
    def is_isotropic(self) -> bool:
        return np.ndim(self.Sigma) == 0

    @property
    def Sigma_matrix(self) -> np.ndarray:
        if self.is_isotropic:
            return self.Sigma * np.eye(self.n)
        return self.Sigma

    def sigma_inverse(self) -> np.ndarray:
        if self.is_isotropic:
            return np.eye(self.n) / self.Sigma
        return np.linalg.inv(self.Sigma)

    def log_det_sigma(self) -> float:
        if self.is_isotropic:
            return self.n * math.log(self.Sigma)
        return float(np.linalg.slogdet(self.Sigma)[1])


def noncentrality(params: ModelParams) -> Noncentrality:
    """``Omega = Sigma^{-1/2} mu mu' Sigma^{-1/2}``."""
    if params.is_isotropic:
        Om = params.mu @ params.mu.T / params.Sigma
    else:
        Sh = geo.spd_power(params.Sigma, -0.5, "Sigma")
        Om = Sh @ params.mu @ params.mu.T @ Sh
    return Noncentrality(0.5 * (Om + Om.T))


# ---------------------------------------------------------------------------
# helpers


def _as_shapes(W_or_u):
    """Return ``(W, u, single)`` stacks from a shape, angle vector, or stacks of W."""
    if isinstance(W_or_u, geo.PolarShape):
        return W_or_u.W[None], W_or_u.u[None], True
    x = np.asarray(W_or_u, dtype=float)
    if x.ndim == 1:
        return geo.angles_to_shape(x)[None], x[None], True
    if x.ndim == 2:
        if x.shape[0] != x.shape[1]:
            raise ValueError("expected a square shape matrix or an angle vector")
        return x[None], geo.shape_to_angles(x)[None], True
    if x.ndim == 3:
        return x, geo.shape_to_angles(x), False
    raise ValueError("unrecognized shape argument")


def _finish(logf: np.ndarray, single: bool, log: bool):
    out = logf if log else np.exp(logf)
    return float(out[0]) if single else out


def _log_shape_prefactor(W, u, K):
    n = W.shape[-1]
    lam = np.linalg.eigvalsh(W)
    if np.any(lam[:, 0] <= 0):
        raise ValueError("shape matrix must be positive definite")
    logpair = np.log(geo.pair_sum_product(lam)) if n > 1 else np.zeros(len(W))
    logdet = np.sum(np.log(lam), axis=1)
    logJ = np.log(np.atleast_1d(geo.jacobian_J(u)))
    return logpair + (K - n) * logdet + logJ


def _shape_constant(n: int, K: int) -> float:
    b = K / 2.0
    return (n - 1) * LOG2 - n * (n - 1) / 4.0 * LOG2 - multigammaln(b, n)


def _kernel_eigs(W, G, scale):
    """Eigenvalues of ``scale_s * W_s G W_s`` (PSD), shape ``(S, n)``."""
    B = W @ G @ W
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    ev = np.linalg.eigvalsh(B) * np.asarray(scale)[:, None]
    return np.clip(ev, 0.0, None)


def _adaptive_series(eigs, b, coef_fn, ctl: SeriesControl):
    """Sum ``sum_t S_t(eigs) g_t`` with ``g_t`` from ``coef_fn(M) -> (log|g|, sign)``.

    The computed degree doubles up to ``ctl.max_degree`` until every row meets
    the stopping rule.
    """
    M = min(ctl.max_degree, 24)
    while True:
        logS = log_degree_terms(eigs, b, M)
        logg, sg = coef_fn(M)
        logmag = logS + logg
        sign = np.broadcast_to(sg, logmag.shape)
        last = M >= ctl.max_degree
        res = truncate_log_series(logmag, sign, ctl, raise_on_failure=last)
        if last or np.all(res[2]):
            return res
        M = min(2 * M, ctl.max_degree)


def _gaussian_coefs(c):
    def fn(M):
        t = np.arange(M + 1)
        return gammaln(c + t), np.ones(M + 1)
    return fn


def _kotz_coefs(c, T, w):
    def fn(M):
        t = np.arange(M + 1)
        beta = np.array([kotz_beta(int(tt), w, int(T), c) for tt in t])
        with np.errstate(divide="ignore"):
            return gammaln(c + t) + np.log(np.abs(beta)), np.sign(beta)
    return fn


# ---------------------------------------------------------------------------
# shape densities


def log_shape_density_batch(W, u, params: ModelParams, spec: GeneratorSpec, ctl: SeriesControl,
                            route: str = "kotz"):
    """Log shape density at stacks ``W (S, n, n)``, ``u (S, m)``; closed form.

    ``route="gaussian"`` uses the Gaussian series (requires T = 1, R = 1/2),
    ``route="kotz"`` the integer-T Kotz series.
    """
    W = np.asarray(W, dtype=float)
    n, K = params.n, params.K
    if W.shape[-1] != n:
        raise ValueError(f"shape dimension {W.shape[-1]} does not match the mean ({n} rows)")
    if spec.n != n or spec.K != K:
        raise ValueError("generator dimensions do not match the parameters")
    c, b = n * K / 2.0, K / 2.0
    Si = params.sigma_inverse()
    a = np.einsum("ij,sji->s", Si, W @ W)
    G = Si @ params.mu @ params.mu.T @ Si
    trO = float(np.trace(Si @ params.mu @ params.mu.T))
    if route == "gaussian":
        if spec.T != 1 or spec.R != 0.5:
            raise ValueError("the Gaussian route needs T = 1, R = 1/2")
        R, T = 0.5, 1
        coef = _gaussian_coefs(c)
        const = _shape_constant(n, K)
    elif route == "kotz":
        if spec.family == "custom" or not spec.is_integer_T:
            raise ValueError("the closed-form Kotz route needs an integer T; use the quadrature route")
        R, T = spec.R, int(spec.T)
        coef = _kotz_coefs(c, T, R * trO)
        const = _shape_constant(n, K) + math.lgamma(c) - math.lgamma(T - 1 + c)
    else:
        raise ValueError(f"unknown route {route!r}")
    w = R * trO
    eigs = _kernel_eigs(W, G, R / a)
    logsum, _, _ = _adaptive_series(eigs, b, coef, ctl)
    pre = _log_shape_prefactor(W, u, K)
    return const + pre - 0.5 * K * params.log_det_sigma() - c * np.log(a) - w + logsum


def central_shape_density(W_or_u, params: ModelParams, log: bool = False):
    """Central shape density; identical for every elliptical generator.

    ``2^{n-1} 2^{-n(n-1)/4} Gamma(nK/2) / (Gamma_n(K/2) |Sigma|^{K/2})
    * prod(l_i + l_j) |W|^{K-n} J(u) (tr Sigma^{-1} W^2)^{-nK/2}``
    """
    W, u, single = _as_shapes(W_or_u)
    n, K = params.n, params.K
    c = n * K / 2.0
    a = np.einsum("ij,sji->s", params.sigma_inverse(), W @ W)
    logf = (_shape_constant(n, K) + math.lgamma(c) + _log_shape_prefactor(W, u, K)
            - 0.5 * K * params.log_det_sigma() - c * np.log(a))
    return _finish(logf, single, log)


def gaussian_shape_density(W_or_u, params: ModelParams, ctl: SeriesControl = SeriesControl(), log: bool = False):
    """Noncentral Gaussian shape density (zonal series in ``t``)."""
    W, u, single = _as_shapes(W_or_u)
    spec = GeneratorSpec.gaussian(params.n + 1, params.K)
    return _finish(log_shape_density_batch(W, u, params, spec, ctl, route="gaussian"), single, log)


def kotz_shape_density(W_or_u, params: ModelParams, spec: GeneratorSpec,
                       ctl: SeriesControl = SeriesControl(), log: bool = False):
    """Noncentral Kotz type I shape density for integer ``T`` (finite inner sums)."""
    W, u, single = _as_shapes(W_or_u)
    return _finish(log_shape_density_batch(W, u, params, spec, ctl, route="kotz"), single, log)


def _radial_integral(t, a, w, spec, n, K):
    """``log|I_t|, sign`` for ``I_t = int_0^inf r^{nK+2t-1} h^{(2t)}(r^2 a + w) dr``.

    Substituting ``y = r^2 a`` gives ``a^{-(c+t)}/2 int_0^inf y^{c+t-1} h^{(2t)}(y + w) dy``.
    """
    c = n * K / 2.0
    p = c + t - 1

    def logmag(y):
        lv, sg = log_kotz_h_derivative(y + w, 2 * t, spec)
        return p * np.log(y) + lv, sg

    # locate the bulk of the integrand on a log grid, then integrate piecewise
    grid = np.geomspace(1e-8, 1e4, 400) * max(1.0, p)
    lg, _ = logmag(grid)
    ref = float(np.max(lg))
    peak = float(grid[int(np.argmax(lg))])

    def f(y):
        if y <= 0:
            return 0.0
        lv, sg = logmag(np.array([y]))
        return float(sg[0] * np.exp(lv[0] - ref))

    pieces = [0.0, 0.25 * peak, peak, 4.0 * peak, 16.0 * peak, np.inf]
    total, err = 0.0, 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        with warnings.catch_warnings():
            # convergence is judged from the returned error estimate below
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=400)
        total += val
        err += e
    if not np.isfinite(total) or err > 1e-9 * max(abs(total), 1e-300) + 1e-14:
        raise QuadratureError(f"radial integral t={t} did not converge (estimate {total:.6g}, error {err:.3g})")
    if total == 0.0:
        return -np.inf, 0.0
    return ref + math.log(abs(total)) - (c + t) * math.log(a) - LOG2, math.copysign(1.0, total)


def shape_density_general(W_or_u, params: ModelParams, spec: GeneratorSpec,
                          ctl: SeriesControl = SeriesControl(), route: str = "auto", log: bool = False):
    """Shape density for any generator.

    ``route="auto"`` dispatches Gaussian and integer-T Kotz generators to their
    closed forms and integrates the radial part numerically otherwise.
    ``route="quadrature"`` forces the numerical radial integrals (one per
    series degree), which serves as an independent check of the closed forms.
    """
    W, u, single = _as_shapes(W_or_u)
    if route == "auto":
        if spec.family == "gaussian":
            return _finish(log_shape_density_batch(W, u, params, spec, ctl, route="gaussian"), single, log)
        if spec.family == "kotz" and spec.is_integer_T:
            return _finish(log_shape_density_batch(W, u, params, spec, ctl, route="kotz"), single, log)
        route = "quadrature"
    if route != "quadrature":
        raise ValueError(f"unknown route {route!r}")
    n, K = params.n, params.K
    c, b = n * K / 2.0, K / 2.0
    Si = params.sigma_inverse()
    G = Si @ params.mu @ params.mu.T @ Si
    trO = float(np.trace(Si @ params.mu @ params.mu.T))
    const = n * LOG2 - n * (n - 1) / 4.0 * LOG2 + c * math.log(math.pi) - multigammaln(b, n)
    pre = _log_shape_prefactor(W, u, K)
    out = np.empty(len(W))
    for s in range(len(W)):
        a = float(np.trace(Si @ W[s] @ W[s]))
        eig = _kernel_eigs(W[s:s + 1], G, np.ones(1))

        def coef(M, a=a):
            vals = [_radial_integral(t, a, trO, spec, n, K) for t in range(M + 1)]
            return np.array([v[0] for v in vals]), np.array([v[1] for v in vals])

        if not np.any(eig > 0):
            lI, sI = _radial_integral(0, a, trO, spec, n, K)
            if sI <= 0:
                raise QuadratureError("radial integral is not positive")
            logsum = lI
        else:
            logsum = _adaptive_series(eig, b, coef, ctl)[0][0]
        out[s] = const + pre[s] - 0.5 * K * params.log_det_sigma() + logsum
    return _finish(out, single, log)


# ---------------------------------------------------------------------------
# isotropic variants


def _isotropic_bracket(variant: str, c: float, tau: float):
    def fn(M):
        t = np.arange(M + 1, dtype=float)
        g0 = gammaln(c + t)
        if variant == "gaussian":
            return g0, np.ones(M + 1)
        if variant == "kotz-t2":
            # (tau - 2t) Gamma(c+t) + Gamma(c+t+1)
            br = (tau - 2 * t) + (c + t)
        else:
            # (-2t + 4t^2 - 4t tau + tau^2) Gamma(c+t) + (-4t + 2 tau) Gamma(c+t+1) + Gamma(c+t+2)
            br = (-2 * t + 4 * t ** 2 - 4 * t * tau + tau ** 2) + (-4 * t + 2 * tau) * (c + t) + (c + t) * (c + t + 1)
        with np.errstate(divide="ignore"):
            return g0 + np.log(np.abs(br)), np.sign(br)
    return fn


def log_isotropic_density_batch(W, u, mu, sigma2: float, variant: str, ctl: SeriesControl, pre=None):
    """Log isotropic shape density (``Sigma = sigma^2 I``, ``R = 1/2``) at stacks of shapes.

    Here ``|Sigma|^{-K/2} a^{-c} = 1`` because ``tr W^2 = 1``, so the density
    depends on ``(mu, sigma^2)`` only through ``mu mu' / sigma^2``.  ``pre``
    may carry the parameter-free factor precomputed for the same shapes.
    """
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    n, K = mu.shape
    if variant not in VARIANTS:
        raise ValueError(f"unknown model variant {variant!r}; choose from {VARIANTS}")
    if not sigma2 > 0:
        raise ValueError("sigma^2 must be positive")
    c, b = n * K / 2.0, K / 2.0
    T = {"gaussian": 1, "kotz-t2": 2, "kotz-t3": 3}[variant]
    M0 = mu @ mu.T / sigma2
    tau = 0.5 * float(np.trace(M0))
    eigs = _kernel_eigs(W, M0, np.full(len(W), 0.5))
    logsum, _, _ = _adaptive_series(eigs, b, _isotropic_bracket(variant, c, tau), ctl)
    # Gamma(c) / Gamma(T-1+c) = 1 / (c)_{T-1}
    log_poch = sum(math.log(c + i) for i in range(T - 1))
    const = (n - 1) * LOG2 - n * (n - 1) / 4.0 * LOG2 - multigammaln(b, n) - log_poch
    if pre is None:
        pre = _log_shape_prefactor(W, u, K)
    return const + pre - tau + logsum


def isotropic_shape_density(W_or_u, mu, sigma2: float, variant: str = "gaussian",
                            ctl: SeriesControl = SeriesControl(), log: bool = False):
    """Isotropic shape density for ``variant`` in ``{"gaussian", "kotz-t2", "kotz-t3"}``."""
    W, u, single = _as_shapes(W_or_u)
    return _finish(log_isotropic_density_batch(W, u, mu, sigma2, variant, ctl), single, log)


# ---------------------------------------------------------------------------
# size-and-shape densities


def _size_shape_prefactor(R, params: ModelParams):
    n, K = params.n, params.K
    if R.shape[-2:] != (n, n):
        raise ValueError(f"R must be {n} x {n}")
    L = np.linalg.eigvalsh(0.5 * (R + np.swapaxes(R, -1, -2)))
    if np.any(L[:, 0] <= 0):
        raise ValueError("R must be positive definite")
    c, b = n * K / 2.0, K / 2.0
    logpair = np.log(geo.pair_sum_product(L)) if n > 1 else np.zeros(len(R))
    return (n * LOG2 + c * math.log(math.pi) - multigammaln(b, n) - 0.5 * K * params.log_det_sigma()
            + (K - n) * np.sum(np.log(L), axis=1) + logpair)


def _as_R_stack(R_mat):
    R = np.asarray(R_mat, dtype=float)
    return (R[None], True) if R.ndim == 2 else (R, False)


def central_size_and_shape_density(R_mat, params: ModelParams, spec: GeneratorSpec, log: bool = False):
    """Central size-and-shape density with respect to ``prod_{i<=j} dr_ij``.

    ``2^n pi^{nK/2} / (Gamma_n(K/2) |Sigma|^{K/2}) |R|^{K-n} prod(L_i + L_j) h(tr Sigma^{-1} R^2)``
    """
    R, single = _as_R_stack(R_mat)
    pre = _size_shape_prefactor(R, params)
    y = np.einsum("ij,sji->s", params.sigma_inverse(), R @ R)
    with np.errstate(divide="ignore"):
        logh = np.log(np.asarray(kotz_h(y, spec), dtype=float))
    return _finish(pre + logh, single, log)


def size_and_shape_density(R_mat, params: ModelParams, spec: GeneratorSpec,
                           ctl: SeriesControl = SeriesControl(), log: bool = False):
    """Noncentral size-and-shape density (series over ``h^{(2t)}``).

    Accepts a single ``n x n`` matrix or a stack ``(S, n, n)``.
    """
    R, single = _as_R_stack(R_mat)
    pre = _size_shape_prefactor(R, params)
    Si = params.sigma_inverse()
    G = Si @ params.mu @ params.mu.T @ Si
    trO = float(np.trace(Si @ params.mu @ params.mu.T))
    y = np.einsum("ij,sji->s", Si, R @ R) + trO
    eig = _kernel_eigs(R, G, np.ones(len(R)))

    def coef(M):
        vals = [log_kotz_h_derivative(y, 2 * t, spec) for t in range(M + 1)]
        return np.stack([v[0] for v in vals], axis=1), np.stack([v[1] for v in vals], axis=1)

    logsum = _adaptive_series(eig, params.K / 2.0, coef, ctl)[0]
    return _finish(pre + logsum, single, log)
