"""
Likelihood fitting, model selection and a test of equal mean shape.

Identifiability
---------------
The isotropic shape density depends on ``(mu, sigma^2)`` only through
``mu mu' / sigma^2``.  Shapes therefore identify ``nu = mu / sigma`` up to a
right rotation, i.e. the lower-triangular factor of ``mu mu' / sigma^2``
(``n(n+1)/2`` numbers), but not ``sigma^2`` itself.  :func:`fit_mle` maximizes
the shape likelihood over that factor (this is the fit behind ``loglik`` and
BIC*) and then takes ``sigma^2`` from the sizes, keeping ``nu_hat``:

* ``scale="size-and-shape"`` maximizes the size-and-shape likelihood of
  ``R = r W`` over ``sigma^2`` at ``mu = sigma nu_hat``;
* ``scale="moment"`` solves the moment identity
  ``E r^2 = sigma^2 (||nu||^2 + E rho^2)``, ``E rho^2 = (T - 1 + nK/2) / R``.

Either way ``mu_hat / sigma_hat = nu_hat``, so ``loglik`` is exactly the shape
log-likelihood at the reported ``(mu_hat, sigma2_hat)``.

Means are reported in the canonical form of :func:`canonical_mean`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import geometry as geo
from .models import (
    VARIANTS,
    ModelParams,
    _log_shape_prefactor,
    log_isotropic_density_batch,
    size_and_shape_density,
    variant_spec,
)
from .zonal import SeriesControl, SeriesConvergenceError

__all__ = [
    "Dataset",
    "FitResult",
    "LRTResult",
    "EvidenceGrade",
    "canonical_mean",
    "log_likelihood",
    "fit_mle",
    "bic_star",
    "evidence_grade",
    "lrt_equal_mean",
    "chi2_sf",
    "mean_radial_square",
]


@dataclass
class Dataset:
    """Shapes (and sizes) of a sample of specimens sharing ``(N, K)``."""

    W: np.ndarray
    u: np.ndarray
    r: np.ndarray
    N: int
    K: int
    ids: list = field(default_factory=list)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        if len(self.W) < 1:
            raise ValueError("a dataset needs at least one specimen")
        if self.W.shape[-1] != self.N - 1:
            raise ValueError("shape matrices do not match N")
        if not self.ids:
            self.ids = [str(i + 1) for i in range(len(self.W))]
        self._pre = None

    @classmethod
    def from_landmarks(cls, Xs: Iterable, Theta=None) -> "Dataset":
        Xs = list(Xs)
        ids = [getattr(x, "specimen", None) or str(i + 1) for i, x in enumerate(Xs)]
        N, K = np.asarray(Xs[0]).shape
        W, r, u, degenerate = geo.batch_polar_shapes(Xs, Theta)
        if np.any(degenerate):
            bad = [ids[i] for i in np.flatnonzero(degenerate)]
            raise ValueError(f"rank-deficient configurations have no shape density: specimens {bad}")
        return cls(W, u, r, N, K, ids)

    @classmethod
    def from_shapes(cls, shapes: Sequence[geo.PolarShape], K: int, ids=None) -> "Dataset":
        W = np.stack([s.W for s in shapes])
        u = np.stack([s.u for s in shapes])
        r = np.array([s.r for s in shapes])
        return cls(W, u, r, W.shape[-1] + 1, K, list(ids or []))

    @property
    def n(self) -> int:
        return len(self.W)

    def prefactor(self) -> np.ndarray:
        """Parameter-free log factor ``log prod(l_i + l_j) + (K-n) log|W| + log J(u)``."""
        if self._pre is None:
            self._pre = _log_shape_prefactor(self.W, self.u, self.K)
        return self._pre

    def take(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.W[index], self.u[index], self.r[index], self.N, self.K,
                       [self.ids[i] for i in index])

    def concat(self, other: "Dataset") -> "Dataset":
        if (self.N, self.K) != (other.N, other.K):
            raise ValueError("datasets have different (N, K)")
        return Dataset(np.concatenate([self.W, other.W]), np.concatenate([self.u, other.u]),
                       np.concatenate([self.r, other.r]), self.N, self.K, self.ids + other.ids)


@dataclass
class FitResult:
    """Maximum likelihood fit of one isotropic model variant."""

    variant: str
    mu_hat: np.ndarray
    sigma2_hat: float
    loglik: float
    n_p: int
    bic_star: float
    n: int
    iterations: int
    converged: bool
    nu_hat: np.ndarray
    n_identifiable: int
    evaluations: int = 0
    scale_method: str = "size-and-shape"
    infeasible_evaluations: int = 0

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "mu_hat": np.asarray(self.mu_hat).tolist(),
            "sigma2_hat": self.sigma2_hat,
            "loglik": self.loglik,
            "n_p": self.n_p,
            "bic_star": self.bic_star,
            "n": self.n,
            "iterations": self.iterations,
            "converged": self.converged,
            "nu_hat": np.asarray(self.nu_hat).tolist(),
            "n_identifiable": self.n_identifiable,
            "evaluations": self.evaluations,
            "scale_method": self.scale_method,
            "infeasible_evaluations": self.infeasible_evaluations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        d = dict(d)
        d["mu_hat"] = np.asarray(d["mu_hat"], dtype=float)
        d["nu_hat"] = np.asarray(d["nu_hat"], dtype=float)
        return cls(**d)


class EvidenceGrade(str, enum.Enum):
    WEAK = "Weak"
    POSITIVE = "Positive"
    STRONG = "Strong"
    VERY_STRONG = "VeryStrong"


@dataclass
class LRTResult:
    """Likelihood-ratio test of equal means; unpacks as ``(stat, df, p_value)``."""

    stat: float
    df: int
    p_value: float
    loglik_h0: float
    loglik_ha: float
    h0_sigma: str
    effective_df: int
    p_value_effective: float
    fit1: Optional[FitResult] = None
    fit2: Optional[FitResult] = None
    nu_h0: Optional[np.ndarray] = None
    log_scale_ratio_h0: float = 0.0

    def __iter__(self):
        return iter((self.stat, self.df, self.p_value))


def canonical_mean(mu) -> np.ndarray:
    """Representative of ``mu`` modulo right rotations: ``[L, 0]`` with ``L`` lower
    triangular, nonnegative diagonal, and ``L L' = mu mu'``."""
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    n, K = mu.shape
    q, r = np.linalg.qr(mu.T)
    L = r.T[:, :n]
    signs = np.where(np.diag(L) < 0, -1.0, 1.0)
    L = L * signs[None, :]
    out = np.zeros((n, K))
    out[:, :n] = np.tril(L)
    return out


def mean_radial_square(variant: str, N: int, K: int) -> float:
    """``E rho^2 = (T - 1 + nK/2) / R`` for the variant's generator."""
    spec = variant_spec(variant, N, K)
    return spec.radial_shape() / spec.R


def _pad(L: np.ndarray, K: int) -> np.ndarray:
    n = L.shape[0]
    out = np.zeros((n, K))
    out[:, :n] = L
    return out


def _tril_vector(L: np.ndarray) -> np.ndarray:
    return L[np.tril_indices(L.shape[0])]


def _tril_matrix(x: np.ndarray, n: int) -> np.ndarray:
    L = np.zeros((n, n))
    L[np.tril_indices(n)] = x
    return L


def _loglik_nu(data: Dataset, variant: str, nu: np.ndarray, ctl: SeriesControl) -> float:
    try:
        vals = log_isotropic_density_batch(data.W, data.u, nu, 1.0, variant, ctl, pre=data.prefactor())
    except SeriesConvergenceError as exc:
        who = data.ids[exc.index] if exc.index is not None else "?"
        raise SeriesConvergenceError(f"specimen {who}: {exc}", exc.partial_sum, exc.last_term, exc.index) from exc
    return float(np.sum(vals))


def log_likelihood(data: Dataset, variant: str, mu, sigma2: float,
                   ctl: SeriesControl = SeriesControl()) -> float:
    """Sum of log isotropic shape densities over the specimens."""
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    if not sigma2 > 0:
        raise ValueError("sigma^2 must be positive")
    return _loglik_nu(data, variant, mu / math.sqrt(sigma2), ctl)


def bic_star(loglik: float, n_p: int, n: int) -> float:
    """``-2 loglik + n_p (log(n + 2) - log 24)``."""
    if n < 1:
        raise ValueError("sample size must be positive")
    return -2.0 * loglik + n_p * (math.log(n + 2) - math.log(24.0))


def evidence_grade(delta: float) -> EvidenceGrade:
    """Grade of a BIC* difference: [0, 2) Weak, [2, 6) Positive, [6, 10] Strong, above 10 VeryStrong."""
    if not delta >= 0:
        raise ValueError("BIC* difference must be nonnegative")
    if delta < 2:
        return EvidenceGrade.WEAK
    if delta < 6:
        return EvidenceGrade.POSITIVE
    if delta <= 10:
        return EvidenceGrade.STRONG
    return EvidenceGrade.VERY_STRONG


def _initial_nu(data: Dataset, variant: str) -> np.ndarray:
    n = data.N - 1
    Rbar = np.mean(data.r[:, None, None] * data.W, axis=0)
    m2 = float(np.mean(data.r ** 2))
    erho = mean_radial_square(variant, data.N, data.K)
    s2 = max(m2 - float(np.sum(Rbar ** 2)), 0.05 * m2) / erho
    return canonical_mean(Rbar)[:, :n] / math.sqrt(s2)


def _nelder_mead(fun, x0, rng, restarts, max_iter, scale=0.1):
    best = None
    total_it = total_ev = 0
    starts = [np.asarray(x0, dtype=float)]
    for _ in range(max(restarts, 1) - 1):
        jitter = 1.0 + 0.25 * rng.standard_normal(len(x0))
        starts.append(starts[0] * jitter + 0.1 * rng.standard_normal(len(x0)))
    for k, x in enumerate(starts):
        # a perturbed start outside the feasible region would only burn evaluations
        if k > 0 and not np.isfinite(fun(x)):
            total_ev += 1
            continue
        step = scale * np.maximum(np.abs(x), 0.1)
        simplex = np.vstack([x] + [x + np.eye(len(x))[i] * step[i] for i in range(len(x))])
        with np.errstate(invalid="ignore"):
            res = minimize(fun, x, method="Nelder-Mead",
                           options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": max_iter,
                                    "maxfev": 4 * max_iter, "initial_simplex": simplex})
        total_it += int(res.nit)
        total_ev += int(res.nfev)
        if best is None or res.fun < best.fun:
            best = res
    return best, total_it, total_ev


class _Objective:
    """Negative log-likelihood that treats non-convergent series as infeasible."""

    def __init__(self, fn):
        self.fn = fn
        self.infeasible = 0

    def __call__(self, x):
        try:
            return self.fn(x)
        except SeriesConvergenceError:
            self.infeasible += 1
            return np.inf


def _size_shape_scale(data: Dataset, variant: str, nu: np.ndarray, sigma2_0: float, ctl: SeriesControl):
    """Profile the size-and-shape likelihood over ``log sigma^2`` with ``mu = sigma nu``."""
    spec = variant_spec(variant, data.N, data.K)
    R = data.r[:, None, None] * data.W

    def nll(log_s2):
        s2 = math.exp(log_s2)
        return -float(np.sum(size_and_shape_density(R, ModelParams(math.sqrt(s2) * nu, s2), spec, ctl, log=True)))

    obj = _Objective(nll)
    x0 = math.log(sigma2_0)
    res = minimize_scalar(obj, bracket=(x0 - 0.3, x0 + 0.3), method="brent", options={"xtol": 1e-10})
    if not np.isfinite(res.fun):
        raise SeriesConvergenceError("size-and-shape likelihood could not be evaluated near the moment estimate")
    return math.exp(res.x), int(res.nit), int(res.nfev), obj.infeasible


def fit_mle(data: Dataset, variant: str, init=None, ctl: SeriesControl = SeriesControl(),
            seed: int = 0, restarts: int = 3, max_iter: int = 5000,
            scale: str = "size-and-shape") -> FitResult:
    """Maximum likelihood fit of an isotropic shape model.

    ``init`` may be a :class:`FitResult` or a ``(mu, sigma2)`` pair; by default
    the mean size-and-shape matrix and the size moment supply the start.  The
    search is a Nelder-Mead simplex over the identifiable factor of
    ``mu mu' / sigma^2`` with ``restarts - 1`` perturbed extra starts.
    Parameter points where the series does not converge within
    ``ctl.max_degree`` are treated as infeasible; the returned log-likelihood
    is always a converged value.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown model variant {variant!r}; choose from {VARIANTS}")
    if scale not in ("size-and-shape", "moment"):
        raise ValueError("scale must be 'size-and-shape' or 'moment'")
    n, K = data.N - 1, data.K
    if init is None:
        nu0 = _initial_nu(data, variant)
    elif isinstance(init, FitResult):
        nu0 = np.asarray(init.nu_hat)[:, :n]
    else:
        mu0, s20 = init
        nu0 = canonical_mean(np.asarray(mu0) / math.sqrt(s20))[:, :n]
    # the start must be evaluable; this raises naming the offending specimen otherwise
    _loglik_nu(data, variant, _pad(nu0, K), ctl)

    obj = _Objective(lambda x: -_loglik_nu(data, variant, _pad(_tril_matrix(x, n), K), ctl))
    rng = np.random.default_rng(seed)
    res, it, ev = _nelder_mead(obj, _tril_vector(nu0), rng, restarts, max_iter)
    nu_hat = canonical_mean(_pad(_tril_matrix(res.x, n), K))
    loglik = -float(res.fun)
    erho = mean_radial_square(variant, data.N, K)
    sigma2 = float(np.mean(data.r ** 2)) / (float(np.sum(nu_hat ** 2)) + erho)
    mu_hat = math.sqrt(sigma2) * nu_hat
    infeasible = obj.infeasible
    if scale == "size-and-shape":
        sigma2, it2, ev2, inf2 = _size_shape_scale(data, variant, nu_hat, sigma2, ctl)
        mu_hat = math.sqrt(sigma2) * nu_hat
        it, ev, infeasible = it + it2, ev + ev2, infeasible + inf2
    n_p = n * K + 1
    return FitResult(
        variant=variant,
        mu_hat=mu_hat,
        sigma2_hat=sigma2,
        loglik=loglik,
        n_p=n_p,
        bic_star=bic_star(loglik, n_p, data.n),
        n=data.n,
        iterations=it,
        converged=bool(res.success),
        nu_hat=nu_hat,
        n_identifiable=n * (n + 1) // 2,
        evaluations=ev,
        scale_method=scale,
        infeasible_evaluations=infeasible,
    )


def lrt_equal_mean(data1: Dataset, data2: Dataset, variant, ctl: SeriesControl = SeriesControl(),
                   h0_sigma: str = "per-group", seed: int = 0, restarts: int = 3,
                   fit1: Optional[FitResult] = None, fit2: Optional[FitResult] = None) -> LRTResult:
    """Likelihood-ratio test of ``H0: mu_1 = mu_2`` against separate means.

    Under ``h0_sigma="per-group"`` the groups keep their own ``sigma^2`` under
    H0, so the shape laws share ``nu`` up to a scalar ``exp(-delta)``;
    ``"pooled"`` forces one ``sigma^2``.  ``df`` is the nominal ``(N-1) K``;
    ``effective_df`` counts only the parameters the shape likelihood
    identifies and ``p_value_effective`` uses it.  ``variant`` is one model
    for both groups or a pair ``(model1, model2)``.
    """
    if (data1.N, data1.K) != (data2.N, data2.K):
        raise ValueError("groups must share (N, K)")
    if h0_sigma not in ("per-group", "pooled"):
        raise ValueError("h0_sigma must be 'per-group' or 'pooled'")
    v1, v2 = (variant, variant) if isinstance(variant, str) else tuple(variant)
    n, K = data1.N - 1, data1.K
    fit1 = fit1 or fit_mle(data1, v1, ctl=ctl, seed=seed, restarts=restarts, scale="moment")
    fit2 = fit2 or fit_mle(data2, v2, ctl=ctl, seed=seed + 1, restarts=restarts, scale="moment")
    ll_a = fit1.loglik + fit2.loglik
    rng = np.random.default_rng(seed + 2)
    nu1, nu2 = fit1.nu_hat[:, :n], fit2.nu_hat[:, :n]
    k = n * (n + 1) // 2

    if h0_sigma == "pooled":
        def objective(x):
            nu = _pad(_tril_matrix(x, n), K)
            return -(_loglik_nu(data1, v1, nu, ctl) + _loglik_nu(data2, v2, nu, ctl))

        starts = [_tril_vector(0.5 * (nu1 + nu2)), _tril_vector(nu1), _tril_vector(nu2)]
    else:
        def objective(x):
            nu = _pad(_tril_matrix(x[:k], n), K)
            return -(_loglik_nu(data1, v1, nu, ctl)
                     + _loglik_nu(data2, v2, nu * math.exp(-x[k]), ctl))

        n1, n2 = np.linalg.norm(nu1), np.linalg.norm(nu2)
        d0 = math.log(max(n1, 1e-12) / max(n2, 1e-12))
        mid = 0.5 * (nu1 + nu2 * math.exp(d0))
        starts = [np.append(_tril_vector(mid), d0), np.append(_tril_vector(nu1), d0),
                  np.append(_tril_vector(nu2 * math.exp(d0)), d0)]
    objective = _Objective(objective)
    best = None
    for x0 in starts:
        res, _, _ = _nelder_mead(objective, x0, rng, 1, 5000)
        if best is None or res.fun < best.fun:
            best = res
    for _ in range(max(restarts, 1) - 1):
        res, _, _ = _nelder_mead(objective, best.x, rng, 2, 5000)
        if res.fun < best.fun:
            best = res
    ll_0 = -float(best.fun)
    stat = max(0.0, -2.0 * (ll_0 - ll_a))
    df = n * K
    eff = k - 1 if h0_sigma == "per-group" else k
    nu_h0 = canonical_mean(_pad(_tril_matrix(best.x[:k], n), K))
    return LRTResult(
        stat=stat, df=df, p_value=chi2_sf(stat, df), loglik_h0=ll_0, loglik_ha=ll_a,
        h0_sigma=h0_sigma, effective_df=eff, p_value_effective=chi2_sf(stat, eff),
        fit1=fit1, fit2=fit2, nu_h0=nu_h0,
        log_scale_ratio_h0=float(best.x[k]) if h0_sigma == "per-group" else 0.0,
    )


# ---------------------------------------------------------------------------
# chi-square upper tail


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_cf(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chi2_sf(x: float, df: int) -> float:
    """Chi-square upper tail ``Q(df/2, x/2)`` via the regularized incomplete gamma."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    a, y = df / 2.0, x / 2.0
    if y < a + 1.0:
        return max(0.0, 1.0 - _gamma_p_series(a, y))
    return _gamma_q_cf(a, y)
