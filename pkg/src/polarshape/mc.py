"""
Exact sampling and numerical validation of the analytic densities.

Sampling uses the stochastic representation of the reduced configuration,

    Y = mu + Sigma^{1/2} rho U,

with ``U`` uniform on the unit sphere of ``n x K`` matrices and ``rho``
independent of ``U``.  Since the density of ``rho`` is proportional to
``rho^{nK-1} h(rho^2)``, a Kotz type I generator (``s = 1``) gives

    rho^2 ~ Gamma(shape = T - 1 + nK/2, rate = R),

which is chi-square with ``nK`` degrees of freedom for the Gaussian.
Landmarks are recovered as ``X = L' Y Theta^{1/2} + 1 c'`` for a centroid ``c``.

Each specimen ``i`` draws from its own Philox stream with key ``seed`` and
counter ``(0, 0, 0, i)``, so any subset of specimens is reproducible on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import geometry as geo
from .inference import chi2_sf
from .models import GeneratorSpec, ModelParams, QuadratureError, size_and_shape_density
from .zonal import SeriesControl, SeriesConvergenceError

__all__ = [
    "SamplerConfig",
    "GofReport",
    "specimen_rng",
    "sample_reduced",
    "sample_landmarks",
    "normalization_check",
    "cell_probabilities",
    "empirical_vs_analytic",
    "two_sample_chi2",
    "size_and_shape_normalization",
]


@dataclass(frozen=True)
class SamplerConfig:
    """Model, sample size and seed; identical configs give identical samples."""

    spec: GeneratorSpec
    params: ModelParams
    n: int
    seed: int = 0
    centroid: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample size must be positive")
        if (self.spec.n, self.spec.K) != (self.params.n, self.params.K):
            raise ValueError("generator and parameter dimensions differ")
        if self.spec.family == "custom":
            raise ValueError("sampling is available for Gaussian and Kotz generators only")


@dataclass
class GofReport:
    """Pearson chi-square comparison of binned counts."""

    statistic: float
    df: int
    p_value: float
    n_cells: int
    observed: np.ndarray
    expected: np.ndarray


def specimen_rng(seed: int, i: int) -> np.random.Generator:
    """Independent stream of specimen ``i``."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2 ** 64 - 1), counter=[0, 0, 0, int(i)]))


def sample_reduced(cfg: SamplerConfig) -> np.ndarray:
    """Reduced, whitened configurations ``Y``, shape ``(n, N-1, K)``."""
    p = cfg.params
    n, K = p.n, p.K
    shape = cfg.spec.radial_shape()
    scale = 1.0 / cfg.spec.R
    if p.is_isotropic:
        root = math.sqrt(p.Sigma) * np.eye(n)
    else:
        root = geo.spd_power(p.Sigma, 0.5, "Sigma")
    out = np.empty((cfg.n, n, K))
    for i in range(cfg.n):
        g = specimen_rng(cfg.seed, i)
        z = g.standard_normal((n, K))
        rho = math.sqrt(g.gamma(shape, scale))
        out[i] = p.mu + root @ (rho * z / np.linalg.norm(z))
    return out


def sample_landmarks(cfg: SamplerConfig) -> list:
    """``cfg.n`` landmark configurations with ``E X = L' mu Theta^{1/2} + 1 c'``."""
    Y = sample_reduced(cfg)
    N = cfg.params.n + 1
    L = geo.helmert_submatrix(N)
    X = np.einsum("ji,sjk->sik", L, Y)
    if cfg.params.Theta is not None:
        X = X @ geo.spd_power(cfg.params.Theta, 0.5, "Theta")
    if cfg.centroid is not None:
        X = X + np.asarray(cfg.centroid, dtype=float).reshape(1, 1, -1)
    return [geo.LandmarkMatrix(x, specimen=str(i + 1)) for i, x in enumerate(X)]


# ---------------------------------------------------------------------------
# quadrature over the positive definite angle region (2 x 2 shapes)


def _region_rule(t2_edges, s_edges, order):
    """Gauss-Legendre nodes ``u (P, Q, q*q, 2)`` and weights over a grid of (t_2, s) cells."""
    x, w = np.polynomial.legendre.leggauss(order)
    a2, b2 = t2_edges[:-1], t2_edges[1:]
    as_, bs = s_edges[:-1], s_edges[1:]
    t2 = 0.5 * (a2[:, None] + b2[:, None]) + 0.5 * (b2 - a2)[:, None] * x[None, :]
    w2 = 0.5 * (b2 - a2)[:, None] * w[None, :]
    s = 0.5 * (as_[:, None] + bs[:, None]) + 0.5 * (bs - as_)[:, None] * x[None, :]
    ws = 0.5 * (bs - as_)[:, None] * w[None, :]
    T2 = np.broadcast_to(t2[:, None, :, None], (len(a2), len(as_), order, order))
    S = np.broadcast_to(s[None, :, None, :], (len(a2), len(as_), order, order))
    tmax = geo.theta1_max(T2)
    u = np.stack([S * tmax, T2], axis=-1)
    wt = w2[:, None, :, None] * ws[None, :, None, :] * tmax
    shp = (len(a2), len(as_), order * order)
    return u.reshape(shp + (2,)), wt.reshape(shp)


def _integrate_cells(density, t2_edges, s_edges, order):
    u, wt = _region_rule(t2_edges, s_edges, order)
    vals = np.asarray(density(u.reshape(-1, 2)), dtype=float).reshape(wt.shape)
    return np.sum(vals * wt, axis=-1)


def normalization_check(density: Callable, dims=(3, 2), order: int = 10, rtol: float = 1e-4,
                        max_panels: int = 64) -> float:
    """Integral of a shape density over the positive definite angle region.

    ``density`` maps an array of angle vectors ``(S, 2)`` to values.  Panels
    in ``(t_2, s)``, where ``t_1 = s * t1_max(t_2)``, double until successive
    estimates agree to ``rtol``.
    """
    N, K = dims
    if N != 3:
        raise ValueError("angle-space quadrature supports N = 3 (two shape angles)")
    trace = []
    prev = None
    panels = 2
    while panels <= max_panels:
        edges2 = np.linspace(0.0, np.pi, panels + 1)
        edges_s = np.linspace(0.0, 1.0, panels + 1)
        est = float(np.sum(_integrate_cells(density, edges2, edges_s, order)))
        trace.append((panels, est))
        if prev is not None and abs(est - prev) <= rtol * abs(est):
            return est
        prev = est
        panels *= 2
    raise QuadratureError(f"angle quadrature did not settle: {trace}")


def cell_probabilities(density: Callable, bins=(12, 12), order: int = 8) -> np.ndarray:
    """Integral of ``density`` over each cell of a ``(t_2, s)`` grid."""
    edges2 = np.linspace(0.0, np.pi, bins[0] + 1)
    edges_s = np.linspace(0.0, 1.0, bins[1] + 1)
    return _integrate_cells(density, edges2, edges_s, order)


def _bin_angles(u: np.ndarray, bins) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    t1, t2 = u[:, 0], u[:, 1]
    s = t1 / geo.theta1_max(t2)
    i = np.clip((t2 / np.pi * bins[0]).astype(int), 0, bins[0] - 1)
    j = np.clip((s * bins[1]).astype(int), 0, bins[1] - 1)
    counts = np.zeros(bins)
    np.add.at(counts, (i, j), 1)
    return counts


def _merge(*arrays, key: np.ndarray, threshold: float):
    """Merge cells in row-major order until ``key`` reaches ``threshold``; a short tail joins the last group."""
    flat = [a.ravel() for a in arrays]
    k = key.ravel()
    groups, current, acc = [], [], 0.0
    for idx in range(k.size):
        current.append(idx)
        acc += k[idx]
        if acc >= threshold:
            groups.append(current)
            current, acc = [], 0.0
    if current:
        if groups:
            groups[-1].extend(current)
        else:
            groups.append(current)
    return [np.array([a[g].sum() for g in groups]) for a in flat]


def _angles_of(samples, Theta=None) -> np.ndarray:
    if isinstance(samples, np.ndarray) and samples.ndim == 2 and samples.shape[1] == 2:
        return samples
    if isinstance(samples, np.ndarray) and samples.ndim == 3 and samples.shape[1] == 2:
        return geo.shapes_from_reduced(samples)[2]
    return geo.batch_polar_shapes(samples, Theta)[2]


def empirical_vs_analytic(samples, density: Callable, binning=(12, 12), Theta=None,
                          min_expected: float = 5.0) -> GofReport:
    """Pearson goodness of fit of sampled shape angles against an analytic density.

    ``samples`` are landmark configurations, reduced configurations
    ``(S, 2, K)``, or angle vectors ``(S, 2)``.  Cells with expected count
    below ``min_expected`` are merged with their row-major successors.
    """
    u = _angles_of(samples, Theta)
    if len(u) < 1000:
        raise ValueError("goodness of fit needs at least 1000 samples")
    obs = _bin_angles(u, binning)
    expected = len(u) * cell_probabilities(density, binning)
    o, e = _merge(obs, expected, key=expected, threshold=min_expected)
    stat = float(np.sum((o - e) ** 2 / e))
    df = len(o) - 1
    return GofReport(stat, df, chi2_sf(stat, df), len(o), o, e)


def two_sample_chi2(samples1, samples2, binning=(12, 12), Theta=None, min_count: float = 10.0) -> GofReport:
    """Two-sample chi-square test of equal angle distributions."""
    u1, u2 = _angles_of(samples1, Theta), _angles_of(samples2, Theta)
    c1, c2 = _bin_angles(u1, binning), _bin_angles(u2, binning)
    o1, o2 = _merge(c1, c2, key=c1 + c2, threshold=min_count)
    n1, n2 = o1.sum(), o2.sum()
    k1, k2 = math.sqrt(n2 / n1), math.sqrt(n1 / n2)
    stat = float(np.sum((k1 * o1 - k2 * o2) ** 2 / (o1 + o2)))
    df = len(o1) - 1
    expected = (o1 + o2) * n1 / (n1 + n2)
    return GofReport(stat, df, chi2_sf(stat, df), len(o1), o1, expected)


def size_and_shape_normalization(params: ModelParams, spec: GeneratorSpec, n_draws: int = 100000,
                                 seed: int = 0, ctl: SeriesControl = SeriesControl(), df: float = 5.0):
    """Importance-sampling estimate of the integral of the size-and-shape density.

    The proposal is a multivariate t on the ``n(n+1)/2`` free entries of ``R``,
    fitted to ``R`` matrices drawn from the sampler.  Returns ``(estimate, standard error)``.
    If a far-tail draw exhausts ``ctl.max_degree`` the batch is re-evaluated
    with a larger cap.
    """
    from scipy import stats

    n = params.n
    pilot = sample_reduced(SamplerConfig(spec, params, 4000, seed))
    P, s, _ = np.linalg.svd(pilot, full_matrices=False)
    R = np.einsum("sij,sj,skj->sik", P, s, P)
    iu = np.triu_indices(n)
    v = R[:, iu[0], iu[1]]
    loc = v.mean(axis=0)
    cov = np.cov(v, rowvar=False) * 1.5
    prop = stats.multivariate_t(loc=loc, shape=cov, df=df, seed=np.random.default_rng(seed + 1))
    draws = prop.rvs(size=n_draws)
    logq = prop.logpdf(draws)
    M = np.zeros((n_draws, n, n))
    M[:, iu[0], iu[1]] = draws
    M[:, iu[1], iu[0]] = draws
    pd = np.linalg.eigvalsh(M)[:, 0] > 0
    ratio = np.zeros(n_draws)
    try:
        logf = size_and_shape_density(M[pd], params, spec, ctl, log=True)
    except SeriesConvergenceError:
        # far-tail proposals need long series even though their density is negligible
        wide = SeriesControl(max(4 * ctl.max_degree, 250), ctl.rel_tol, ctl.consecutive_small)
        logf = size_and_shape_density(M[pd], params, spec, wide, log=True)
    ratio[pd] = np.exp(logf - logq[pd])
    return float(ratio.mean()), float(ratio.std(ddof=1) / math.sqrt(n_draws))
