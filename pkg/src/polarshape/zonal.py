"""
Zonal polynomials and the truncated series built from them.

Zonal polynomials are Jack polynomials at parameter ``alpha = 2`` in the
C-normalization, i.e. ``sum_{kappa |- t} C_kappa(X) = (tr X)**t``.  They depend on
a matrix argument only through its eigenvalues, or equivalently through the
power sums ``p_j = tr(X**j)``.

Two evaluation backends are provided:

* eigenvalue backend: monomial-symmetric expansion in ``p`` variables, obtained
  from a closed form when ``p <= 2`` and from the branching rule
  ``J_kappa(x_1..x_n) = sum_mu beta_{kappa mu} J_mu(x_1..x_{n-1}) x_n^{|kappa/mu|}``
  (sum over horizontal strips) otherwise;
* power-sum backend: expansion in products of power sums, usable for any square
  matrix, including the non-symmetric products that appear in the densities.

Partitions are always produced in reverse-lexicographic order so that every
series is summed in the same order on every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "ALPHA",
    "Partition",
    "SeriesControl",
    "MatrixArgument",
    "SeriesConvergenceError",
    "enumerate_partitions",
    "gen_pochhammer",
    "log_gen_pochhammer",
    "zonal_C",
    "zonal_coefficients",
    "degree_term",
    "log_degree_terms",
    "truncate_log_series",
]

ALPHA = 2.0

# Largest weight for which the power-sum backend builds its transition tables.
POWER_SUM_MAX_DEGREE = 14


class SeriesConvergenceError(ArithmeticError):
    """A truncated series did not meet its stopping rule within ``max_degree``."""

    def __init__(self, message, partial_sum=None, last_term=None, index=None):
        super().__init__(message)
        self.partial_sum = partial_sum
        self.last_term = last_term
        self.index = index


class Partition(tuple):
    """Weakly decreasing tuple of positive integers.

    ``Partition(())`` is the empty partition of weight 0.
    """

    def __new__(cls, parts: Sequence[int] = ()):
        parts = tuple(int(p) for p in parts)
        for i, p in enumerate(parts):
            if p < 1:
                raise ValueError(f"partition parts must be positive, got {parts}")
            if i and parts[i - 1] < p:
                raise ValueError(f"partition parts must be weakly decreasing, got {parts}")
        return super().__new__(cls, parts)

    @property
    def weight(self) -> int:
        return sum(self)

    @property
    def length(self) -> int:
        return len(self)

    def conjugate(self) -> "Partition":
        if not self:
            return Partition(())
        return Partition(tuple(sum(1 for p in self if p > j) for j in range(self[0])))

    def __repr__(self) -> str:
        return f"Partition({tuple(self)})"


@dataclass(frozen=True)
class SeriesControl:
    """Truncation policy for the degree-indexed series.

    Summation stops at ``max_degree``, or earlier once ``consecutive_small``
    successive degree terms are each below ``rel_tol`` times the running
    partial sum in absolute value.
    """

    max_degree: int = 60
    rel_tol: float = 1e-12
    consecutive_small: int = 3

    def __post_init__(self):
        if self.max_degree < 0:
            raise ValueError("max_degree must be nonnegative")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.consecutive_small < 1:
            raise ValueError("consecutive_small must be a positive integer")


def enumerate_partitions(t: int, max_parts: Optional[int] = None) -> list[Partition]:
    """All partitions of ``t`` with at most ``max_parts`` parts, reverse-lexicographic.

    >>> enumerate_partitions(3, 3)
    [Partition((3,)), Partition((2, 1)), Partition((1, 1, 1))]
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if max_parts is None:
        max_parts = t
    return [Partition(p) for p in _partitions(int(t), int(t), int(max_parts))]


def _partitions(t: int, largest: int, max_parts: int) -> Iterator[tuple]:
    if t == 0:
        yield ()
        return
    if max_parts == 0:
        return
    for first in range(min(t, largest), 0, -1):
        # remaining weight must fit in max_parts - 1 parts of size <= first
        if first * max_parts < t:
            break
        for rest in _partitions(t - first, first, max_parts - 1):
            yield (first,) + rest


def gen_pochhammer(a: float, kappa: Sequence[int]) -> float:
    """Generalized Pochhammer symbol ``(a)_kappa`` for ``alpha = 2``.

    ``prod_i prod_{j=1}^{kappa_i} (a - (i - 1)/2 + j - 1)``; the empty partition
    gives 1.
    """
    out = 1.0
    for i, k in enumerate(kappa):
        base = a - i / ALPHA
        for j in range(k):
            out *= base + j
    return out


def log_gen_pochhammer(a: float, kappa: Sequence[int]) -> tuple[float, float]:
    """``(log|(a)_kappa|, sign)``; sign is 0 when the symbol vanishes."""
    logv, sign = 0.0, 1.0
    for i, k in enumerate(kappa):
        base = a - i / ALPHA
        for j in range(k):
            f = base + j
            if f == 0.0:
                return -math.inf, 0.0
            if f < 0:
                sign = -sign
            logv += math.log(abs(f))
    return logv, sign


# ---------------------------------------------------------------------------
# hook lengths and branching coefficients


def _lower_hook(kappa, conj, i, j):
    # h_*(i, j) = kappa'_j - i + alpha (kappa_i - j + 1), 1-based cells
    return conj[j - 1] - i + ALPHA * (kappa[i - 1] - j + 1)


def _upper_hook(kappa, conj, i, j):
    # h^*(i, j) = kappa'_j - i + 1 + alpha (kappa_i - j)
    return conj[j - 1] - i + 1 + ALPHA * (kappa[i - 1] - j)


@lru_cache(maxsize=None)
def _log_c_normalizer(kappa: Partition) -> float:
    """log of ``alpha^t t! / j_kappa``, the factor taking ``J_kappa`` to ``C_kappa``."""
    t = kappa.weight
    conj = kappa.conjugate()
    logj = 0.0
    for i, k in enumerate(kappa, start=1):
        for j in range(1, k + 1):
            logj += math.log(_lower_hook(kappa, conj, i, j)) + math.log(_upper_hook(kappa, conj, i, j))
    return t * math.log(ALPHA) + math.lgamma(t + 1) - logj


@lru_cache(maxsize=None)
def _log_leading_coefficient(kappa: Partition) -> float:
    """log of the coefficient of ``m_kappa`` in ``C_kappa``: ``alpha^t t! / prod h_*``."""
    t = kappa.weight
    conj = kappa.conjugate()
    logh = 0.0
    for i, k in enumerate(kappa, start=1):
        for j in range(1, k + 1):
            logh += math.log(_lower_hook(kappa, conj, i, j))
    return t * math.log(ALPHA) + math.lgamma(t + 1) - logh


def _log_beta(kappa: Partition, mu: Partition) -> float:
    """log of the branching coefficient ``beta_{kappa mu}`` (horizontal strip)."""
    kc = kappa.conjugate()
    mc = mu.conjugate()
    changed = set()
    for j in range(1, (kappa[0] if kappa else 0) + 1):
        mcj = mc[j - 1] if j <= len(mc) else 0
        if kc[j - 1] != mcj:
            changed.add(j)
    out = 0.0
    for i, k in enumerate(kappa, start=1):
        for j in range(1, k + 1):
            h = _upper_hook(kappa, kc, i, j) if j in changed else _lower_hook(kappa, kc, i, j)
            out += math.log(h)
    for i, k in enumerate(mu, start=1):
        for j in range(1, k + 1):
            h = _upper_hook(mu, mc, i, j) if j in changed else _lower_hook(mu, mc, i, j)
            out -= math.log(h)
    return out


def _strips(kappa: Partition, max_parts: int) -> Iterator[Partition]:
    """Partitions ``mu`` with ``kappa/mu`` a horizontal strip and ``len(mu) <= max_parts``."""
    k = list(kappa) + [0]
    n = len(kappa)
    if n > max_parts + 1:
        return
    # kappa_{i+1} <= mu_i <= kappa_i, and mu has at most max_parts parts
    ranges = []
    for i in range(n):
        lo = k[i + 1]
        hi = k[i] if i < max_parts else 0
        if lo > hi:
            return
        ranges.append(range(hi, lo - 1, -1))

    def rec(i, acc):
        if i == n:
            yield Partition(tuple(x for x in acc if x > 0))
            return
        for v in ranges[i]:
            yield from rec(i + 1, acc + [v])

    yield from rec(0, [])


# ---------------------------------------------------------------------------
# monomial-symmetric expansion tables


@lru_cache(maxsize=None)
def zonal_coefficients(p: int, t: int) -> tuple[tuple[Partition, ...], tuple[Partition, ...], np.ndarray]:
    """Monomial expansion of every ``C_kappa`` of weight ``t`` in ``p`` variables.

    Returns ``(kappas, lambdas, coef)`` where both index lists hold the
    partitions of ``t`` with at most ``p`` parts (reverse-lexicographic) and
    ``coef[i, j]`` is the coefficient of ``m_{lambdas[j]}`` in ``C_{kappas[i]}``.
    """
    if p < 1:
        raise ValueError("number of variables must be positive")
    parts = tuple(enumerate_partitions(t, p))
    index = {lam: j for j, lam in enumerate(parts)}
    coef = np.zeros((len(parts), len(parts)))
    if t == 0:
        coef[0, 0] = 1.0
        return parts, parts, coef
    if p == 1:
        coef[0, 0] = 1.0
        return parts, parts, coef
    if p == 2:
        for r, kappa in enumerate(parts):
            k1 = kappa[0]
            k2 = kappa[1] if len(kappa) > 1 else 0
            d = k1 - k2
            # C_kappa = c_lead (x1 x2)^k2 P_(d)(x1, x2), P_(d) = d!/(1/2)_d sum_j (1/2)_j (1/2)_{d-j} / (j! (d-j)!) x1^j x2^(d-j)
            lead = _log_leading_coefficient(kappa) + math.lgamma(d + 1) - _log_poch(0.5, d)
            for j in range((d + 1) // 2, d + 1):
                lam = Partition(tuple(x for x in (j + k2, d - j + k2) if x > 0))
                val = lead + _log_poch(0.5, j) + _log_poch(0.5, d - j) - math.lgamma(j + 1) - math.lgamma(d - j + 1)
                coef[r, index[lam]] = math.exp(val)
        return parts, parts, coef
    # branching over the last variable
    for r, kappa in enumerate(parts):
        lc = _log_c_normalizer(kappa)
        for mu in _strips(kappa, p - 1):
            g = math.exp(_log_beta(kappa, mu) + lc - _log_c_normalizer(mu)) if mu != kappa else 1.0
            size = t - mu.weight
            sub_k, sub_l, sub_c = zonal_coefficients(p - 1, mu.weight)
            row = sub_c[sub_k.index(mu)]
            for lam_sub, v in zip(sub_l, row):
                if v == 0.0:
                    continue
                if size and lam_sub and lam_sub[-1] < size and len(lam_sub) == p - 1:
                    continue
                if size and len(lam_sub) < p - 1:
                    continue
                lam = Partition(tuple(lam_sub) + ((size,) if size else ()))
                coef[r, index[lam]] += g * v
    return parts, parts, coef


def _log_poch(a: float, k: int) -> float:
    return math.lgamma(a + k) - math.lgamma(a)


def _monomial(lam: Sequence[int], x: np.ndarray) -> np.ndarray:
    """Monomial symmetric function ``m_lam`` at the last axis of ``x``."""
    p = x.shape[-1]
    if len(lam) > p:
        return np.zeros(x.shape[:-1])
    exps = _distinct_permutations(tuple(lam) + (0,) * (p - len(lam)))
    out = np.zeros(x.shape[:-1])
    for e in exps:
        term = np.ones(x.shape[:-1])
        for i, ei in enumerate(e):
            if ei:
                term = term * x[..., i] ** ei
        out = out + term
    return out


@lru_cache(maxsize=None)
def _distinct_permutations(exps: tuple) -> tuple:
    if len(exps) <= 1:
        return (exps,)
    out = []
    seen = set()
    for i, v in enumerate(exps):
        if v in seen:
            continue
        seen.add(v)
        for rest in _distinct_permutations(exps[:i] + exps[i + 1:]):
            out.append((v,) + rest)
    return tuple(out)


# ---------------------------------------------------------------------------
# power-sum backend


@lru_cache(maxsize=None)
def _power_sum_expansion(t: int) -> tuple[tuple[Partition, ...], tuple[Partition, ...], np.ndarray]:
    """Coefficients of every ``C_kappa`` (``kappa |- t``) in the power-sum basis ``p_rho``."""
    if t > POWER_SUM_MAX_DEGREE:
        raise ValueError(f"power-sum backend supports weight <= {POWER_SUM_MAX_DEGREE}, got {t}")
    kappas, lambdas, c = zonal_coefficients(max(t, 1), t)
    rhos = lambdas
    index = {lam: j for j, lam in enumerate(lambdas)}
    # trans[rho, lam] = [m_lam] p_rho
    trans = np.zeros((len(rhos), len(lambdas)))
    for r, rho in enumerate(rhos):
        poly = {Partition(()): 1.0}
        for k in rho:
            poly = _times_power_sum(poly, k)
        for lam, v in poly.items():
            trans[r, index[lam]] = v
    chi = np.linalg.solve(trans.T, c.T).T
    return kappas, rhos, chi


def _times_power_sum(poly: dict, k: int) -> dict:
    """Multiply a monomial-symmetric expansion by ``p_k``."""
    out: dict = {}
    for lam, v in poly.items():
        parts = list(lam)
        cands = set()
        for i in range(len(parts)):
            cands.add(tuple(sorted(parts[:i] + [parts[i] + k] + parts[i + 1:], reverse=True)))
        cands.add(tuple(sorted(parts + [k], reverse=True)))
        for mu in cands:
            # coefficient: number of parts of mu equal to a value w with w - k giving lam back
            cnt = 0
            for w in set(mu):
                if w < k:
                    continue
                rest = list(mu)
                rest.remove(w)
                if w > k:
                    rest.append(w - k)
                if tuple(sorted(rest, reverse=True)) == tuple(lam):
                    cnt += mu.count(w)
            if cnt:
                key = Partition(mu)
                out[key] = out.get(key, 0.0) + v * cnt
    return out


# ---------------------------------------------------------------------------
# matrix arguments


class MatrixArgument:
    """Argument of a zonal polynomial: explicit matrix, spectrum, or power sums.

    Exactly one of ``matrix``, ``spectrum`` or ``power_sums`` must be given.
    ``power_sums[j - 1]`` holds ``tr(X**j)``.
    """

    def __init__(self, matrix=None, *, spectrum=None, power_sums=None, dimension: Optional[int] = None):
        given = [x is not None for x in (matrix, spectrum, power_sums)]
        if sum(given) != 1:
            raise ValueError("give exactly one of matrix, spectrum, power_sums")
        self.matrix = None if matrix is None else np.asarray(matrix, dtype=float)
        self._spectrum = None if spectrum is None else np.asarray(spectrum, dtype=float).ravel()
        self._power_sums = None if power_sums is None else np.asarray(power_sums, dtype=float).ravel()
        if self.matrix is not None:
            if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
                raise ValueError("matrix argument must be square")
            self.dimension = self.matrix.shape[0]
        elif self._spectrum is not None:
            self.dimension = self._spectrum.size
        else:
            if dimension is None:
                raise ValueError("power-sum arguments need an explicit dimension")
            self.dimension = int(dimension)

    @property
    def is_symmetric(self) -> bool:
        if self.matrix is None:
            return self._spectrum is not None
        return bool(np.allclose(self.matrix, self.matrix.T, rtol=0, atol=1e-13 * max(1.0, np.abs(self.matrix).max())))

    def spectrum(self) -> Optional[np.ndarray]:
        """Real eigenvalues when available without a non-symmetric eigensolve."""
        if self._spectrum is not None:
            return self._spectrum
        if self.matrix is not None and self.is_symmetric:
            return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))
        return None

    def power_sums(self, depth: int) -> np.ndarray:
        """``[tr X, tr X^2, ..., tr X^depth]``."""
        if self._power_sums is not None:
            if self._power_sums.size < depth:
                raise ValueError(
                    f"power sums given to depth {self._power_sums.size}, weight {depth} needs more"
                )
            return self._power_sums[:depth]
        if self._spectrum is not None:
            return np.array([np.sum(self._spectrum ** j) for j in range(1, depth + 1)])
        out = np.empty(depth)
        P = np.eye(self.dimension)
        for j in range(depth):
            P = P @ self.matrix
            out[j] = np.trace(P)
        return out


def _as_argument(arg) -> MatrixArgument:
    if isinstance(arg, MatrixArgument):
        return arg
    return MatrixArgument(arg)


def zonal_C(kappa: Sequence[int], arg) -> float:
    """Zonal polynomial ``C_kappa`` evaluated at a matrix argument.

    ``arg`` is a :class:`MatrixArgument` or a square array.  Symmetric
    arguments and spectra use the eigenvalue backend, everything else the
    power-sum backend.
    """
    kappa = Partition(kappa)
    arg = _as_argument(arg)
    t = kappa.weight
    if t == 0:
        return 1.0
    spec = arg.spectrum()
    if spec is not None:
        if len(kappa) > spec.size:
            return 0.0
        kappas, lambdas, coef = zonal_coefficients(spec.size, t)
        row = coef[kappas.index(kappa)]
        return float(sum(v * _monomial(lam, spec) for lam, v in zip(lambdas, row) if v))
    return _zonal_from_power_sums(kappa, arg.power_sums(t))


def _zonal_from_power_sums(kappa: Partition, ps: np.ndarray) -> float:
    kappas, rhos, chi = _power_sum_expansion(kappa.weight)
    row = chi[kappas.index(kappa)]
    total = 0.0
    for rho, v in zip(rhos, row):
        total += v * math.prod(ps[k - 1] for k in rho)
    return float(total)


def degree_term(t: int, a: float, arg) -> float:
    """``S_t(A) = (1/t!) sum_{kappa |- t} C_kappa(A) / (a)_kappa``.

    Only partitions with at most ``dim A`` parts contribute.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not a > 0:
        raise ValueError("a must be positive")
    arg = _as_argument(arg)
    if t == 0:
        return 1.0
    spec = arg.spectrum()
    p = arg.dimension
    if a <= (min(p, t) - 1) / ALPHA and float(a * ALPHA).is_integer():
        raise ValueError(f"(a)_kappa vanishes for a={a} with up to {min(p, t)} parts")
    total = 0.0
    if spec is not None:
        kappas, lambdas, coef = zonal_coefficients(p, t)
        mon = np.array([_monomial(lam, spec) for lam in lambdas])
        vals = coef @ mon
        for kappa, v in zip(kappas, vals):
            total += v / gen_pochhammer(a, kappa)
    else:
        ps = arg.power_sums(t)
        for kappa in enumerate_partitions(t, p):
            total += _zonal_from_power_sums(kappa, ps) / gen_pochhammer(a, kappa)
    return total / math.factorial(t)


# ---------------------------------------------------------------------------
# batched log-space degree terms (used by the densities)


class _DegreeTable:
    """Per-degree coefficient tables for ``S_t`` in ``p`` variables, grown on demand.

    For the top eigenvalue scaled to 1, ``S_t(y) = exp(shift[t]) * sum_q w[t][q] mono_q(y)``.
    """

    def __init__(self, p: int, a: float):
        self.p = p
        self.a = a
        self.shift: list[float] = []
        self.weights: list[np.ndarray] = []
        self.lambdas: list[tuple] = []
        self.dense2: Optional[np.ndarray] = None

    def extend(self, M: int) -> None:
        for t in range(len(self.shift), M + 1):
            kappas, lambdas, coef = zonal_coefficients(self.p, t)
            logw = np.array([-log_gen_pochhammer(self.a, k)[0] for k in kappas]) - math.lgamma(t + 1)
            sh = float(logw.max())
            w = np.exp(logw - sh) @ coef
            self.shift.append(sh)
            self.weights.append(w)
            self.lambdas.append(lambdas)
        if self.p == 2:
            E = np.zeros((M + 1, M + 1))
            for t in range(M + 1):
                for lam, v in zip(self.lambdas[t], self.weights[t]):
                    l1 = lam[0] if lam else 0
                    l2 = lam[1] if len(lam) > 1 else 0
                    E[t, l2] += v
                    if l1 != l2:
                        E[t, l1] += v
            self.dense2 = E


_TABLES: dict = {}


def _table(p: int, a: float, M: int) -> _DegreeTable:
    key = (p, float(a))
    tab = _TABLES.get(key)
    if tab is None:
        tab = _TABLES[key] = _DegreeTable(p, float(a))
    if len(tab.shift) <= M:
        tab.extend(M)
    return tab


def log_degree_terms(x: np.ndarray, a: float, M: int) -> np.ndarray:
    """``log S_t`` for ``t = 0..M`` at a batch of nonnegative spectra.

    ``x`` has shape ``(S, p)``; the result has shape ``(S, M + 1)`` with
    ``-inf`` where the term vanishes.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ValueError("log-space degree terms need nonnegative spectra")
    S, p = x.shape
    out = np.full((S, M + 1), -np.inf)
    out[:, 0] = 0.0
    if M == 0:
        return out
    s = x.max(axis=1)
    live = s > 0
    if not np.any(live):
        return out
    xs = x[live] / s[live, None]
    tab = _table(p, a, M)
    ts = np.arange(M + 1)
    shift = np.array(tab.shift[: M + 1])
    with np.errstate(divide="ignore"):
        if p == 1:
            poly = np.tile(np.array([tab.weights[t][0] for t in range(M + 1)]), (xs.shape[0], 1))
        elif p == 2:
            z = np.sort(xs, axis=1)[:, 0]
            zp = z[:, None] ** ts[None, :]
            poly = zp @ tab.dense2[: M + 1, : M + 1].T
        else:
            poly = np.empty((xs.shape[0], M + 1))
            for t in range(M + 1):
                mon = np.stack([_monomial(lam, xs) for lam in tab.lambdas[t]], axis=1)
                poly[:, t] = mon @ tab.weights[t]
        logpoly = np.log(poly)
        out[live] = ts[None, :] * np.log(s[live])[:, None] + shift[None, :] + logpoly
    out[:, 0] = 0.0
    return out


def truncate_log_series(logmag: np.ndarray, sign: np.ndarray, ctl: SeriesControl, raise_on_failure: bool = True):
    """Sum a batch of signed series given in log-magnitude form.

    Returns ``(log_sum, n_terms, converged)`` per row.  A row stops after the
    first run of ``ctl.consecutive_small`` terms each below ``ctl.rel_tol``
    times the running partial sum.
    """
    logmag = np.atleast_2d(logmag)
    sign = np.atleast_2d(sign)
    S, L = logmag.shape
    finite = np.where(np.isfinite(logmag), logmag, -np.inf)
    ref = finite.max(axis=1, keepdims=True)
    ref = np.where(np.isfinite(ref), ref, 0.0)
    scaled = sign * np.exp(finite - ref)
    partial = np.cumsum(scaled, axis=1)
    small = np.abs(scaled) < ctl.rel_tol * np.abs(partial)
    k = ctl.consecutive_small
    if L >= k:
        run = np.ones((S, L - k + 1), dtype=bool)
        for j in range(k):
            run &= small[:, j: L - k + 1 + j]
        hit = run.any(axis=1)
        first = np.where(hit, run.argmax(axis=1) + k - 1, L - 1)
    else:
        hit = np.zeros(S, dtype=bool)
        first = np.full(S, L - 1)
    total = partial[np.arange(S), first]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_sum = np.where(total > 0, np.log(np.abs(total)) + ref[:, 0], -np.inf)
    bad = ~hit | (total <= 0)
    if raise_on_failure and np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        last = float(scaled[i, -1] * math.exp(ref[i, 0]))
        psum = float(total[i] * math.exp(ref[i, 0]))
        with np.errstate(divide="ignore"):
            # log10 magnitudes stay readable where the values under- or overflow
            lp = (math.log(abs(total[i])) + ref[i, 0]) / math.log(10) if total[i] else -math.inf
            ll = float(finite[i, -1]) / math.log(10)
        detail = f"partial sum {psum:.6g} (log10 |.| = {lp:.4g}), last term {last:.6g} (log10 |.| = {ll:.4g})"
        if not hit[i]:
            raise SeriesConvergenceError(
                f"series did not converge within max_degree={L - 1} (row {i}): {detail}",
                partial_sum=psum, last_term=last, index=i,
            )
        raise SeriesConvergenceError(
            f"series sum is not positive (row {i}): {detail}",
            partial_sum=psum, last_term=last, index=i,
        )
    return log_sum, first + 1, ~bad
