"""Slow, independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np


def partitions(k):
    def rec(rest, largest):
        if rest == 0:
            yield ()
            return
        for first in range(min(rest, largest), 0, -1):
            for tail in rec(rest - first, first):
                yield (first,) + tail
    return list(rec(k, k))


def _dominated(lam, kappa):
    a = b = 0
    for i in range(max(len(lam), len(kappa))):
        a += lam[i] if i < len(lam) else 0
        b += kappa[i] if i < len(kappa) else 0
        if a > b:
            return False
    return True


def _rho(kappa):
    return sum(k * (k - i) for i, k in enumerate(kappa, start=1))


@lru_cache(maxsize=None)
def zonal_monomial_coefficients(kappa):
    """Exact coefficients of C_kappa in the monomial basis.

    Leading term 2^k k! / prod over cells of (leg + 2 arm + 2); the rest from
    the recurrence of the Laplace-Beltrami eigen-operator.
    """
    kappa = tuple(kappa)
    k = sum(kappa)
    conj = [sum(1 for part in kappa if part > j) for j in range(kappa[0])] if kappa else []
    upper = 1
    for i, row in enumerate(kappa):
        for j in range(row):
            arm, leg = row - j - 1, conj[j] - i - 1
            upper *= leg + 2 * arm + 2
    coef = {kappa: Fraction(2 ** k * math.factorial(k), upper)}
    lower = [lam for lam in partitions(k) if lam != kappa and _dominated(lam, kappa)]
    # reverse lexicographic order refines dominance, so every needed mu is ready
    lower.sort(reverse=True)
    for lam in lower:
        total = Fraction(0)
        lam_l = list(lam)
        for i, j in itertools.combinations(range(len(lam_l)), 2):
            for t in range(1, lam_l[j] + 1):
                mu = lam_l.copy()
                mu[i] += t
                mu[j] -= t
                mu = tuple(sorted((x for x in mu if x), reverse=True))
                if mu in coef:
                    total += ((lam_l[i] + t) - (lam_l[j] - t)) * coef[mu]
        coef[lam] = total / (_rho(kappa) - _rho(lam))
    return coef


def monomial_symmetric(lam, x):
    """M_lambda evaluated at the variables ``x``."""
    p = len(x)
    if len(lam) > p:
        return 0.0
    exps = tuple(lam) + (0,) * (p - len(lam))
    return float(sum(np.prod([xi ** e for xi, e in zip(x, perm)]) for perm in set(itertools.permutations(exps))))


def zonal_oracle(kappa, eigenvalues):
    return sum(float(c) * monomial_symmetric(lam, eigenvalues)
               for lam, c in zonal_monomial_coefficients(tuple(kappa)).items())


def kotz_h_mp(y, T, R, c):
    """Kotz generator evaluated in mpmath."""
    T, R, c = mpmath.mpf(T), mpmath.mpf(R), mpmath.mpf(c)
    norm = R ** (T - 1 + c) * mpmath.gamma(c) / (mpmath.pi ** c * mpmath.gamma(T - 1 + c))
    return norm * y ** (T - 1) * mpmath.exp(-R * y)


def random_spd(rng, n, spread=1.0):
    A = rng.standard_normal((n, n)) * spread
    return A @ A.T + 0.3 * np.eye(n)


def random_psd(rng, n, rank=None):
    B = rng.standard_normal((n, rank or n))
    return B @ B.T
