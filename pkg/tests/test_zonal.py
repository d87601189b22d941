import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import partitions, random_psd, zonal_oracle
from polarshape.zonal import (
    MatrixArgument,
    Partition,
    SeriesControl,
    SeriesConvergenceError,
    degree_term,
    enumerate_partitions,
    gen_pochhammer,
    log_degree_terms,
    log_gen_pochhammer,
    truncate_log_series,
    zonal_C,
)

spectra = arrays(np.float64, st.integers(2, 3), elements=st.floats(0.0, 3.0))


def test_partition_enumeration_order():
    assert enumerate_partitions(3, 3) == [(3,), (2, 1), (1, 1, 1)]
    assert enumerate_partitions(4, 2) == [(4,), (3, 1), (2, 2)]
    assert enumerate_partitions(0) == [()]


@pytest.mark.parametrize("t", range(1, 11))
def test_partition_counts(t):
    assert len(enumerate_partitions(t)) == len(partitions(t))


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition((1, 2))
    with pytest.raises(ValueError):
        Partition((2, 0))
    assert Partition((3, 1)).conjugate() == (2, 1, 1)
    assert Partition((3, 1)).weight == 4


def test_generalized_pochhammer():
    # (a)_(2,1) = a (a + 1) (a - 1/2)
    a = 1.7
    assert gen_pochhammer(a, (2, 1)) == pytest.approx(a * (a + 1) * (a - 0.5), rel=1e-15)
    assert gen_pochhammer(a, ()) == 1.0
    logv, sign = log_gen_pochhammer(0.2, (1, 1))
    assert sign == -1.0 and logv == pytest.approx(math.log(0.2 * 0.3))
    assert log_gen_pochhammer(0.5, (1, 1))[1] == 0.0


@pytest.mark.parametrize("p", [2, 3])
@pytest.mark.parametrize("t", range(1, 8))
def test_zonal_matches_exact_oracle(p, t):
    rng = np.random.default_rng(100 * p + t)
    x = rng.uniform(0.1, 2.0, p)
    for kappa in enumerate_partitions(t, p):
        ref = zonal_oracle(kappa, x)
        assert zonal_C(kappa, MatrixArgument(spectrum=x)) == pytest.approx(ref, rel=1e-11)


@pytest.mark.parametrize("t", range(1, 9))
def test_power_sum_backend_on_nonsymmetric_product(t):
    # A B with A, B PSD is not symmetric but has the spectrum of A^{1/2} B A^{1/2}
    rng = np.random.default_rng(t)
    A, B = random_psd(rng, 3), random_psd(rng, 3)
    M = A @ B
    x = np.linalg.eigvals(M).real
    # power sums cancel, so errors scale with (tr M)^t rather than the term itself
    scale = x.sum() ** t
    for kappa in enumerate_partitions(t, 3):
        assert abs(zonal_C(kappa, M) - zonal_oracle(kappa, x)) <= 1e-11 * scale


def test_zonal_of_short_spectrum_vanishes_on_long_partitions():
    assert zonal_C((1, 1, 1), MatrixArgument(spectrum=[1.0, 2.0])) == 0.0


def test_degree_term_definition():
    x = np.array([0.4, 1.1])
    a = 1.5
    for t in range(6):
        ref = sum(zonal_oracle(k, x) / gen_pochhammer(a, k) for k in partitions(t) if len(k) <= 2) / math.factorial(t)
        ref = ref if t else 1.0
        assert degree_term(t, a, MatrixArgument(spectrum=x)) == pytest.approx(ref, rel=1e-12)


def test_degree_term_rejects_vanishing_pochhammer():
    with pytest.raises(ValueError, match="vanishes"):
        degree_term(3, 1.0, MatrixArgument(spectrum=[1.0, 1.0, 1.0]))


@pytest.mark.parametrize("p, a", [(1, 1.0), (2, 1.0), (2, 2.5), (3, 1.5)])
def test_log_degree_terms_agree_with_direct_terms(p, a):
    rng = np.random.default_rng(p)
    x = rng.uniform(0.0, 4.0, (5, p))
    x[0] = 0.0
    logs = log_degree_terms(x, a, 12)
    for s in range(5):
        for t in range(13):
            direct = degree_term(t, a, MatrixArgument(spectrum=x[s]))
            if direct == 0.0:
                assert logs[s, t] == -np.inf
            else:
                assert logs[s, t] == pytest.approx(math.log(direct), abs=1e-11)


def test_series_truncation_of_exponential():
    x = 3.0
    t = np.arange(80)
    logmag = t * math.log(x) - np.array([math.lgamma(k + 1) for k in t])
    log_sum, n_terms, ok = truncate_log_series(logmag, np.ones_like(logmag), SeriesControl())
    assert ok[0] and log_sum[0] == pytest.approx(x, rel=1e-13)
    assert n_terms[0] < 40


def test_series_truncation_failure_reports_partial_sum():
    logmag = np.zeros((1, 10))
    with pytest.raises(SeriesConvergenceError) as info:
        truncate_log_series(logmag, np.ones_like(logmag), SeriesControl(max_degree=9))
    assert info.value.partial_sum == pytest.approx(10.0)
    log_sum, _, ok = truncate_log_series(logmag, np.ones_like(logmag), SeriesControl(), raise_on_failure=False)
    assert not ok[0]


@settings(max_examples=60, deadline=None)
@given(spectra, st.integers(1, 8))
def test_zonal_sum_is_trace_power(x, t):
    total = sum(zonal_C(k, MatrixArgument(spectrum=x)) for k in enumerate_partitions(t, len(x)))
    assert total == pytest.approx(x.sum() ** t, rel=1e-10, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(spectra, st.integers(1, 6), st.floats(0.1, 5.0))
def test_zonal_is_homogeneous(x, t, scale):
    for kappa in enumerate_partitions(t, len(x)):
        lhs = zonal_C(kappa, MatrixArgument(spectrum=scale * x))
        rhs = scale ** t * zonal_C(kappa, MatrixArgument(spectrum=x))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(spectra, st.integers(1, 6), st.randoms(use_true_random=False))
def test_zonal_is_symmetric_in_eigenvalues(x, t, rnd):
    perm = list(range(len(x)))
    rnd.shuffle(perm)
    for kappa in enumerate_partitions(t, len(x)):
        a = zonal_C(kappa, MatrixArgument(spectrum=x))
        b = zonal_C(kappa, MatrixArgument(spectrum=x[perm]))
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 2, elements=st.floats(0.0, 3.0)), st.floats(1.0, 6.0))
def test_log_degree_terms_are_finite(x, a):
    logs = log_degree_terms(x[None, :], a, 20)[0]
    if x.max() > 0:
        assert np.all(np.isfinite(logs))
    assert logs[0] == 0.0
