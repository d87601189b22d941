import numpy as np
import pytest
from scipy import stats

from polarshape.geometry import angles_to_shape, batch_polar_shapes
from polarshape.mc import (
    SamplerConfig,
    cell_probabilities,
    empirical_vs_analytic,
    normalization_check,
    sample_landmarks,
    sample_reduced,
    size_and_shape_normalization,
    specimen_rng,
    two_sample_chi2,
)
from polarshape.models import (
    GeneratorSpec,
    ModelParams,
    QuadratureError,
    isotropic_shape_density,
    variant_spec,
)

MU = np.array([[2.0, 0.5], [0.4, 1.5]])


def _density(variant, mu=MU, sigma2=1.0):
    return lambda u: isotropic_shape_density(angles_to_shape(u, check=False), mu, sigma2, variant)


def test_identical_seeds_give_identical_streams():
    cfg = SamplerConfig(variant_spec("kotz-t2", 3, 2), ModelParams(MU, 1.0), 50, seed=9)
    a, b = sample_reduced(cfg), sample_reduced(cfg)
    assert a.tobytes() == b.tobytes()
    other = sample_reduced(SamplerConfig(cfg.spec, cfg.params, 50, seed=10))
    assert not np.array_equal(a, other)


def test_specimen_streams_do_not_depend_on_sample_size():
    spec = variant_spec("gaussian", 3, 2)
    small = sample_reduced(SamplerConfig(spec, ModelParams(MU, 1.0), 5, seed=3))
    large = sample_reduced(SamplerConfig(spec, ModelParams(MU, 1.0), 40, seed=3))
    np.testing.assert_array_equal(small, large[:5])
    assert specimen_rng(3, 7).random() == specimen_rng(3, 7).random()


def test_sampler_validation():
    with pytest.raises(ValueError, match="dimensions"):
        SamplerConfig(variant_spec("gaussian", 3, 3), ModelParams(MU, 1.0), 5)
    with pytest.raises(ValueError, match="positive"):
        SamplerConfig(variant_spec("gaussian", 3, 2), ModelParams(MU, 1.0), 0)


@pytest.mark.parametrize("variant", ["gaussian", "kotz-t2", "kotz-t3"])
def test_radial_law(variant):
    # centered squared size is rho^2 with rho^2 ~ Gamma(T - 1 + nK/2, rate R)
    spec = variant_spec(variant, 3, 2)
    Xs = sample_landmarks(SamplerConfig(spec, ModelParams(np.zeros((2, 2)), 1.0), 10000, seed=1))
    r2 = np.array([np.sum((x.values - x.values.mean(0)) ** 2) for x in Xs])
    p = stats.kstest(r2, stats.gamma(spec.radial_shape(), scale=1 / spec.R).cdf).pvalue
    assert p > 0.01
    if variant == "gaussian":
        assert stats.kstest(r2, stats.chi2(4).cdf).pvalue > 0.01


def test_mean_and_covariance_of_reduced_samples():
    Sigma = np.array([[1.0, 0.4], [0.4, 0.5]])
    Y = sample_reduced(SamplerConfig(variant_spec("gaussian", 3, 2), ModelParams(MU, Sigma), 20000, seed=2))
    np.testing.assert_allclose(Y.mean(0), MU, atol=0.03)
    cov = np.einsum("sik,sjk->ij", Y - MU, Y - MU) / (len(Y) * 2)
    np.testing.assert_allclose(cov, Sigma, atol=0.03)


def test_landmark_covariance_theta_and_centroid():
    Theta = np.array([[2.0, 0.3], [0.3, 1.0]])
    cfg = SamplerConfig(variant_spec("gaussian", 3, 2), ModelParams(MU, 1.0, Theta), 5, seed=0,
                        centroid=np.array([10.0, -4.0]))
    for X in sample_landmarks(cfg):
        np.testing.assert_allclose(X.values.mean(0), [10.0, -4.0], atol=1e-12)


def test_shapes_ignore_translation_and_scaling():
    Xs = sample_landmarks(SamplerConfig(variant_spec("gaussian", 3, 2), ModelParams(MU, 1.0), 30, seed=4))
    W, r, u, _ = batch_polar_shapes(Xs)
    W2, r2, u2, _ = batch_polar_shapes([3.5 * x.values + np.array([1.0, -2.0]) for x in Xs])
    np.testing.assert_allclose(u2, u, atol=1e-10)
    np.testing.assert_allclose(r2, 3.5 * r, rtol=1e-12)


def test_cell_probabilities_sum_to_one():
    assert cell_probabilities(_density("kotz-t3")).sum() == pytest.approx(1.0, abs=1e-6)


def test_normalization_check_reports_failure():
    rng = np.random.default_rng(0)
    with pytest.raises(QuadratureError, match="did not settle"):
        normalization_check(lambda u: rng.random(len(u)), max_panels=8)
    with pytest.raises(ValueError, match="N = 3"):
        normalization_check(_density("gaussian"), dims=(4, 3))


@pytest.mark.parametrize("variant", ["gaussian", "kotz-t2", "kotz-t3"])
def test_sampled_angles_follow_the_density(variant):
    cfg = SamplerConfig(variant_spec(variant, 3, 2), ModelParams(MU, 1.0), 5000, seed=5)
    report = empirical_vs_analytic(sample_reduced(cfg), _density(variant))
    assert report.p_value > 0.01
    assert report.expected.min() >= 5 and report.observed.sum() == 5000


def test_wrong_density_is_rejected():
    cfg = SamplerConfig(variant_spec("gaussian", 3, 2), ModelParams(MU, 1.0), 5000, seed=6)
    report = empirical_vs_analytic(sample_reduced(cfg), _density("gaussian", mu=1.3 * MU))
    assert report.p_value < 1e-6


def test_central_shape_law_is_generator_free():
    zero = ModelParams(np.zeros((2, 2)), np.array([[1.0, 0.3], [0.3, 0.6]]))
    a = sample_reduced(SamplerConfig(GeneratorSpec.gaussian(3, 2), zero, 8000, seed=7))
    b = sample_reduced(SamplerConfig(GeneratorSpec.kotz(3, 0.5, 3, 2), zero, 8000, seed=8))
    assert two_sample_chi2(a, b).p_value > 0.01


def test_two_sample_test_detects_different_laws():
    a = sample_reduced(SamplerConfig(GeneratorSpec.gaussian(3, 2), ModelParams(MU, 1.0), 4000, seed=9))
    b = sample_reduced(SamplerConfig(GeneratorSpec.gaussian(3, 2), ModelParams(np.zeros((2, 2)), 1.0), 4000, seed=10))
    assert two_sample_chi2(a, b).p_value < 1e-6


@pytest.mark.parametrize("spec", [GeneratorSpec.gaussian(3, 2), GeneratorSpec.kotz(3, 0.5, 3, 2)], ids=["gaussian", "kotz-t3"])
@pytest.mark.parametrize("mu", [np.zeros((2, 2)), MU], ids=["central", "noncentral"])
def test_size_and_shape_density_integrates_to_one(spec, mu):
    est, se = size_and_shape_normalization(ModelParams(mu, np.array([[1.0, 0.2], [0.2, 0.8]])), spec,
                                           n_draws=200000, seed=1)
    assert se < 0.003
    assert est == pytest.approx(1.0, abs=0.01)
