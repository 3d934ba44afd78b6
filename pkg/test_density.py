import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from src.adapters.kernel_adapter import KernelFactory, LaplaceError
from src.core.domain import CensoredSample, ContaminatedSample, ModelConfig, Sample
from src.core.errors import DataError, UnsupportedCombinationError, VariantMismatchError
from src.infrastructure.density_adapter import (
    JointDensityModel,
    build_model,
    conditional_density,
    kaplan_meier,
    kde_censored,
    kde_deconv,
    kde_dy,
    kde_dyy,
    kde_joint,
    kde_marginal_x,
)


def _phi(u):
    return np.exp(-0.5 * u * u) / np.sqrt(2 * np.pi)


def test_single_point_at_origin(gaussian):
    model = JointDensityModel.standard(Sample([0.0], [0.0]), gaussian, gaussian, 1.0, 1.0)
    assert kde_joint(model, 0.0, 0.0) == pytest.approx(1 / (2 * np.pi), abs=1e-12)


def test_box_kernel_far_query_is_zero():
    box = KernelFactory.create_kernel("box")
    model = JointDensityModel.standard(Sample([0.0, 1.0], [0.0, 1.0]), box, box, 0.5, 0.5)
    assert kde_joint(model, 10.0, 10.0) == 0.0
    assert kde_joint(model, 0.0, 10.0) == 0.0


def test_three_point_sum_matches_direct_loop(gaussian, three_points):
    model = JointDensityModel.standard(three_points, gaussian, gaussian, 0.5, 0.5)
    expected = 0.0
    for xi, yi in zip(three_points.x, three_points.y):
        expected += _phi((xi - 1.0) / 0.5) * _phi((yi - 0.5) / 0.5)
    expected /= 3 * 0.5 * 0.5
    assert kde_joint(model, 1.0, 0.5) == pytest.approx(expected, rel=1e-13)


def test_vectorized_query_matches_scalar(gaussian, three_points):
    model = JointDensityModel.standard(three_points, gaussian, gaussian, 0.5, 0.7)
    ys = np.linspace(-1, 2, 7)
    batch = kde_joint(model, 0.3, ys)
    assert batch.shape == ys.shape
    for y, value in zip(ys, batch):
        assert kde_joint(model, 0.3, y) == pytest.approx(value, rel=1e-14)


def test_standard_density_integrates_to_one(gaussian):
    rng = np.random.default_rng(0)
    sample = Sample(rng.normal(size=8), rng.normal(size=8))
    model = JointDensityModel.standard(sample, gaussian, gaussian, 0.6, 0.5)
    xs = np.linspace(-8, 8, 401)
    ys = np.linspace(-8, 8, 401)
    inner = np.array([integrate.trapezoid(model.density(x, ys), ys) for x in xs])
    assert integrate.trapezoid(inner, xs) == pytest.approx(1.0, abs=1e-3)


def test_marginal_and_conditional_density(gaussian, three_points):
    model = JointDensityModel.standard(three_points, gaussian, gaussian, 0.5, 0.4)
    expected = np.mean(_phi((three_points.x - 0.8) / 0.5)) / 0.5
    assert kde_marginal_x(model, 0.8) == pytest.approx(expected, rel=1e-13)
    ys = np.linspace(-5, 6, 2001)
    assert integrate.trapezoid(conditional_density(model, 0.8, ys), ys) == pytest.approx(1.0, abs=1e-6)


def test_box_k2_derivatives_unsupported(gaussian, three_points):
    box = KernelFactory.create_kernel("box")
    model = JointDensityModel.standard(three_points, gaussian, box, 0.5, 0.5)
    with pytest.raises(UnsupportedCombinationError):
        kde_dy(model, 0.0, 0.2)


def test_variant_mismatch(gaussian, three_points):
    model = JointDensityModel.standard(three_points, gaussian, gaussian, 0.5, 0.5)
    with pytest.raises(VariantMismatchError):
        kde_censored(model, 0.0, 0.0)
    with pytest.raises(VariantMismatchError):
        kde_deconv(model, 0.0, 0.0)


# ----------------------------------------------------------------------
# Derivadas en y
# ----------------------------------------------------------------------

def test_symmetric_data_has_zero_slope(gaussian):
    model = JointDensityModel.standard(Sample([0.0, 0.0, 0.2, 0.2], [-1.0, 1.0, -0.5, 0.5]),
                                       gaussian, gaussian, 0.3, 0.4)
    assert kde_dy(model, 0.1, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_single_point_is_a_mode(gaussian):
    model = JointDensityModel.standard(Sample([0.3], [1.7]), gaussian, gaussian, 0.5, 0.5)
    assert kde_dy(model, 0.0, 1.7) == 0.0
    assert kde_dyy(model, 0.0, 1.7) < 0


@pytest.mark.parametrize("k2_family", ["gaussian", "epanechnikov"])
def test_derivatives_match_finite_differences(gaussian, k2_family):
    rng = np.random.default_rng(11)
    sample = Sample(rng.uniform(0, 1, 30), rng.normal(size=30))
    model = JointDensityModel.standard(sample, gaussian, KernelFactory.create_kernel(k2_family), 0.3, 0.6)
    step = 1e-5
    for _ in range(100):
        x, y = rng.uniform(0, 1), rng.uniform(-2, 2)
        fd1 = (model.density(x, y + step) - model.density(x, y - step)) / (2 * step)
        fd2 = (kde_dy(model, x, y + step) - kde_dy(model, x, y - step)) / (2 * step)
        if k2_family == "epanechnikov":
            # los saltos de K₂'' en |u| = 1 invalidan la diferencia finita cerca del borde
            u = np.abs((sample.y - y) / 0.6)
            if np.any(np.abs(u - 1.0) < 1e-3):
                continue
        assert kde_dy(model, x, y) == pytest.approx(fd1, abs=1e-6)
        assert kde_dyy(model, x, y) == pytest.approx(fd2, abs=1e-6)


# ----------------------------------------------------------------------
# Kaplan-Meier y variante censurada
# ----------------------------------------------------------------------

def test_kaplan_meier_without_censoring():
    km = kaplan_meier(CensoredSample([0, 0, 0], [1.0, 2.0, 3.0], [1, 1, 1]))
    assert km(0.5) == 1.0
    assert km(1.5) == pytest.approx(2 / 3, abs=1e-15)
    assert km(2.5) == pytest.approx(1 / 3, abs=1e-15)
    assert km(3.0) == 0.0


def test_kaplan_meier_mixed_censoring():
    km = kaplan_meier(CensoredSample([0, 0, 0], [1.0, 2.0, 3.0], [1, 0, 1]))
    assert km(2.5) == pytest.approx(2 / 3, abs=1e-12)


def test_kaplan_meier_only_last_uncensored():
    t = np.array([0.5, 1.2, 2.0, 3.3, 4.1])
    km = kaplan_meier(CensoredSample(np.zeros(5), t, [0, 0, 0, 0, 1]))
    assert np.all(km(np.array([0.0, 0.6, 2.5, 4.0])) == 1.0)
    assert km(4.1) == 0.0


def test_kaplan_meier_hand_expanded_oracle():
    t = np.array([3.0, 1.0, 4.0, 2.0, 2.0, 5.0])
    delta = np.array([1, 1, 0, 0, 1, 1])
    km = kaplan_meier(CensoredSample(np.zeros(6), t, delta))
    # orden: 1(δ=1), 2(δ=1), 2(δ=0), 3(δ=1), 4(δ=0), 5(δ=1)
    s1 = 1 - 1 / 6
    s2 = s1 * (1 - 1 / 5)
    s4 = s2 * (1 - 1 / 3)
    assert km(1.0) == pytest.approx(s1, abs=1e-12)
    assert km(2.0) == pytest.approx(s2, abs=1e-12)
    assert km(3.5) == pytest.approx(s4, abs=1e-12)
    assert km.left_limit(3.0) == pytest.approx(s2, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(min_value=0, max_value=10, allow_nan=False), st.booleans()),
                min_size=1, max_size=30))
def test_kaplan_meier_is_non_increasing(pairs):
    t = [p[0] for p in pairs]
    delta = [1.0 if p[1] else 0.0 for p in pairs]
    delta[0] = 1.0
    km = kaplan_meier(CensoredSample(np.zeros(len(t)), t, delta))
    grid = np.linspace(-1, 11, 200)
    values = km(grid)
    assert np.all(np.diff(values) <= 1e-15)
    assert np.all((values >= 0) & (values <= 1))


def test_kaplan_meier_without_censoring_equals_empirical_survival():
    rng = np.random.default_rng(4)
    t = rng.exponential(size=50)
    km = kaplan_meier(CensoredSample(np.zeros(50), t, np.ones(50)))
    grid = np.linspace(0, t.max() * 0.999, 300)
    empirical = np.array([np.mean(t > g) for g in grid])
    np.testing.assert_allclose(km(grid), empirical, atol=1e-12)


def test_kaplan_meier_requires_an_event():
    with pytest.raises(DataError):
        kaplan_meier(CensoredSample([0, 1], [1.0, 2.0], [0, 0]))


def test_censored_single_event_equals_standard(gaussian):
    censored = JointDensityModel.censored(CensoredSample([0.2], [1.0], [1]), gaussian, gaussian, 0.5, 0.5)
    standard = JointDensityModel.standard(Sample([0.2], [1.0]), gaussian, gaussian, 0.5, 0.5)
    for x, y in [(0.0, 0.0), (0.2, 1.0), (1.0, 2.0)]:
        assert kde_censored(censored, x, y) == pytest.approx(kde_joint(standard, x, y), rel=1e-14)


def test_censored_four_point_oracle(gaussian):
    x = np.array([0.0, 0.5, 1.0, 1.5])
    t = np.array([1.0, 2.0, 3.0, 4.0])
    delta = np.array([1, 0, 1, 1])
    model = JointDensityModel.censored(CensoredSample(x, t, delta), gaussian, gaussian, 0.7, 0.9)
    # Ŝ(Tᵢ⁻): 1, −, 0.75, 0.375
    weights = np.array([1.0, 0.0, 1 / 0.75, 1 / 0.375])
    qx, qy = 0.6, 2.4
    expected = sum(w * _phi((xi - qx) / 0.7) * _phi((ti - qy) / 0.9) for w, xi, ti in zip(weights, x, t))
    expected /= 4 * 0.7 * 0.9
    np.testing.assert_allclose(model.sample_weights, weights, rtol=1e-14)
    assert kde_censored(model, qx, qy) == pytest.approx(expected, rel=1e-13)


def test_censored_weights_sum_of_inverse_left_limits(gaussian):
    t = np.array([0.5, 1.0, 1.5, 2.5])
    model = JointDensityModel.censored(CensoredSample(np.zeros(4), t, np.ones(4)), gaussian, gaussian, 1, 1)
    # sin censura Ŝ(T₍ᵢ₎⁻) = (n − i + 1)/n
    np.testing.assert_allclose(model.sample_weights, [1.0, 4 / 3, 2.0, 4.0], rtol=1e-14)


def test_uncensored_sample_is_an_inverse_survival_weighted_kde(gaussian):
    rng = np.random.default_rng(100)
    n, h1, h2 = 100, 0.3, 0.4
    x, t = rng.uniform(0, 1, n), rng.normal(size=n)
    model = JointDensityModel.censored(CensoredSample(x, t, np.ones(n)), gaussian, gaussian, h1, h2)
    standard = JointDensityModel.standard(Sample(x, t), gaussian, gaussian, h1, h2)
    rank = np.argsort(np.argsort(t)) + 1
    weights = n / (n - rank + 1)
    for qx, qy in [(0.2, -1.0), (0.5, 0.0), (0.9, 1.5)]:
        terms = _phi((x - qx) / h1) * _phi((t - qy) / h2) / (n * h1 * h2)
        assert kde_censored(model, qx, qy) == pytest.approx(np.sum(weights * terms), rel=1e-12)
        assert kde_joint(standard, qx, qy) == pytest.approx(np.sum(terms), rel=1e-12)


# ----------------------------------------------------------------------
# Deconvolución
# ----------------------------------------------------------------------

def test_deconvolution_zero_error_matches_standard(gaussian):
    rng = np.random.default_rng(2)
    w, y = rng.normal(size=20), rng.normal(size=20)
    deconv = JointDensityModel.deconvolution(ContaminatedSample(w, y, LaplaceError(0.0)), gaussian, 0.4, 0.5)
    standard = JointDensityModel.standard(Sample(w, y), gaussian, gaussian, 0.4, 0.5)
    for qx in np.linspace(-2, 2, 10):
        ys = np.linspace(-2, 2, 10)
        np.testing.assert_allclose(kde_deconv(deconv, qx, ys), kde_joint(standard, qx, ys), atol=1e-6)


def test_deconvolution_single_point_closed_form(gaussian):
    sigma, h1, h2 = 0.2, 0.5, 0.4
    model = JointDensityModel.deconvolution(ContaminatedSample([0.1], [0.3], LaplaceError(sigma)),
                                            gaussian, h1, h2)
    t = (0.1 - 0.9) / h1
    ku = _phi(t) * (1 - (sigma / h1) ** 2 * (t * t - 1))
    expected = ku * _phi((0.3 - 0.0) / h2) / (h1 * h2)
    assert kde_deconv(model, 0.9, 0.0) == pytest.approx(expected, rel=1e-13)
    assert not model.nonnegative


def test_deconvolution_mirror_symmetry(gaussian):
    error = LaplaceError(0.3)
    model = JointDensityModel.deconvolution(ContaminatedSample([-1.0, 1.0], [0.5, 0.5], error), gaussian, 0.5, 0.5)
    for qx in (0.2, 0.7, 1.3):
        assert kde_deconv(model, qx, 0.4) == pytest.approx(kde_deconv(model, -qx, 0.4), rel=1e-13)


def test_build_model_dispatches_by_variant(three_points):
    cfg = ModelConfig(h1=0.5, h2=0.5, variant="censored")
    with pytest.raises(VariantMismatchError):
        build_model(three_points, cfg)
    censored = build_model(CensoredSample([0, 1], [1.0, 2.0], [1, 0]), cfg)
    assert censored.variant == "censored"
    assert censored.config() == cfg
