import numpy as np
import pytest

from src.adapters.kernel_adapter import KernelFactory, LaplaceError
from src.core.domain import ContaminatedSample, MeanshiftConfig, ModalCurve, Sample
from src.core.errors import DivergedInitializationError, UnsupportedCombinationError
from src.infrastructure.density_adapter import JointDensityModel, kde_dy, kde_dyy
from src.services.mode_seeking_service import ModeSeekingService, partial_meanshift_step


@pytest.fixture
def service():
    return ModeSeekingService()


def _dense_argmax(model, x, step):
    lo, hi = model.response_span()
    ys = np.arange(lo - model.h2, hi + model.h2 + step, step)
    return ys[int(np.argmax(model.density(x, ys)))]


# ----------------------------------------------------------------------
# Meanshift parcial
# ----------------------------------------------------------------------

def test_single_point_step_returns_response(gaussian):
    model = JointDensityModel.standard(Sample([0.4], [2.5]), gaussian, gaussian, 0.3, 0.3)
    assert partial_meanshift_step(model, 0.1, -3.0) == pytest.approx(2.5, abs=1e-15)


def test_symmetric_data_is_a_fixed_point(gaussian):
    model = JointDensityModel.standard(Sample([0.0, 0.0], [-1.0, 1.0]), gaussian, gaussian, 0.5, 0.5)
    assert partial_meanshift_step(model, 0.0, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_three_point_step_is_weighted_mean(gaussian, three_points):
    model = JointDensityModel.standard(three_points, gaussian, gaussian, 0.5, 0.5)
    w = gaussian.eval((three_points.x - 0.8) / 0.5) * gaussian.eval((three_points.y - 0.0) / 0.5)
    expected = np.sum(w * three_points.y) / np.sum(w)
    assert partial_meanshift_step(model, 0.8, 0.0) == pytest.approx(expected, rel=1e-13)


def test_zero_denominator_raises(three_points):
    box = KernelFactory.create_kernel("box")
    model = JointDensityModel.standard(three_points, box, KernelFactory.create_kernel("gaussian"), 0.2, 0.5)
    with pytest.raises(DivergedInitializationError):
        partial_meanshift_step(model, 50.0, 0.0)


def test_meanshift_requires_gaussian_k2(three_points, gaussian):
    model = JointDensityModel.standard(three_points, gaussian, KernelFactory.create_kernel("epanechnikov"), 0.5, 0.5)
    with pytest.raises(UnsupportedCombinationError):
        partial_meanshift_step(model, 0.5, 0.0)


def test_meanshift_ascent_property(fig1_model, service):
    rng = np.random.default_rng(5)
    lo, hi = fig1_model.response_span()
    for _ in range(100):
        x = rng.uniform(0.05, 0.95)
        path = service.meanshift_trajectory(fig1_model, x, rng.uniform(lo, hi))
        dens = np.asarray(fig1_model.density(x, path))
        assert np.all(np.diff(dens) >= -1e-12)


# ----------------------------------------------------------------------
# Curva multi-modal
# ----------------------------------------------------------------------

def test_single_component_has_one_mode_per_point(linear_sample, gaussian, service):
    model = JointDensityModel.standard(linear_sample, gaussian, gaussian, 0.1, 0.1)
    grid = np.linspace(0.05, 0.95, 12)
    curve = service.fit_multimodal(model, grid)
    for gx, ms in zip(grid, curve.mode_sets):
        assert len(ms) == 1
        assert abs(ms.modes[0] - gx) < 3 * model.h2
        assert ms.modes[0] == pytest.approx(_dense_argmax(model, gx, model.h2 / 100), abs=model.h2 / 50)


def test_fig1_fixture_has_three_branches(fig1_model, service):
    grid = np.linspace(0.1, 0.75, 10)
    curve = service.fit_multimodal(fig1_model, grid)
    assert all(len(ms) == 3 for ms in curve.mode_sets)
    for gx, ms in zip(grid, curve.mode_sets):
        truth = (gx - 2.0, np.sin(4 * gx), gx + 2.0)
        assert np.max(np.abs(np.array(ms.modes) - truth)) < 0.3


def test_modes_are_fixed_points(fig1_model, service):
    grid = np.linspace(0.02, 0.98, 30)
    curve = service.fit_multimodal(fig1_model, grid)
    lo, hi = fig1_model.response_span()
    for ms in curve.mode_sets:
        assert not ms.is_empty
        for m in ms.modes:
            assert abs(kde_dy(fig1_model, ms.x, m)) * fig1_model.h2 / max(ms.densities) < service.config.grad_tol
            assert kde_dyy(fig1_model, ms.x, m) < 0
            assert lo - fig1_model.h2 <= m <= hi + fig1_model.h2
        assert np.all(np.diff(ms.modes) > service.config.resolved_merge_tol(fig1_model.h2))


def test_single_observation_gives_its_response(gaussian, service):
    model = JointDensityModel.standard(Sample([0.5], [1.25]), gaussian, gaussian, 0.3, 0.3)
    curve = service.fit_multimodal(model, [0.4, 0.5, 0.6])
    for ms in curve.mode_sets:
        assert ms.modes == pytest.approx((1.25,), abs=1e-12)


def test_flat_density_records_empty_mode_set(three_points, gaussian, service):
    box = KernelFactory.create_kernel("box")
    model = JointDensityModel.standard(three_points, box, gaussian, 0.2, 0.5)
    ms = service.modes_at(model, 0.5)
    assert ms.is_empty
    assert "flat_density" in ms.flags
    assert "empty" in ms.flags


def test_threads_do_not_change_the_curve(fig1_model):
    grid = np.linspace(0.1, 0.9, 9)
    one = ModeSeekingService(threads=1).fit_multimodal(fig1_model, grid)
    four = ModeSeekingService(threads=4).fit_multimodal(fig1_model, grid)
    assert [ms.modes for ms in one.mode_sets] == [ms.modes for ms in four.mode_sets]
    assert [ms.densities for ms in one.mode_sets] == [ms.densities for ms in four.mode_sets]


def test_deconvolution_model_uses_grid_scan(linear_sample, gaussian, service):
    contaminated = ContaminatedSample(linear_sample.x, linear_sample.y, LaplaceError(0.03))
    model = JointDensityModel.deconvolution(contaminated, gaussian, 0.15, 0.1)
    grid = np.linspace(0.2, 0.8, 5)
    curve = service.fit_multimodal(model, grid)
    for gx, ms in zip(grid, curve.mode_sets):
        assert len(ms) >= 1
        highest = ms.highest()
        assert abs(highest - gx) < 3 * model.h2
        assert service.normalized_gradient(model, gx, highest, max(ms.densities)) < service.config.grad_tol


def test_modes_do_not_depend_on_response_scale(linear_sample, gaussian, service):
    scale = 1e-5
    shrunk = Sample(linear_sample.x, scale * linear_sample.y)
    grid = np.linspace(0.2, 0.8, 4)
    base = service.fit_multimodal(JointDensityModel.standard(linear_sample, gaussian, gaussian, 0.1, 0.1), grid)
    small = service.fit_multimodal(JointDensityModel.standard(shrunk, gaussian, gaussian, 0.1, 0.1 * scale), grid)
    for a, b in zip(base.mode_sets, small.mode_sets):
        # p̂ del orden de 1e6: la pendiente cruda queda lejos de 1e-8 aun en el modo
        assert len(b) == len(a) == 1
        np.testing.assert_allclose(np.array(b.modes) / scale, a.modes, atol=1e-6)


def test_tighter_convergence_config(linear_sample, gaussian):
    model = JointDensityModel.standard(linear_sample, gaussian, gaussian, 0.1, 0.1)
    svc = ModeSeekingService(MeanshiftConfig(conv_tol=1e-12, init_count=10))
    ms = svc.modes_at(model, 0.5)
    assert len(ms) == 1


# ----------------------------------------------------------------------
# Curva uni-modal
# ----------------------------------------------------------------------

def test_unimodal_symmetric_fixture(gaussian, service):
    x = np.repeat(np.linspace(0, 1, 11), 2)
    offsets = np.tile([0.05, -0.05], 11)
    model = JointDensityModel.standard(Sample(x, 1.0 + offsets), gaussian, gaussian, 0.2, 0.3)
    curve = service.fit_unimodal(model, np.linspace(0.1, 0.9, 5))
    np.testing.assert_allclose(curve.values, 1.0, atol=1e-9)


def test_unimodal_is_a_member_of_the_mode_set(fig1_model, service):
    grid = np.linspace(0.1, 0.9, 9)
    uni = service.fit_unimodal(fig1_model, grid)
    multi = service.fit_multimodal(fig1_model, grid)
    for value, ms in zip(uni.values, multi.mode_sets):
        assert value in ms.modes
        assert value == ms.highest()


def test_unimodal_matches_dense_grid_argmax(fig1_model, service):
    grid = np.linspace(0.1, 0.9, 5)
    uni = service.fit_unimodal(fig1_model, grid)
    for gx, value in zip(grid, uni.values):
        assert value == pytest.approx(_dense_argmax(fig1_model, gx, fig1_model.h2 / 100),
                                      abs=fig1_model.h2 / 50)


def test_unimodal_box_k2_falls_back_to_scan(linear_sample, gaussian, service):
    box = KernelFactory.create_kernel("box")
    model = JointDensityModel.standard(linear_sample, gaussian, box, 0.1, 0.15)
    grid = np.linspace(0.2, 0.8, 4)
    uni = service.fit_unimodal(model, grid)
    for gx, value, dens in zip(grid, uni.values, uni.densities):
        lo, hi = model.response_span()
        ys = np.linspace(lo - model.h2, hi + model.h2, 4000)
        assert dens >= 0.95 * np.max(model.density(gx, ys))
        assert model.density(gx, value) == pytest.approx(dens, abs=1e-12)


def test_from_unimodal_builds_single_valued_curve(fig1_model, service):
    grid = np.linspace(0.2, 0.8, 4)
    curve = ModalCurve.from_unimodal(service.fit_unimodal(fig1_model, grid))
    assert all(len(ms) == 1 for ms in curve.mode_sets)
