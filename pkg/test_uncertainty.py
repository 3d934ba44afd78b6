import numpy as np
import pytest

from src.adapters.kernel_adapter import KernelFactory
from src.core.domain import ModalCurve, ModelConfig, ModeSet, Sample
from src.core.errors import ConfigError, DataError, TooManyDroppedReplicatesError
from src.infrastructure.density_adapter import JointDensityModel
from src.services import datagen_service
from src.services.mode_seeking_service import ModeSeekingService
from src.services.uncertainty_service import (
    UncertaintyService,
    band_size,
    higher_quantile,
    merge_intervals,
    residuals_to_curve,
)


@pytest.fixture(scope="module")
def service():
    return UncertaintyService(ModeSeekingService(threads=1))


def _curve(grid, modes_per_point):
    sets = []
    for gx, modes in zip(grid, modes_per_point):
        sets.append(ModeSet(x=gx, modes=tuple(modes), densities=(1.0,) * len(modes),
                            curvatures=(-1.0,) * len(modes), flags=() if modes else ("empty",)))
    return ModalCurve(grid=np.asarray(grid, dtype=float), mode_sets=tuple(sets))


# ----------------------------------------------------------------------
# Piezas
# ----------------------------------------------------------------------

def test_higher_quantile():
    values = np.arange(10, 0, -1, dtype=float)
    assert higher_quantile(values, 0.9) == 9.0
    assert higher_quantile(values, 0.95) == 10.0
    assert higher_quantile(values, 1.0) == 10.0
    assert higher_quantile(values, 0.1) == 1.0
    assert higher_quantile(values, 0.01) == 1.0
    with pytest.raises(DataError):
        higher_quantile([], 0.5)


def test_merge_intervals():
    assert merge_intervals([3.0, 0.0, 0.5], 0.3) == ((-0.3, 0.8), (2.7, 3.3))
    assert merge_intervals([1.0], 0.0) == ((1.0, 1.0),)
    assert merge_intervals([], 1.0) == ()


def test_band_size_is_area():
    assert band_size([0.0, 1.0], [((0.0, 1.0),), ((0.0, 1.0),)]) == pytest.approx(1.0)
    assert band_size([0.0, 1.0, 2.0], [((0.0, 2.0),), ((0.0, 1.0), (3.0, 4.0)), ()]) == pytest.approx(3.0)


def test_residuals_relocate_around_empty_points():
    curve = _curve([0.0, 1.0, 2.0], [(0.0,), (), (5.0,)])
    residuals, relocated = residuals_to_curve(curve, [0.9, 2.0], [1.0, 4.0])
    assert relocated == 1
    np.testing.assert_allclose(residuals, [1.0, 1.0])
    with pytest.raises(DataError):
        residuals_to_curve(_curve([0.0], [()]), [0.0], [0.0])


# ----------------------------------------------------------------------
# Banda de predicción
# ----------------------------------------------------------------------

def test_points_on_the_modes_give_zero_radius(service, gaussian):
    grid = np.array([0.0, 0.5, 1.0])
    curve = _curve(grid, [(0.0, 1.0), (0.5,), (1.0, 2.0)])
    holdout = Sample([0.0, 0.0, 0.5, 1.0], [0.0, 1.0, 0.5, 2.0])
    model = JointDensityModel.standard(holdout, gaussian, gaussian, 0.2, 0.2)
    band = service.prediction_band(model, curve, holdout, 0.9)
    assert band.radius == 0.0
    assert band.size == 0.0
    assert service.band_coverage(band, curve, holdout) == 1.0


def test_full_level_uses_the_largest_residual(service, gaussian):
    grid = np.array([0.0, 1.0])
    curve = _curve(grid, [(0.0,), (0.0,)])
    holdout = Sample([0.0, 0.2, 0.8, 1.0], [0.1, -0.4, 0.3, 0.2])
    model = JointDensityModel.standard(holdout, gaussian, gaussian, 0.2, 0.2)
    band = service.prediction_band(model, curve, holdout, 1.0)
    assert band.radius == pytest.approx(0.4)
    assert band.intervals[0] == ((-0.4, 0.4),)
    with pytest.raises(ConfigError):
        service.prediction_band(model, curve, holdout, 0.0)


def test_multimodal_band_is_much_smaller(service, fig1_model, fig1_spec):
    holdout = datagen_service.generate(fig1_spec, 500, seed=2)
    grid = np.linspace(0.05, 0.95, 40)
    modes = ModeSeekingService(threads=1)
    multi = modes.fit_multimodal(fig1_model, grid)
    uni = ModalCurve.from_unimodal(modes.fit_unimodal(fig1_model, grid))
    multi_band = service.prediction_band(fig1_model, multi, holdout, 0.9)
    uni_band = service.prediction_band(fig1_model, uni, holdout, 0.9)
    assert multi_band.size < 0.6 * uni_band.size
    assert multi_band.radius < uni_band.radius


def test_prediction_band_coverage_on_fresh_data(service, fig1_model, fig1_spec):
    holdout = datagen_service.generate(fig1_spec, 500, seed=30)
    fresh = datagen_service.generate(fig1_spec, 2000, seed=31)
    grid = np.linspace(0.0, 1.0, 60)
    curve = ModeSeekingService(threads=1).fit_multimodal(fig1_model, grid)
    band = service.prediction_band(fig1_model, curve, holdout, 0.9)
    assert service.band_coverage(band, curve, fresh) == pytest.approx(0.9, abs=0.05)


# ----------------------------------------------------------------------
# Banda de confianza bootstrap
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_linear():
    rng = np.random.default_rng(12)
    x = rng.uniform(0, 1, 100)
    return Sample(x, x + 0.05 * rng.standard_normal(100))


def test_identity_resample_gives_zero_radius(service, small_linear):
    cfg = ModelConfig(h1=0.15, h2=0.1)
    band = service.bootstrap_confidence_band(small_linear, cfg, np.linspace(0.2, 0.8, 4), B=20, level=0.9,
                                             seed=0, resample=lambda rng, n: np.arange(n))
    assert band.radius == 0.0
    assert band.n_dropped == 0
    assert band.deviations.size == 20


def test_radius_grows_with_level(service, small_linear):
    cfg = ModelConfig(h1=0.15, h2=0.1)
    grid = np.linspace(0.2, 0.8, 4)
    low = service.bootstrap_confidence_band(small_linear, cfg, grid, B=20, level=0.5, seed=3)
    high = service.bootstrap_confidence_band(small_linear, cfg, grid, B=20, level=0.95, seed=3)
    np.testing.assert_array_equal(low.deviations, high.deviations)
    assert 0 < low.radius <= high.radius
    for i, ms in enumerate(high.curve.mode_sets):
        for m in ms.modes:
            assert high.contains(i, m)


def test_bootstrap_argument_checks(service, small_linear):
    cfg = ModelConfig(h1=0.15, h2=0.1)
    with pytest.raises(ConfigError):
        service.bootstrap_confidence_band(small_linear, cfg, [0.5], B=19, level=0.9, seed=0)
    with pytest.raises(ConfigError):
        service.bootstrap_confidence_band(small_linear, cfg, [0.5], B=20, level=1.0, seed=0)


def test_too_many_empty_replicates_raise(service, small_linear):
    cfg = ModelConfig(h1=0.05, h2=0.1, kernel_x="box")
    leftmost = int(np.argmin(small_linear.x))
    with pytest.raises(TooManyDroppedReplicatesError):
        service.bootstrap_confidence_band(small_linear, cfg, [0.3, 0.5, 0.7], B=20, level=0.9, seed=0,
                                          resample=lambda rng, n: np.full(n, leftmost))


def test_bootstrap_band_covers_the_true_curve():
    sample = datagen_service.generate(datagen_service.linear_spec(), 300, seed=17)
    grid = np.linspace(0.15, 0.85, 10)
    band = UncertaintyService(ModeSeekingService(threads=4), threads=4).bootstrap_confidence_band(
        sample, ModelConfig(h1=0.1, h2=0.15), grid, B=100, level=0.9, seed=5)
    assert band.n_dropped == 0
    truth = 1.0 + 2.0 * grid
    covered = [band.contains(i, m) for i, m in enumerate(truth)]
    assert np.mean(covered) >= 0.8


def test_sup_deviation():
    grid = [0.0, 1.0]
    original = _curve(grid, [(0.0,), (1.0,)])
    assert UncertaintyService.sup_deviation(_curve(grid, [(0.5,), (1.0,)]), original, 9.0) == 0.5
    assert UncertaintyService.sup_deviation(_curve(grid, [(0.0,), ()]), original, 9.0) == 9.0
    assert UncertaintyService.sup_deviation(_curve(grid, [(), ()]), original, 9.0) is None
