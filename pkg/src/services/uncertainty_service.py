"""
Servicio de incertidumbre - Conjuntos de predicción y bandas de confianza bootstrap
alrededor de curvas modales.
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.core.domain import ConfidenceBand, Interval, ModalCurve, ModelConfig, PredictionBand, Sample
from src.core.errors import ConfigError, DataError, TooManyDroppedReplicatesError
from src.infrastructure.density_adapter import JointDensityModel, build_model
from src.infrastructure.executor import parallel_map, spawn_seeds
from src.services.metrics_service import hausdorff, trapezoid_weights
from src.services.mode_seeking_service import ModeSeekingService

logger = logging.getLogger(__name__)

# Máximo de réplicas bootstrap descartadas (fracción de B)
MAX_DROPPED_FRACTION = 0.10


def higher_quantile(values, level: float) -> float:
    """Menor estadístico de orden ≥ level·n (cuantil empírico conservador)"""
    values = np.sort(np.asarray(values, dtype=float))
    if values.size == 0:
        raise DataError("Cuantil de un conjunto vacío")
    k = int(np.ceil(level * values.size - 1e-9))
    k = min(max(k, 1), values.size)
    return float(values[k - 1])


def merge_intervals(centers: Sequence[float], radius: float) -> Tuple[Interval, ...]:
    """Unión de [c − r, c + r] como intervalos disjuntos ordenados"""
    merged: List[List[float]] = []
    for c in sorted(float(c) for c in centers):
        lo, hi = c - radius, c + radius
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return tuple((lo, hi) for lo, hi in merged)


def union_length(intervals: Sequence[Interval]) -> float:
    return float(sum(hi - lo for lo, hi in intervals))


def band_size(grid, intervals: Sequence[Sequence[Interval]]) -> float:
    """Σ (largo de la unión en x) × ancho de celda"""
    widths = trapezoid_weights(grid)
    return float(sum(w * union_length(iv) for w, iv in zip(widths, intervals)))


def residuals_to_curve(curve: ModalCurve, x, y) -> Tuple[np.ndarray, int]:
    """
    eᵥ = min_{m ∈ M̂(x̃ᵥ)} |Yᵥ − m| con x̃ᵥ el punto de grilla más cercano a Xᵥ.
    Si ese ModeSet está vacío se usa el punto no vacío más cercano (se cuenta como reubicado).
    """
    non_empty = np.array([i for i, ms in enumerate(curve.mode_sets) if not ms.is_empty])
    if non_empty.size == 0:
        raise DataError("La curva modal no tiene modos en ningún punto de la grilla")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nearest = curve.nearest_index(x)
    residuals = np.empty(x.size)
    relocated = 0
    for v, (i, yv) in enumerate(zip(nearest, y)):
        if curve.mode_sets[i].is_empty:
            relocated += 1
            i = non_empty[int(np.argmin(np.abs(curve.grid[non_empty] - curve.grid[i])))]
        residuals[v] = np.min(np.abs(np.asarray(curve.mode_sets[i].modes) - yv))
    return residuals, relocated


class UncertaintyService:
    """Servicio para bandas de predicción y de confianza"""

    def __init__(self, mode_service: ModeSeekingService = None, threads: int = None):
        self.mode_service = mode_service or ModeSeekingService(threads=threads)
        self.threads = threads

    def prediction_band(self, model: JointDensityModel, curve: ModalCurve, holdout: Sample,
                        level: float) -> PredictionBand:
        if not 0 < level <= 1:
            raise ConfigError("level debe estar en (0, 1]")
        if holdout is None or holdout.n == 0:
            raise DataError("El conjunto de validación está vacío")
        flags = []
        residuals, relocated = residuals_to_curve(curve, holdout.x, holdout.y)
        if relocated:
            flags.append(f"relocated_residuals:{relocated}")
            logger.warning(f"⚠️ {relocated} residuos calculados contra el punto no vacío más cercano")
        xmin, xmax = float(model.covariates.min()), float(model.covariates.max())
        outside = int(np.count_nonzero((holdout.x < xmin) | (holdout.x > xmax)))
        if outside:
            flags.append(f"extrapolated:{outside}")
        radius = higher_quantile(residuals, level)
        intervals = tuple(merge_intervals(ms.modes, radius) for ms in curve.mode_sets)
        size = band_size(curve.grid, intervals)
        logger.info(f"📊 Banda de predicción {level:.0%}: radio={radius:.4g}, tamaño={size:.4g}")
        residuals.setflags(write=False)
        return PredictionBand(level=float(level), radius=radius, grid=curve.grid, intervals=intervals,
                              size=size, residuals=residuals, flags=tuple(flags))

    def band_coverage(self, band: PredictionBand, curve: ModalCurve, sample: Sample) -> float:
        """Fracción de (Xᵢ, Yᵢ) cuyo residuo a la curva es ≤ radio"""
        residuals, _ = residuals_to_curve(curve, sample.x, sample.y)
        return float(np.mean(residuals <= band.radius))

    # ------------------------------------------------------------------
    # Banda de confianza bootstrap
    # ------------------------------------------------------------------

    @staticmethod
    def sup_deviation(boot: ModalCurve, original: ModalCurve, penalty: float) -> Optional[float]:
        """sup_x Hausdorff(M̂*(x), M̂(x)); None si la réplica no tiene modos en ninguna parte"""
        if len(boot.empty_points) == boot.grid.size:
            return None
        worst = 0.0
        for b, o in zip(boot.mode_sets, original.mode_sets):
            if b.is_empty and o.is_empty:
                continue
            d = penalty if (b.is_empty or o.is_empty) else hausdorff(b.modes, o.modes)
            worst = max(worst, d)
        return worst

    def bootstrap_confidence_band(self, data, model_cfg: ModelConfig, grid, B: int, level: float,
                                  seed: int,
                                  resample: Callable[[np.random.Generator, int], np.ndarray] = None
                                  ) -> ConfidenceBand:
        """
        Para b = 1..B: remuestrea n pares con reposición, reajusta la curva modal y
        calcula la desviación sup-Hausdorff; el radio es el cuantil `level` de las B desviaciones.
        """
        if B < 20:
            raise ConfigError("El bootstrap necesita B >= 20 réplicas")
        if not 0 < level < 1:
            raise ConfigError("level debe estar en (0, 1)")
        model = build_model(data, model_cfg)
        curve = self.mode_service.fit_multimodal(model, grid)
        lo, hi = model.response_span()
        penalty = (hi - lo) or 1.0
        inner = ModeSeekingService(self.mode_service.config, threads=1)
        draw = resample or (lambda rng, n: rng.integers(0, n, size=n))

        def replicate(seed_seq) -> Optional[float]:
            rng = np.random.default_rng(seed_seq)
            boot = data.take(draw(rng, data.n))
            try:
                boot_model = build_model(boot, model_cfg)
            except DataError:
                return None
            return self.sup_deviation(inner.fit_multimodal(boot_model, curve.grid), curve, penalty)

        results = parallel_map(replicate, spawn_seeds(seed, B), self.threads,
                               desc="Bootstrap", unit="réplica")
        deviations = np.array([r for r in results if r is not None])
        dropped = B - deviations.size
        flags = []
        if dropped:
            flags.append(f"dropped_replicates:{dropped}")
            logger.warning(f"⚠️ {dropped} réplicas sin modos descartadas")
        if dropped > MAX_DROPPED_FRACTION * B:
            raise TooManyDroppedReplicatesError(f"Se descartaron {dropped} de {B} réplicas (> 10%)")
        radius = higher_quantile(deviations, level)
        intervals = tuple(merge_intervals(ms.modes, radius) for ms in curve.mode_sets)
        deviations.setflags(write=False)
        return ConfidenceBand(level=float(level), radius=radius, curve=curve, intervals=intervals,
                              deviations=deviations, n_dropped=int(dropped), flags=tuple(flags))
