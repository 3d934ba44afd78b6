"""
Servicio de selección de ancho de banda (h₁ para la covariable, h₂ para la respuesta):
regla de Silverman, CV de la densidad condicional, CV-SIMEX para error de medición,
CV por tamaño de banda de predicción y CV modal por bootstrap.
"""

import logging
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy import integrate
from sklearn.model_selection import KFold

from src.adapters.kernel_adapter import KernelFactory
from src.config import settings
from src.core.domain import BandwidthChoice, CensoredSample, ContaminatedSample, CvConfig, ModalCurve, Sample
from src.core.errors import ConfigError, DataError
from src.infrastructure.density_adapter import JointDensityModel, kaplan_meier
from src.infrastructure.executor import parallel_map, spawn_seeds
from src.services.metrics_service import hausdorff, trapezoid_weights
from src.services.mode_seeking_service import ModeSeekingService
from src.services.uncertainty_service import UncertaintyService

logger = logging.getLogger(__name__)

DEFAULT_FACTORS = tuple(np.geomspace(0.1, 3.0, settings.SIMEX_CANDIDATES))


def silverman_from_spread(spread: float, n: int) -> float:
    return 1.06 * spread * n ** (-0.2)


def silverman_rule(values) -> float:
    """h = 1.06·min(sd, IQR/1.34)·n^(−1/5); si IQR = 0 se usa sólo sd"""
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        raise DataError("La regla de Silverman necesita al menos 2 valores")
    sd = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if not spread > 0:
        raise DataError("Los valores no tienen dispersión: la regla de Silverman no aplica")
    return silverman_from_spread(spread, values.size)


def default_cv_config(x, y, factors=DEFAULT_FACTORS, pairing: str = "product") -> CvConfig:
    """Candidatos = múltiplos de la regla de Silverman de cada coordenada"""
    s1, s2 = silverman_rule(x), silverman_rule(y)
    return CvConfig(h1_grid=tuple(s1 * f for f in factors), h2_grid=tuple(s2 * f for f in factors),
                    pairing=pairing)


def _omega(eval_x: np.ndarray, cfg: CvConfig, reference: np.ndarray = None) -> np.ndarray:
    """ω(x) = 1 en el rango de interés; por defecto el 90% interior del rango observado (de `reference`)"""
    if cfg.weight_range is not None:
        lo, hi = cfg.weight_range
    else:
        ref = eval_x if reference is None else reference
        span = ref.max() - ref.min()
        lo, hi = ref.min() + 0.05 * span, ref.max() - 0.05 * span
    return ((eval_x >= lo) & (eval_x <= hi)).astype(float)


def censored_loo_weights(sample: CensoredSample) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pesos de Kaplan-Meier para el CV censurado.

    Fila i: δⱼ/Ŝ₋ᵢ(Tⱼ⁻) con Ŝ₋ᵢ reajustado sin la observación i (diagonal en 0).
    Segundo valor: δᵢ/Ŝₙ(Tᵢ⁻) de la muestra completa, para el término en la observación.
    """
    n = sample.n
    loo = np.zeros((n, n))
    for i in range(n):
        keep = np.arange(n) != i
        fold = sample.take(np.flatnonzero(keep))
        observed = fold.delta == 1.0
        if not observed.any():
            continue
        row = np.zeros(n - 1)
        row[observed] = 1.0 / kaplan_meier(fold).left_limit(fold.t[observed])
        loo[i, keep] = row
    point = np.zeros(n)
    observed = sample.delta == 1.0
    point[observed] = 1.0 / kaplan_meier(sample).left_limit(sample.t[observed])
    return loo, point


def _y_grid(y: np.ndarray, h2: float, cfg: CvConfig) -> np.ndarray:
    if cfg.y_grid is not None:
        return np.asarray(cfg.y_grid, dtype=float)
    return np.linspace(y.min() - 4 * h2, y.max() + 4 * h2, cfg.y_grid_size)


def loo_cv_criterion(eval_x: np.ndarray, data_x: np.ndarray, y: np.ndarray,
                     kernel_x: Callable[[np.ndarray], np.ndarray], h1: float, h2: float,
                     cfg: CvConfig, loo_weights: np.ndarray = None,
                     point_weights: np.ndarray = None) -> Tuple[float, int]:
    """
    CV(h₁, h₂) = (1/n) Σᵢ ω(xᵢ) ∫ p̂₋ᵢ²(y|xᵢ) dy − (2/n) Σᵢ ω(xᵢ) p̂₋ᵢ(Yᵢ|xᵢ)

    xᵢ = eval_x[i]; p̂₋ᵢ se construye con data_x sin la observación i.
    Con eval_x = data_x es el CV clásico; CV-SIMEX usa covariables más contaminadas en data_x.
    Con datos censurados `loo_weights[i, j]` pondera el núcleo en y de la observación j
    (la marginal en x no se pondera) y `point_weights[i]` el término en la observación.
    Devuelve (criterio, términos omitidos por marginal p̂₋ᵢ(xᵢ) ≤ 0).
    """
    k2 = KernelFactory.create_kernel("gaussian")
    n = eval_x.size
    A = kernel_x((data_x[None, :] - eval_x[:, None]) / h1)
    np.fill_diagonal(A, 0.0)
    marginal = A.sum(axis=1)
    valid = marginal > 0
    skipped = int(n - valid.sum())
    W = np.zeros_like(A)
    W[valid] = A[valid] / marginal[valid, None]
    if loo_weights is not None:
        W = W * loo_weights

    ys = _y_grid(y, h2, cfg)
    M = k2.eval((y[:, None] - ys[None, :]) / h2) / h2
    P = W @ M
    integral = integrate.trapezoid(P * P, ys, axis=1)
    at_obs = np.sum(W * (k2.eval((y[None, :] - y[:, None]) / h2) / h2), axis=1)
    if point_weights is not None:
        at_obs = at_obs * point_weights

    omega = _omega(eval_x, cfg) * valid
    value = float(np.sum(omega * integral) / n - 2.0 * np.sum(omega * at_obs) / n)
    return value, skipped


class BandwidthSelectionService:
    """Servicio para elegir (h₁, h₂)"""

    def __init__(self, mode_service: ModeSeekingService = None, threads: int = None):
        self.mode_service = mode_service or ModeSeekingService(threads=threads)
        self.threads = threads
        # ajustes anidados dentro de un candidato corren en un solo hilo
        self._inner_modes = ModeSeekingService(self.mode_service.config, threads=1)
        self._inner_uncertainty = UncertaintyService(self._inner_modes, threads=1)

    @staticmethod
    def silverman_rule(values) -> float:
        return silverman_rule(values)

    @staticmethod
    def _choose(candidates, criterion, method: str, details: Dict = None, flags=()) -> BandwidthChoice:
        crit = np.asarray(criterion, dtype=float)
        if not np.any(np.isfinite(crit)):
            raise DataError(f"{method}: ningún candidato produjo un criterio finito")
        best = int(np.nanargmin(np.where(np.isfinite(crit), crit, np.nan)))
        h1, h2 = candidates[best]
        logger.info(f"✅ {method}: h₁={h1:.4g}, h₂={h2:.4g} (criterio {crit[best]:.6g})")
        return BandwidthChoice(h1=float(h1), h2=float(h2), method=method,
                               candidates=tuple((float(a), float(b)) for a, b in candidates),
                               criterion=tuple(float(c) for c in crit),
                               details=dict(details or {}, best_index=best), flags=tuple(flags))

    # ------------------------------------------------------------------
    # CV de la densidad condicional
    # ------------------------------------------------------------------

    def cv_conditional_density(self, data: Union[Sample, CensoredSample], cfg: CvConfig = None) -> BandwidthChoice:
        """Con muestras censuradas la respuesta es T y los pesos Kaplan-Meier se reajustan por fold"""
        if isinstance(data, CensoredSample):
            if data.n < 3:
                raise DataError("Se necesitan al menos 3 observaciones")
            y = data.t
            loo, point = censored_loo_weights(data)
        else:
            data.require_size(3)
            y, loo, point = data.y, None, None
        cfg = cfg or default_cv_config(data.x, y)
        k1 = KernelFactory.create_kernel("gaussian")
        candidates = cfg.candidates()
        results = parallel_map(
            lambda c: loo_cv_criterion(data.x, data.x, y, k1.eval, c[0], c[1], cfg, loo, point),
            candidates, self.threads, desc="CV densidad condicional", unit="cand",
        )
        skipped = sum(r[1] for r in results)
        flags = (f"skipped_terms:{skipped}",) if skipped else ()
        return self._choose(candidates, [r[0] for r in results], "cv", {"skipped_terms": skipped}, flags)

    # ------------------------------------------------------------------
    # CV-SIMEX
    # ------------------------------------------------------------------

    def cv_simex(self, contaminated: ContaminatedSample, cfg: CvConfig = None, replicates: int = None,
                 seed: int = None) -> BandwidthChoice:
        """
        h₂ por Silverman; h₁* y h₁** minimizan los criterios promediados
        CV*(h₁) (p̂* con W* evaluado en W) y CV**(h₁) (p̂** con W** evaluado en W*);
        h̃₁ = (h₁*)²/h₁**.
        """
        contaminated_n = contaminated.n
        if contaminated_n < 3:
            raise DataError("CV-SIMEX necesita al menos 3 observaciones")
        replicates = settings.SIMEX_REPLICATES if replicates is None else int(replicates)
        if replicates < 1:
            raise ConfigError("replicates debe ser >= 1")
        seed = settings.DEFAULT_SEED if seed is None else seed
        w, y, error = contaminated.w, contaminated.y, contaminated.error
        h2 = silverman_rule(y)
        if cfg is None:
            s1 = silverman_rule(w)
            cfg = CvConfig(h1_grid=tuple(s1 * f for f in DEFAULT_FACTORS), h2_grid=(h2,))
        h1_grid = np.asarray(cfg.h1_grid)

        def replicate(seed_seq):
            rng = np.random.default_rng(seed_seq)
            w_star = w + error.sample(rng, contaminated_n)
            w_star2 = w_star + error.sample(rng, contaminated_n)
            star, star2 = [], []
            for h1 in h1_grid:
                k1 = KernelFactory.create_deconvolution(error, h1)
                star.append(loo_cv_criterion(w, w_star, y, k1.eval, h1, h2, cfg)[0])
                star2.append(loo_cv_criterion(w_star, w_star2, y, k1.eval, h1, h2, cfg)[0])
            return star, star2

        runs = parallel_map(replicate, spawn_seeds(seed, replicates), self.threads,
                            desc="CV-SIMEX", unit="réplica")
        cv_star = np.mean([r[0] for r in runs], axis=0)
        cv_star2 = np.mean([r[1] for r in runs], axis=0)
        i_star, i_star2 = int(np.argmin(cv_star)), int(np.argmin(cv_star2))
        h1_star, h1_star2 = float(h1_grid[i_star]), float(h1_grid[i_star2])
        h1_tilde = h1_star ** 2 / h1_star2

        flags = []
        last = h1_grid.size - 1
        if h1_grid.size > 1 and (i_star in (0, last) or i_star2 in (0, last)):
            flags.append("boundary_minimizer")
            logger.warning("⚠️ CV-SIMEX: el mínimo está en el borde de la grilla (grilla muy angosta)")
        logger.info(f"✅ CV-SIMEX: h₁*={h1_star:.4g}, h₁**={h1_star2:.4g} → h̃₁={h1_tilde:.4g}")
        return BandwidthChoice(
            h1=h1_tilde, h2=h2, method="cv_simex",
            candidates=tuple((float(h), h2) for h in h1_grid),
            criterion=tuple(float(c) for c in cv_star),
            details={
                "cv_star": [float(c) for c in cv_star],
                "cv_star_star": [float(c) for c in cv_star2],
                "h1_star": h1_star,
                "h1_star_star": h1_star2,
                "replicates": replicates,
            },
            flags=tuple(flags),
        )

    # ------------------------------------------------------------------
    # Bandas de predicción
    # ------------------------------------------------------------------

    @staticmethod
    def _default_grid(x: np.ndarray, count: int = 40) -> np.ndarray:
        span = x.max() - x.min()
        return np.linspace(x.min() + 0.02 * span, x.max() - 0.02 * span, count)

    def band_size_for(self, train: Sample, validation: Sample, h1: float, h2: float, grid,
                      level: float) -> float:
        k = KernelFactory.create_kernel("gaussian")
        model = JointDensityModel.standard(train, k, k, h1, h2)
        curve = self._inner_modes.fit_multimodal(model, grid)
        try:
            return self._inner_uncertainty.prediction_band(model, curve, validation, level).size
        except DataError:
            return np.inf

    def prediction_band_cv(self, data: Sample, cfg: CvConfig = None, level: float = 0.9, folds: int = 5,
                           seed: int = None, grid=None) -> BandwidthChoice:
        """Elige el candidato con la banda de predicción (nivel `level`) de menor tamaño promedio"""
        if not 0 < level < 1:
            raise ConfigError("level debe estar en (0, 1)")
        if folds < 2:
            raise ConfigError("Se necesitan al menos 2 folds")
        if data.n - int(np.ceil(data.n / folds)) < 10:
            raise DataError("Cada fold de entrenamiento necesita al menos 10 observaciones")
        seed = settings.DEFAULT_SEED if seed is None else seed
        cfg = cfg or default_cv_config(data.x, data.y, factors=np.geomspace(0.02, 5.0, 10), pairing="zip")
        grid = self._default_grid(data.x) if grid is None else np.asarray(grid, dtype=float)
        splits = list(KFold(n_splits=folds, shuffle=True, random_state=seed).split(data.x))
        candidates = cfg.candidates()

        def evaluate(candidate) -> float:
            sizes = [self.band_size_for(data.take(tr), data.take(va), candidate[0], candidate[1], grid, level)
                     for tr, va in splits]
            return float(np.mean(sizes))

        sizes = parallel_map(evaluate, candidates, self.threads, desc="CV banda de predicción", unit="cand")
        flags = ("infinite_sizes",) if not all(np.isfinite(sizes)) else ()
        return self._choose(candidates, sizes, "predband", {"level": level, "folds": folds}, flags)

    # ------------------------------------------------------------------
    # CV modal (ISE_M por bootstrap)
    # ------------------------------------------------------------------

    def modal_ise(self, boot: ModalCurve, original: ModalCurve, penalty: float, x_weights=None) -> float:
        """
        Σ_g w_g·d²(M̂*(x_g), M̂(x_g)) con w_g = peso trapezoidal·`x_weights` (por defecto 1).
        Un conjunto vacío frente a uno no vacío cuenta `penalty`.
        """
        weights = trapezoid_weights(original.grid)
        if x_weights is not None:
            weights = weights * np.asarray(x_weights, dtype=float)
        total = 0.0
        for w, b, o in zip(weights, boot.mode_sets, original.mode_sets):
            if w == 0 or (b.is_empty and o.is_empty):
                continue
            d = penalty if (b.is_empty or o.is_empty) else hausdorff(b.modes, o.modes)
            total += w * d * d
        return total

    def modal_cv_bootstrap(self, data: Sample, cfg: CvConfig = None, B: int = None, seed: int = None,
                           grid=None) -> BandwidthChoice:
        """Minimiza el promedio bootstrap de ∫ Hausdorff²(M̂*(x), M̂(x)) dx"""
        data.require_size(3)
        B = settings.MODAL_CV_BOOTSTRAP if B is None else int(B)
        if B < 1:
            raise ConfigError("B debe ser >= 1")
        seed = settings.DEFAULT_SEED if seed is None else seed
        cfg = cfg or default_cv_config(data.x, data.y, factors=np.geomspace(0.1, 3.0, 8), pairing="zip")
        grid = self._default_grid(data.x) if grid is None else np.asarray(grid, dtype=float)
        penalty = float(np.ptp(data.y)) or 1.0
        omega = _omega(grid, cfg, reference=data.x)
        resamples = [np.random.default_rng(s).integers(0, data.n, size=data.n) for s in spawn_seeds(seed, B)]
        k = KernelFactory.create_kernel("gaussian")

        def evaluate(candidate) -> float:
            h1, h2 = candidate
            model = JointDensityModel.standard(data, k, k, h1, h2)
            original = self._inner_modes.fit_multimodal(model, grid)
            # w(x) = p̂(x)·ω(x)
            x_weights = np.array([model.marginal_x(g) for g in grid]) * omega
            ise = [self.modal_ise(
                self._inner_modes.fit_multimodal(JointDensityModel.standard(data.take(idx), k, k, h1, h2), grid),
                original, penalty, x_weights) for idx in resamples]
            return float(np.mean(ise))

        candidates = cfg.candidates()
        crit = parallel_map(evaluate, candidates, self.threads, desc="CV modal bootstrap", unit="cand")
        return self._choose(candidates, crit, "modalcv", {"bootstrap": B})
