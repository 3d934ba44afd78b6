"""
Servicio de búsqueda de modos - Regresión modal uni-modal y multi-modal
Responsabilidad única: encontrar los modos locales condicionales de p̂(x, ·)

Meanshift parcial: se fija x y se actualiza sólo la respuesta,
    y⁽ᵗ⁺¹⁾ = Σᵢ Yᵢ wᵢ / Σᵢ wᵢ,   wᵢ = K₁((Xᵢ − x)/h₁)·K₂((Yᵢ − y⁽ᵗ⁾)/h₂)
"""

import logging
from typing import List, Sequence

import numpy as np
from scipy import optimize

from src.config import settings
from src.core.domain import MeanshiftConfig, ModalCurve, ModeSet, UnimodalCurve
from src.core.errors import DivergedInitializationError, UnsupportedCombinationError
from src.infrastructure.density_adapter import JointDensityModel
from src.infrastructure.executor import parallel_map

logger = logging.getLogger(__name__)

_NEWTON_MAX_ITER = 50


def _require_meanshift(model: JointDensityModel) -> None:
    if model.k2.family != "gaussian":
        raise UnsupportedCombinationError("El meanshift parcial requiere K₂ gaussiano")
    if not model.nonnegative:
        raise UnsupportedCombinationError(
            "Pesos de deconvolución pueden ser negativos: usa búsqueda por grilla"
        )


def partial_meanshift_step(model: JointDensityModel, x: float, y: float) -> float:
    """Un paso del meanshift parcial en la respuesta"""
    _require_meanshift(model)
    w = model.covariate_weights(x) * model.k2.eval((model.responses - y) / model.h2)
    den = w.sum()
    if not den > 0:
        raise DivergedInitializationError(
            f"Denominador cero en (x={x:.6g}, y={y:.6g}): el punto está lejos de los datos"
        )
    return float(w @ model.responses / den)


class ModeSeekingService:
    """Servicio para estimar la curva modal (multivaluada) y la curva uni-modal"""

    def __init__(self, config: MeanshiftConfig = None, threads: int = None):
        self.config = config or MeanshiftConfig(
            max_iter=settings.MAX_ITER_MEANSHIFT,
            init_count=settings.INIT_COUNT,
            grad_tol=settings.GRAD_TOL,
        )
        self.threads = threads

    # ------------------------------------------------------------------
    # Meanshift
    # ------------------------------------------------------------------

    def partial_meanshift_step(self, model: JointDensityModel, x: float, y: float) -> float:
        return partial_meanshift_step(model, x, y)

    def meanshift_trajectory(self, model: JointDensityModel, x: float, y0: float) -> np.ndarray:
        """Iterados y⁽⁰⁾, y⁽¹⁾, … hasta |Δy| < conv_tol o max_iter"""
        lo, hi = model.response_span()
        tol = self.config.resolved_conv_tol(hi - lo)
        path = [float(y0)]
        for _ in range(self.config.max_iter):
            y_next = partial_meanshift_step(model, x, path[-1])
            path.append(y_next)
            if abs(y_next - path[-2]) < tol:
                break
        return np.array(path)

    def _initial_points(self, model: JointDensityModel) -> np.ndarray:
        lo, hi = model.response_span()
        return np.linspace(lo - model.h2, hi + model.h2, self.config.init_count)

    def _meanshift_batch(self, model: JointDensityModel, x: float, starts: np.ndarray) -> np.ndarray:
        """Corre todos los inicios a la vez; NaN para los que no tienen peso"""
        a = model.covariate_weights(x)
        keep = a > 0
        a, resp = a[keep], model.responses[keep]
        lo, hi = model.response_span()
        tol = self.config.resolved_conv_tol(hi - lo)

        ys = starts.astype(float).copy()
        running = np.ones(ys.size, dtype=bool)
        for _ in range(self.config.max_iter):
            idx = np.flatnonzero(running)
            if idx.size == 0:
                break
            u = (resp[None, :] - ys[idx, None]) / model.h2
            w = a[None, :] * model.k2.eval(u)
            den = w.sum(axis=1)
            dead = ~(den > 0)
            new = np.where(dead, np.nan, (w @ resp) / np.where(dead, 1.0, den))
            step = np.abs(new - ys[idx])
            ys[idx] = new
            running[idx[dead | (step < tol)]] = False
        return ys

    # ------------------------------------------------------------------
    # Refinamiento y validación de candidatos
    # ------------------------------------------------------------------

    @staticmethod
    def normalized_gradient(model: JointDensityModel, x: float, y: float, peak: float) -> float:
        """|∂p̂/∂y|·h₂ / max p̂(x, ·): sin unidades, no depende de la escala de Y"""
        return abs(float(model.density_dy(x, y))) * model.h2 / peak

    def _newton_polish(self, model: JointDensityModel, x: float, y: float, peak: float) -> float:
        """Newton sobre ∂p̂/∂y = 0 con salvaguarda (sólo en zona cóncava, paso ≤ h₂/2)"""
        for _ in range(_NEWTON_MAX_ITER):
            if self.normalized_gradient(model, x, y, peak) < 1e-3 * self.config.grad_tol:
                break
            g = model.density_dy(x, y)
            H = model.density_dyy(x, y)
            if not H < 0:
                break
            step = float(np.clip(-g / H, -model.h2 / 2, model.h2 / 2))
            y_next = y + step
            current = model.density(x, y)
            if model.density(x, y_next) < current - 1e-13 * abs(current):
                break
            y = y_next
            if abs(step) < 1e-15 * max(model.h2, abs(y)):
                break
        return y

    def _cluster(self, model: JointDensityModel, x: float, points: Sequence[float]) -> List[float]:
        """Agrupa puntos a menos de merge_tol; representante = el de mayor densidad"""
        merge_tol = self.config.resolved_merge_tol(model.h2)
        pts = np.sort(np.asarray(points, dtype=float))
        if pts.size == 0:
            return []
        groups = np.split(pts, np.flatnonzero(np.diff(pts) > merge_tol) + 1)
        reps = []
        for group in groups:
            dens = np.atleast_1d(model.density(x, group))
            reps.append(float(group[int(np.argmax(dens))]))
        return reps

    def _validated_mode_set(self, model: JointDensityModel, x: float, candidates: Sequence[float],
                            flags: List[str]) -> ModeSet:
        lo, hi = model.response_span()
        lower, upper = lo - model.h2, hi + model.h2
        reps = self._cluster(model, x, candidates)
        peak = max((float(model.density(x, y)) for y in reps), default=0.0)
        survivors = []
        if peak > 0:
            polished = [self._newton_polish(model, x, y, peak) for y in reps]
            peak = max(peak, max(float(model.density(x, y)) for y in polished))
        else:
            polished = []
        for y in polished:
            dens = model.density(x, y)
            curv = model.density_dyy(x, y)
            grad = self.normalized_gradient(model, x, y, peak)
            if curv < 0 and grad < self.config.grad_tol and dens > 0 and lower <= y <= upper:
                survivors.append((y, dens, curv))
        # el pulido puede llevar dos representantes al mismo modo
        merge_tol = self.config.resolved_merge_tol(model.h2)
        merged = []
        for y, dens, curv in sorted(survivors):
            if merged and y - merged[-1][0] <= merge_tol:
                if dens > merged[-1][1]:
                    merged[-1] = (y, dens, curv)
                continue
            merged.append((y, dens, curv))
        if not merged:
            flags.append("empty")
            logger.warning(f"⚠️ Sin modos en x={x:.6g} ({', '.join(flags)})")
        return ModeSet(
            x=x,
            modes=tuple(m[0] for m in merged),
            densities=tuple(m[1] for m in merged),
            curvatures=tuple(m[2] for m in merged),
            flags=tuple(flags),
        )

    def _scan_candidates(self, model: JointDensityModel, x: float, step_fraction: float = 0.1) -> List[float]:
        """Máximos locales de p̂(x, ·) en una grilla densa, refinados con Brent acotado"""
        lo, hi = model.response_span()
        step = model.h2 * step_fraction
        count = max(200, int(np.ceil((hi - lo + 2 * model.h2) / step)) + 1)
        ys = np.linspace(lo - model.h2, hi + model.h2, count)
        f = np.asarray(model.density(x, ys))
        peaks = np.flatnonzero((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:])) + 1
        refined = []
        for i in peaks:
            res = optimize.minimize_scalar(
                lambda y: -model.density(x, y),
                bounds=(ys[i - 1], ys[i + 1]),
                method="bounded",
                options={"xatol": 1e-10},
            )
            refined.append(float(res.x) if -res.fun >= f[i] else float(ys[i]))
        return refined

    # ------------------------------------------------------------------
    # Operaciones públicas
    # ------------------------------------------------------------------

    def modes_at(self, model: JointDensityModel, x: float) -> ModeSet:
        x = float(x)
        flags: List[str] = []
        a = model.covariate_weights(x)
        if not np.any(a != 0):
            flags.append("flat_density")
            return self._validated_mode_set(model, x, [], flags)
        if model.k2.family != "gaussian":
            raise UnsupportedCombinationError("La regresión multi-modal requiere K₂ gaussiano")
        if model.nonnegative:
            converged = self._meanshift_batch(model, x, self._initial_points(model))
            diverged = int(np.isnan(converged).sum())
            if diverged:
                logger.debug(f"{diverged} inicios sin peso en x={x:.6g}")
            candidates = converged[~np.isnan(converged)]
        else:
            candidates = self._scan_candidates(model, x)
        return self._validated_mode_set(model, x, candidates, flags)

    def fit_multimodal(self, model: JointDensityModel, grid) -> ModalCurve:
        grid = np.asarray(grid, dtype=float)
        xmin, xmax = float(model.covariates.min()), float(model.covariates.max())
        if grid.size and (grid.min() < xmin or grid.max() > xmax):
            logger.warning("⚠️ La grilla sale del rango de la covariable")
        sets = parallel_map(lambda gx: self.modes_at(model, gx), list(grid), self.threads)
        curve = ModalCurve(grid=grid, mode_sets=tuple(sets), response_range=model.response_span())
        if curve.empty_points:
            logger.warning(f"⚠️ {len(curve.empty_points)} puntos de la grilla sin modos")
        return curve

    def _global_argmax(self, model: JointDensityModel, x: float):
        """Búsqueda densa + Brent acotado; para K₂ no gaussiano"""
        lo, hi = model.response_span()
        count = max(400, int(np.ceil((hi - lo + 2 * model.h2) / (model.h2 / 10))) + 1)
        ys = np.linspace(lo - model.h2, hi + model.h2, count)
        f = np.asarray(model.density(x, ys))
        if not np.any(f > 0):
            return np.nan, 0.0
        i = int(np.argmax(f))
        a, b = ys[max(i - 1, 0)], ys[min(i + 1, count - 1)]
        res = optimize.minimize_scalar(lambda y: -model.density(x, y), bounds=(a, b),
                                       method="bounded", options={"xatol": 1e-10})
        if -res.fun >= f[i]:
            return float(res.x), float(-res.fun)
        return float(ys[i]), float(f[i])

    def fit_unimodal(self, model: JointDensityModel, grid) -> UnimodalCurve:
        """m̂(x) = argmax_y p̂(x, y)"""
        grid = np.asarray(grid, dtype=float)
        if model.k2.family == "gaussian":
            curve = self.fit_multimodal(model, grid)
            values, dens = [], []
            for ms in curve.mode_sets:
                if ms.is_empty:
                    values.append(np.nan)
                    dens.append(0.0)
                else:
                    i = int(np.argmax(ms.densities))
                    values.append(ms.modes[i])
                    dens.append(ms.densities[i])
            flags = ("empty",) if curve.empty_points else ()
            return UnimodalCurve(grid=grid, values=values, densities=dens, flags=flags)

        results = parallel_map(lambda gx: self._global_argmax(model, float(gx)), list(grid), self.threads)
        values = [r[0] for r in results]
        dens = [r[1] for r in results]
        flags = ("empty",) if any(np.isnan(values)) else ()
        return UnimodalCurve(grid=grid, values=values, densities=dens, flags=flags)
