"""
Métricas de error para curvas modales multivaluadas:
distancia de Hausdorff, error puntual Δₙ(x), MISE y error uniforme.
"""

import logging

import numpy as np
from scipy.spatial.distance import cdist

from src.core.domain import ErrorReport, ModalCurve
from src.core.errors import EmptySetError, GridMismatchError

logger = logging.getLogger(__name__)


def hausdorff(a, b) -> float:
    """max( max_a min_b |a − b|, max_b min_a |a − b| )"""
    a = np.asarray(a, dtype=float).reshape(-1, 1)
    b = np.asarray(b, dtype=float).reshape(-1, 1)
    if a.size == 0 or b.size == 0:
        raise EmptySetError("Hausdorff no está definida para conjuntos vacíos")
    distance_matrix = cdist(a, b)
    return float(max(distance_matrix.min(axis=1).max(), distance_matrix.min(axis=0).max()))


def trapezoid_weights(grid) -> np.ndarray:
    """Pesos de la regla del trapecio; suman (max − min) de la grilla"""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 1:
        return np.ones(1)
    widths = np.diff(grid)
    weights = np.zeros(grid.size)
    weights[:-1] += widths / 2
    weights[1:] += widths / 2
    return weights


def pointwise_errors(est: ModalCurve, truth: ModalCurve, penalty: float):
    """Δₙ(x) por punto de grilla; un ModeSet vacío recibe la penalización"""
    if est.grid.size != truth.grid.size or not np.array_equal(est.grid, truth.grid):
        raise GridMismatchError("La estimación y la verdad deben compartir la grilla")
    errors = np.empty(est.grid.size)
    flagged = []
    for i, (e, t) in enumerate(zip(est.mode_sets, truth.mode_sets)):
        if e.is_empty or t.is_empty:
            errors[i] = penalty
            flagged.append(i)
        else:
            errors[i] = hausdorff(e.modes, t.modes)
    return errors, flagged


def default_penalty(est: ModalCurve, truth: ModalCurve) -> float:
    """
    Δₙ(x) para un ModeSet vacío: el rango de las respuestas de los datos
    (el de la estimación, si no el de la verdad); sin datos, el rango de los modos verdaderos.
    """
    for curve in (est, truth):
        if curve.response_range is not None:
            lo, hi = curve.response_range
            if hi > lo:
                return hi - lo
    values = [m for ms in truth.mode_sets for m in ms.modes]
    span = (max(values) - min(values)) if values else 0.0
    return span if span > 0 else 1.0


def error_report(est: ModalCurve, truth: ModalCurve, weights=None, penalty: float = None) -> ErrorReport:
    """
    pointwise = Hausdorff por punto, mise = Σ pesos·Δ², uniform = max Δ.
    penalty: valor de Δₙ donde algún ModeSet está vacío (por defecto `default_penalty`).
    """
    if penalty is None:
        penalty = default_penalty(est, truth)
    pointwise, flagged = pointwise_errors(est, truth, penalty)
    w = trapezoid_weights(est.grid) if weights is None else np.asarray(weights, dtype=float)
    if w.size != est.grid.size:
        raise GridMismatchError("Un peso de cuadratura por punto de la grilla")
    flags = ()
    if flagged:
        flags = (f"empty_mode_sets:{len(flagged)}",)
        logger.warning(f"⚠️ {len(flagged)} puntos con ModeSet vacío penalizados con {penalty:.4g}")
    return ErrorReport(
        grid=est.grid,
        pointwise=pointwise,
        mise=float(np.sum(w * pointwise ** 2)),
        uniform=float(pointwise.max()),
        flags=flags,
    )
