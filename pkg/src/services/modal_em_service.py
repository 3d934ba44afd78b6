"""
Servicio de regresión modal lineal - Algoritmo EM modal con múltiples inicios
Responsabilidad única: ajustar m(x) = β₀ + β₁x maximizando
    (1/(n h)) Σᵢ K((Yᵢ − β₀ − β₁Xᵢ)/h)
"""

import logging
from typing import List, Tuple

import numpy as np
from sklearn.linear_model import LinearRegression

from src.adapters.kernel_adapter import KernelFactory
from src.config import settings
from src.core.domain import EmConfig, LinearModalFit, Sample
from src.core.errors import DataError, NumericalError, SingularDesignError
from src.infrastructure.executor import parallel_map, rngs
from src.services.bandwidth_service import silverman_rule

logger = logging.getLogger(__name__)

_GAUSSIAN = KernelFactory.create_kernel("gaussian")


def _residuals(data: Sample, beta0: float, beta1: float) -> np.ndarray:
    return data.y - beta0 - beta1 * data.x


def modal_objective(data: Sample, beta0: float, beta1: float, h: float, kernel: str = "gaussian") -> float:
    """(1/(n h)) Σᵢ K((Yᵢ − β₀ − β₁Xᵢ)/h); con kernel box es hit_count/(2nh)"""
    k = KernelFactory.create_kernel(kernel)
    return float(k.eval(_residuals(data, beta0, beta1) / h).sum() / (data.n * h))


def em_weights(data: Sample, beta0: float, beta1: float, h: float) -> Tuple[np.ndarray, bool]:
    """
    Paso E: πᵢ ∝ K((Yᵢ − β₀ − β₁Xᵢ)/h), normalizados a suma 1.
    Si todos los términos se anulan (underflow) se usan pesos uniformes 1/n;
    el segundo valor indica si hubo que recurrir a ese fallback.
    """
    if h <= 0:
        raise NumericalError("h debe ser positivo")
    raw = _GAUSSIAN.eval(_residuals(data, beta0, beta1) / h)
    total = raw.sum()
    if not (total > 0 and np.isfinite(total)):
        return np.full(data.n, 1.0 / data.n), True
    return raw / total, False


def em_mstep(data: Sample, weights: np.ndarray) -> Tuple[float, float]:
    """Paso M: mínimos cuadrados ponderados (𝕏ᵀW𝕏)⁻¹𝕏ᵀWY"""
    w = np.asarray(weights, dtype=float)
    design = np.column_stack([np.ones(data.n), data.x])
    gram = design.T @ (w[:, None] * design)
    # rango 2 ⇔ los Xᵢ con peso positivo no son todos iguales
    support = data.x[w > 0]
    if support.size < 2 or np.ptp(support) == 0 or np.linalg.matrix_rank(gram) < 2:
        raise SingularDesignError("Diseño singular: todos los Xᵢ (con peso) son iguales")
    beta = np.linalg.solve(gram, design.T @ (w * data.y))
    return float(beta[0]), float(beta[1])


def box_loss_equivalence_check(data: Sample, beta0: float, beta1: float, h: float) -> Tuple[int, int]:
    """(#|β₀ + β₁Xᵢ − Yᵢ| ≤ h, n − hits): argmax de hits ⇔ argmin de misses"""
    hits = int(np.count_nonzero(np.abs(beta0 + beta1 * data.x - data.y) <= h))
    return hits, data.n - hits


def ols_fit(data: Sample) -> Tuple[float, float]:
    if np.ptp(data.x) == 0:
        raise SingularDesignError("Diseño singular: todos los Xᵢ son iguales")
    reg = LinearRegression().fit(data.x.reshape(-1, 1), data.y)
    return float(reg.intercept_), float(reg.coef_[0])


class ModalEMService:
    """Servicio para la regresión modal lineal por EM"""

    def __init__(self, config: EmConfig = None, threads: int = None):
        self.config = config or EmConfig(
            n_starts=settings.EM_STARTS,
            max_iter=settings.EM_MAX_ITER,
            conv_tol=settings.EM_CONV_TOL,
            seed=settings.DEFAULT_SEED,
        )
        self.threads = threads

    def default_bandwidth(self, data: Sample) -> float:
        """Silverman sobre los residuos del ajuste OLS piloto"""
        b0, b1 = ols_fit(data)
        resid = _residuals(data, b0, b1)
        try:
            return silverman_rule(resid)
        except DataError:
            # datos exactamente sobre una recta: cualquier h pequeño sirve
            scale = float(np.ptp(data.y)) or 1.0
            logger.info("Residuos OLS sin dispersión: h = 1e-3·rango(Y)")
            return 1e-3 * scale

    def initial_lines(self, data: Sample) -> List[Tuple[float, float]]:
        """Inicio 0 = OLS; el resto, rectas por pares aleatorios de observaciones"""
        starts = [ols_fit(data)]
        if self.config.n_starts == 1:
            return starts
        rng = next(iter(rngs(self.config.seed, 1)))
        attempts = 0
        while len(starts) < self.config.n_starts and attempts < 100 * self.config.n_starts:
            attempts += 1
            i, j = rng.choice(data.n, size=2, replace=False)
            dx = data.x[j] - data.x[i]
            if dx == 0:
                continue
            slope = (data.y[j] - data.y[i]) / dx
            starts.append((float(data.y[i] - slope * data.x[i]), float(slope)))
        return starts

    def run_em(self, data: Sample, beta0: float, beta1: float, h: float):
        """Una corrida del EM; devuelve (β₀, β₁, traza del objetivo, iteraciones, fallback)"""
        trace = [modal_objective(data, beta0, beta1, h)]
        fallback = False
        n_iter = 0
        for n_iter in range(1, self.config.max_iter + 1):
            weights, uniform = em_weights(data, beta0, beta1, h)
            fallback = fallback or uniform
            new0, new1 = em_mstep(data, weights)
            change = max(abs(new0 - beta0), abs(new1 - beta1))
            beta0, beta1 = new0, new1
            trace.append(modal_objective(data, beta0, beta1, h))
            if change < self.config.conv_tol:
                break
        return beta0, beta1, tuple(trace), n_iter, fallback

    def fit_linear_modal(self, data: Sample) -> LinearModalFit:
        data.require_size(2)
        if np.ptp(data.x) == 0:
            raise SingularDesignError("Diseño singular: todos los Xᵢ son iguales")
        h = self.config.h if self.config.h is not None else self.default_bandwidth(data)
        starts = self.initial_lines(data)
        runs = parallel_map(lambda s: self.run_em(data, s[0], s[1], h), starts, self.threads,
                            desc="EM modal", unit="inicio")

        # ganador: mayor objetivo final; empate → menor índice de inicio
        finals = [run[2][-1] for run in runs]
        best = int(np.argmax(finals))
        beta0, beta1, trace, n_iter, _ = runs[best]
        flags = ("uniform_fallback",) if any(run[4] for run in runs) else ()
        if flags:
            logger.debug("Alguna corrida usó pesos uniformes por underflow del kernel")
        logger.info(f"✅ EM modal: inicio {best} ganó con objetivo {finals[best]:.6g}")
        return LinearModalFit(
            beta0=beta0,
            beta1=beta1,
            objective_trace=trace,
            n_iter=n_iter,
            start_index=best,
            h=float(h),
            run_traces=tuple(run[2] for run in runs),
            flags=flags,
        )
