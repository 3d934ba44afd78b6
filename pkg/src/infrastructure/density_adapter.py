# src/infrastructure/density_adapter.py
"""
Estimación de la densidad conjunta p̂(x, y) en tres variantes
(standard, censored, deconvolution) y sus derivadas parciales en y.

Evaluación exacta O(n) por consulta, sin binning.
"""
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from src.adapters.kernel_adapter import DeconvKernelSpec, KernelFactory
from src.core.domain import CensoredSample, ContaminatedSample, ModelConfig, Sample
from src.core.errors import ConfigError, DataError, UnsupportedCombinationError, VariantMismatchError
from src.core.ports import DensityModel, KernelSpec

logger = logging.getLogger(__name__)


# ======================================================================
# Kaplan-Meier
# ======================================================================

@dataclass(frozen=True)
class KaplanMeierEstimate:
    """
    Ŝₙ(t) = Π_{i: T₍ᵢ₎ ≤ t} (1 − δ₍ᵢ₎/(n − i + 1))  si t < T₍ₙ₎;  0 en otro caso.
    Empates: orden estable, no censuradas antes que censuradas.
    """
    times: np.ndarray      # T ordenados
    events: np.ndarray     # δ en el mismo orden
    survival: np.ndarray   # producto acumulado tras cada T₍ᵢ₎

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right")
        value = np.where(k == 0, 1.0, self.survival[np.maximum(k - 1, 0)])
        value = np.where(t >= self.times[-1], 0.0, value)
        return value if value.ndim else float(value)

    def left_limit(self, t):
        """Ŝₙ(t⁻): límite por izquierda"""
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="left")
        value = np.where(k == 0, 1.0, self.survival[np.maximum(k - 1, 0)])
        value = np.where(t > self.times[-1], 0.0, value)
        return value if value.ndim else float(value)


def kaplan_meier(censored: CensoredSample) -> KaplanMeierEstimate:
    if censored is None or censored.n == 0:
        raise DataError("Kaplan-Meier sobre una muestra vacía")
    censored.require_event()
    order = np.lexsort((1.0 - censored.delta, censored.t))
    times = censored.t[order]
    events = censored.delta[order]
    n = times.size
    at_risk = n - np.arange(n)  # n − i + 1 con i = 1..n
    survival = np.cumprod(1.0 - events / at_risk)
    for arr in (times, events, survival):
        arr.setflags(write=False)
    return KaplanMeierEstimate(times=times, events=events, survival=survival)


# ======================================================================
# Modelo de densidad conjunta
# ======================================================================

AnyKernel = Union[KernelSpec, DeconvKernelSpec]


class JointDensityModel(DensityModel):
    """
    p̂(x, y) = Σᵢ aᵢ(x)·K₂((Yᵢ − y)/h₂)  con  aᵢ(x) = cᵢ·K₁((Xᵢ − x)/h₁)/(n h₁ h₂)

    cᵢ = 1 (standard y deconvolution) o δᵢ/Ŝₙ(Tᵢ⁻) (censored).
    """

    def __init__(self, variant: str, data, k1: AnyKernel, k2: KernelSpec, h1: float, h2: float,
                 covariates: np.ndarray, responses: np.ndarray, sample_weights: np.ndarray,
                 km: KaplanMeierEstimate = None):
        if h1 <= 0 or h2 <= 0:
            raise ConfigError("h₁ y h₂ deben ser positivos")
        self._variant = variant
        self._data = data
        self._k1 = k1
        self._k2 = k2
        self._h1 = float(h1)
        self._h2 = float(h2)
        self._x = np.array(covariates, dtype=float)
        self._y = np.array(responses, dtype=float)
        self._c = np.array(sample_weights, dtype=float)
        for arr in (self._x, self._y, self._c):
            arr.setflags(write=False)
        self._km = km
        self._scale = 1.0 / (self._x.size * self._h1 * self._h2)

    # --- constructores -------------------------------------------------

    @classmethod
    def standard(cls, sample: Sample, k1: KernelSpec, k2: KernelSpec, h1: float, h2: float):
        return cls("standard", sample, k1, k2, h1, h2, sample.x, sample.y, np.ones(sample.n))

    @classmethod
    def censored(cls, sample: CensoredSample, k1: KernelSpec, k2: KernelSpec, h1: float, h2: float):
        km = kaplan_meier(sample)
        weights = np.zeros(sample.n)
        observed = sample.delta == 1.0
        weights[observed] = 1.0 / km.left_limit(sample.t[observed])
        logger.debug(f"📊 Pesos KM: {int(observed.sum())}/{sample.n} observaciones no censuradas")
        return cls("censored", sample, k1, k2, h1, h2, sample.x, sample.t, weights, km=km)

    @classmethod
    def deconvolution(cls, sample: ContaminatedSample, k2: KernelSpec, h1: float, h2: float,
                      base: str = None):
        if sample.error.scale == 0:
            logger.warning("⚠️ Escala del error = 0: la deconvolución se reduce al KDE estándar")
        k1 = KernelFactory.create_deconvolution(sample.error, h1, base)
        return cls("deconvolution", sample, k1, k2, h1, h2, sample.w, sample.y, np.ones(sample.n))

    # --- propiedades ---------------------------------------------------

    @property
    def variant(self) -> str:
        return self._variant

    @property
    def data(self):
        return self._data

    @property
    def k1(self) -> AnyKernel:
        return self._k1

    @property
    def k2(self) -> KernelSpec:
        return self._k2

    @property
    def h1(self) -> float:
        return self._h1

    @property
    def h2(self) -> float:
        return self._h2

    @property
    def n(self) -> int:
        return int(self._x.size)

    @property
    def covariates(self) -> np.ndarray:
        return self._x

    @property
    def responses(self) -> np.ndarray:
        return self._y

    @property
    def sample_weights(self) -> np.ndarray:
        return self._c

    @property
    def km(self) -> KaplanMeierEstimate:
        return self._km

    @property
    def nonnegative(self) -> bool:
        """Los pesos aᵢ(x) son no negativos (falso para kernels de deconvolución)"""
        return self._variant != "deconvolution"

    def response_span(self):
        return float(self._y.min()), float(self._y.max())

    def config(self) -> ModelConfig:
        if self._variant == "deconvolution":
            return ModelConfig(h1=self._h1, h2=self._h2, variant=self._variant,
                               kernel_x=self._k1.base.family, kernel_y=self._k2.family,
                               error_family=self._k1.error.family, error_scale=self._k1.error.scale)
        return ModelConfig(h1=self._h1, h2=self._h2, variant=self._variant,
                           kernel_x=self._k1.family, kernel_y=self._k2.family)

    # --- evaluación ----------------------------------------------------

    def covariate_weights(self, x: float) -> np.ndarray:
        u = (self._x - float(x)) / self._h1
        return self._scale * self._c * self._k1.eval(u)

    def _active(self, x: float):
        a = self.covariate_weights(x)
        idx = np.flatnonzero(a)
        return a[idx], self._y[idx]

    def _sum(self, x: float, y, kernel_fn, factor: float):
        y = np.asarray(y, dtype=float)
        a, resp = self._active(x)
        flat = y.ravel()
        if a.size == 0:
            out = np.zeros(flat.size)
        else:
            u = (resp[:, None] - flat[None, :]) / self._h2
            out = factor * (a @ kernel_fn(u))
        out = out.reshape(y.shape)
        return out if out.ndim else float(out)

    def density(self, x: float, y):
        return self._sum(x, y, self._k2.eval, 1.0)

    def _require_differentiable(self):
        if self._k2.family == "box":
            raise UnsupportedCombinationError("K₂ box no es diferenciable: usa gaussian o epanechnikov")

    def density_dy(self, x: float, y):
        # d/dy K₂((Yᵢ − y)/h₂) = −K₂'(u)/h₂
        self._require_differentiable()
        return self._sum(x, y, self._k2.deriv1, -1.0 / self._h2)

    def density_dyy(self, x: float, y):
        self._require_differentiable()
        return self._sum(x, y, self._k2.deriv2, 1.0 / self._h2 ** 2)

    def marginal_x(self, x: float) -> float:
        """p̂(x) = Σᵢ cᵢ K₁((Xᵢ − x)/h₁)/(n h₁)"""
        return float(self.covariate_weights(x).sum() * self._h2)

    def __repr__(self):
        return (f"JointDensityModel(variant={self._variant}, n={self.n}, "
                f"h1={self._h1:.4g}, h2={self._h2:.4g})")


def build_model(data, cfg: ModelConfig) -> JointDensityModel:
    """Construye el modelo de la variante pedida sobre una muestra (útil para bootstrap/CV)"""
    k2 = KernelFactory.create_kernel(cfg.kernel_y)
    if cfg.variant == "standard":
        if not isinstance(data, Sample):
            raise VariantMismatchError("La variante standard necesita un Sample")
        return JointDensityModel.standard(data, KernelFactory.create_kernel(cfg.kernel_x), k2, cfg.h1, cfg.h2)
    if cfg.variant == "censored":
        if not isinstance(data, CensoredSample):
            raise VariantMismatchError("La variante censored necesita un CensoredSample")
        return JointDensityModel.censored(data, KernelFactory.create_kernel(cfg.kernel_x), k2, cfg.h1, cfg.h2)
    if not isinstance(data, ContaminatedSample):
        raise VariantMismatchError("La variante deconvolution necesita un ContaminatedSample")
    base = cfg.kernel_x if cfg.kernel_x in ("gaussian", "compact_fourier") else None
    return JointDensityModel.deconvolution(data, k2, cfg.h1, cfg.h2, base=base)


# ======================================================================
# Operaciones
# ======================================================================

def _require_variant(model: JointDensityModel, variant: str) -> None:
    if model.variant != variant:
        raise VariantMismatchError(f"Se esperaba un modelo '{variant}' y llegó '{model.variant}'")


def kde_joint(model: JointDensityModel, x: float, y):
    _require_variant(model, "standard")
    return model.density(x, y)


def kde_censored(model: JointDensityModel, x: float, y):
    _require_variant(model, "censored")
    return model.density(x, y)


def kde_deconv(model: JointDensityModel, x: float, y):
    _require_variant(model, "deconvolution")
    return model.density(x, y)


def kde_dy(model: JointDensityModel, x: float, y):
    return model.density_dy(x, y)


def kde_dyy(model: JointDensityModel, x: float, y):
    return model.density_dyy(x, y)


def kde_marginal_x(model: JointDensityModel, x: float) -> float:
    return model.marginal_x(x)


def conditional_density(model: JointDensityModel, x: float, y):
    """p̂(y|x) = p̂(x, y)/p̂(x); NaN si p̂(x) <= 0"""
    marginal = model.marginal_x(x)
    value = np.asarray(model.density(x, y), dtype=float)
    out = value / marginal if marginal > 0 else np.full(value.shape, np.nan)
    return out if out.ndim else float(out)
