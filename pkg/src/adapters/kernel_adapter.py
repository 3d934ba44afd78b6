"""
Adapter de kernels: funciones kernel univariadas, sus derivadas y kernels de
deconvolución para covariables medidas con error.
Todos los objetos son inmutables y las evaluaciones son puras (thread-safe).
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from src.core.errors import ConfigError, KernelDomainError, UnsupportedCombinationError
from src.core.ports import ErrorDistributionSpec, KernelSpec

_SQRT_2PI = np.sqrt(2.0 * np.pi)

# Gauss-Legendre en [0, 1] para las integrales de Fourier de soporte compacto
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(256)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS

# |t| mayor: cola despreciable del kernel (decae como t⁻⁴)
_FOURIER_T_MAX = 200.0


def _cosine_transform(t, integrand_weights: np.ndarray, power: int = 0, odd: bool = False) -> np.ndarray:
    """
    (1/π) ∫₀¹ sᵖ·cos(ts)·g(s) ds  (o con sin si odd=True), vectorizado en t.
    integrand_weights = g evaluada en los nodos.
    """
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    phase = np.outer(flat, _GL_NODES)
    trig = np.sin(phase) if odd else np.cos(phase)
    values = trig @ (_GL_WEIGHTS * _GL_NODES ** power * integrand_weights) / np.pi
    values = np.where(np.abs(flat) > _FOURIER_T_MAX, 0.0, values)
    return values.reshape(t.shape)


class GaussianKernel(KernelSpec):
    family = "gaussian"

    def eval(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(-0.5 * u * u) / _SQRT_2PI

    def deriv1(self, u):
        u = np.asarray(u, dtype=float)
        return -u * self.eval(u)

    def deriv2(self, u):
        u = np.asarray(u, dtype=float)
        return (u * u - 1.0) * self.eval(u)

    def characteristic(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(-0.5 * s * s)

    @property
    def support(self) -> float:
        return 8.0

    def __repr__(self):
        return "GaussianKernel()"


class BoxKernel(KernelSpec):
    """K(u) = ½·I(|u| ≤ 1); derivadas nulas salvo en |u| = 1, donde no existen"""
    family = "box"

    def eval(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1.0, 0.5, 0.0)

    def _check_differentiable(self, u):
        if np.any(np.abs(u) == 1.0):
            raise KernelDomainError("El kernel box no es diferenciable en |u| = 1")

    def deriv1(self, u):
        u = np.asarray(u, dtype=float)
        self._check_differentiable(u)
        return np.zeros_like(u)

    def deriv2(self, u):
        u = np.asarray(u, dtype=float)
        self._check_differentiable(u)
        return np.zeros_like(u)

    def characteristic(self, s):
        s = np.asarray(s, dtype=float)
        return np.sinc(s / np.pi)

    @property
    def support(self) -> float:
        return 1.0

    def __repr__(self):
        return "BoxKernel()"


class EpanechnikovKernel(KernelSpec):
    family = "epanechnikov"

    def eval(self, u):
        u = np.asarray(u, dtype=float)
        return 0.75 * np.maximum(0.0, 1.0 - u * u)

    def deriv1(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) < 1.0, -1.5 * u, 0.0)

    def deriv2(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) < 1.0, -1.5, 0.0)

    def characteristic(self, s):
        s = np.asarray(s, dtype=float)
        safe = np.where(s == 0.0, 1.0, s)
        value = 3.0 * (np.sin(safe) - safe * np.cos(safe)) / safe ** 3
        return np.where(np.abs(s) < 1e-4, 1.0 - s * s / 10.0, value)

    @property
    def support(self) -> float:
        return 1.0

    def __repr__(self):
        return "EpanechnikovKernel()"


class CompactFourierKernel(KernelSpec):
    """
    Kernel con transformada de Fourier de soporte compacto: φ_K(s) = (1 − s²)³ en [−1, 1].
    Base requerida para deconvolución con error gaussiano.
    """
    family = "compact_fourier"

    def _phi_nodes(self) -> np.ndarray:
        return (1.0 - _GL_NODES ** 2) ** 3

    def eval(self, u):
        return _cosine_transform(u, self._phi_nodes())

    def deriv1(self, u):
        return -_cosine_transform(u, self._phi_nodes(), power=1, odd=True)

    def deriv2(self, u):
        return -_cosine_transform(u, self._phi_nodes(), power=2)

    def characteristic(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(np.abs(s) <= 1.0, (1.0 - s * s) ** 3, 0.0)

    @property
    def support(self) -> float:
        return _FOURIER_T_MAX

    def __repr__(self):
        return "CompactFourierKernel()"


# ======================================================================
# Distribuciones del error de medición
# ======================================================================

@dataclass(frozen=True)
class LaplaceError(ErrorDistributionSpec):
    """U ~ Laplace(0, σ): φ_U(s) = 1/(1 + σ²s²), Var(U) = 2σ²"""
    scale: float
    family: str = "laplace"

    def characteristic(self, s):
        s = np.asarray(s, dtype=float)
        return 1.0 / (1.0 + self.scale ** 2 * s * s)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.scale == 0:
            return np.zeros(size)
        return rng.laplace(0.0, self.scale, size=size)


@dataclass(frozen=True)
class GaussianError(ErrorDistributionSpec):
    """U ~ N(0, σ²): φ_U(s) = exp(−σ²s²/2)"""
    scale: float
    family: str = "gaussian"

    def characteristic(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(-0.5 * self.scale ** 2 * s * s)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.scale == 0:
            return np.zeros(size)
        return rng.normal(0.0, self.scale, size=size)


# ======================================================================
# Kernel de deconvolución
# ======================================================================

@dataclass(frozen=True)
class DeconvKernelSpec:
    """
    K_U(t) = (1/2π) ∫ e^{−its} φ_{K}(s) / φ_U(s/h₁) ds

    Laplace + base gaussiana se reduce a K_G(t)·[1 − (σ²/h₁²)(t² − 1)].
    Cualquier otra combinación válida necesita una base con φ_K de soporte compacto.
    """
    base: KernelSpec
    error: ErrorDistributionSpec
    h1: float

    def __post_init__(self):
        if self.h1 <= 0:
            raise ConfigError("h₁ debe ser positivo")
        if self.error.scale < 0:
            raise ConfigError("La escala del error debe ser >= 0")
        if self.base.family not in ("gaussian", "compact_fourier"):
            raise UnsupportedCombinationError(
                f"Base '{self.base.family}' no soportada para deconvolución. Usa: gaussian, compact_fourier"
            )
        if self.base.family == "gaussian" and self.error.family != "laplace":
            raise UnsupportedCombinationError(
                "Error gaussiano con base gaussiana: la integral de Fourier diverge (usa compact_fourier)"
            )

    @property
    def family(self) -> str:
        return f"deconv[{self.base.family}/{self.error.family}]"

    @property
    def support(self) -> float:
        return self.base.support

    @property
    def closed_form(self) -> bool:
        return self.base.family == "gaussian" and self.error.family == "laplace"

    def _ratio_nodes(self) -> np.ndarray:
        return self.base.characteristic(_GL_NODES) / self.error.characteristic(_GL_NODES / self.h1)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        if self.closed_form:
            c = (self.error.scale / self.h1) ** 2
            return np.exp(-0.5 * t * t) / _SQRT_2PI * (1.0 - c * (t * t - 1.0))
        return _cosine_transform(t, self._ratio_nodes())

    def fourier_integral(self, t: float) -> float:
        """Evaluación directa (cuadratura adaptativa) de la integral de Fourier"""
        t = float(t)

        def integrand(s):
            ratio = self.base.characteristic(s) / self.error.characteristic(s / self.h1)
            return float(ratio) * np.cos(t * s)

        # φ_K gaussiana: e^{−s²/2} es despreciable más allá de s = 40
        upper = 1.0 if self.base.family == "compact_fourier" else 40.0
        value, _ = integrate.quad(integrand, 0.0, upper, limit=400, epsabs=1e-13, epsrel=1e-12)
        return value / np.pi


class KernelFactory:
    """Factory para crear kernels y distribuciones de error por nombre"""

    _KERNELS = {
        "gaussian": GaussianKernel,
        "box": BoxKernel,
        "epanechnikov": EpanechnikovKernel,
        "compact_fourier": CompactFourierKernel,
    }
    _ERRORS = {
        "laplace": LaplaceError,
        "gaussian": GaussianError,
    }

    @staticmethod
    def create_kernel(family: str = "gaussian") -> KernelSpec:
        try:
            return KernelFactory._KERNELS[family.lower()]()
        except KeyError:
            raise ConfigError(
                f"Kernel no soportado: {family}. Usa: {', '.join(KernelFactory._KERNELS)}"
            ) from None

    @staticmethod
    def create_error(family: str, scale: float) -> ErrorDistributionSpec:
        try:
            cls = KernelFactory._ERRORS[family.lower()]
        except KeyError:
            raise ConfigError(
                f"Distribución de error no soportada: {family}. Usa: {', '.join(KernelFactory._ERRORS)}"
            ) from None
        if scale is None or scale < 0:
            raise ConfigError("La escala del error debe ser >= 0")
        return cls(scale=float(scale))

    @staticmethod
    def create_deconvolution(error: ErrorDistributionSpec, h1: float, base: str = None) -> DeconvKernelSpec:
        """Base por defecto: gaussiana para Laplace, compact_fourier para error gaussiano"""
        if base is None:
            base = "gaussian" if error.family == "laplace" else "compact_fourier"
        return DeconvKernelSpec(KernelFactory.create_kernel(base), error, h1)


# ======================================================================
# Operaciones
# ======================================================================

def kernel_eval(k: KernelSpec, u):
    return k.eval(u)


def kernel_deriv1(k: KernelSpec, u):
    return k.deriv1(u)


def kernel_deriv2(k: KernelSpec, u):
    return k.deriv2(u)


def deconv_kernel_eval(dk: DeconvKernelSpec, t):
    return dk.eval(t)


def kernel_integral(k) -> float:
    """∫ K(u) du por cuadratura sobre el soporte efectivo"""
    a = k.support
    value, _ = integrate.quad(lambda u: float(k.eval(u)), -a, a, limit=1000,
                              points=[-1.0, 1.0] if a > 1 else None)
    return value
