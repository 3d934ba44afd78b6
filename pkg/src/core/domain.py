# src/core/domain.py
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Dict, Optional, Tuple

import numpy as np

from .errors import ConfigError, DataError, GridMismatchError

if TYPE_CHECKING:
    from .ports import ErrorDistributionSpec


def _frozen_array(values, name: str) -> np.ndarray:
    """Copia a float64 de solo lectura; rechaza NaN/Inf."""
    arr = np.array(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contiene valores no finitos")
    arr.setflags(write=False)
    return arr


# ======================================================================
# Muestras (Input)
# ======================================================================

@dataclass(frozen=True)
class Sample:
    """Pares (Xᵢ, Yᵢ): covariable y respuesta"""
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _frozen_array(self.x, "x")
        y = _frozen_array(self.y, "y")
        if x.size != y.size:
            raise DataError(f"x e y tienen largos distintos: {x.size} vs {y.size}")
        if x.size < 1:
            raise DataError("La muestra está vacía")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.size)

    def take(self, indices) -> "Sample":
        idx = np.asarray(indices, dtype=int)
        return Sample(self.x[idx], self.y[idx])

    def require_size(self, minimum: int) -> None:
        if self.n < minimum:
            raise DataError(f"Se necesitan al menos {minimum} observaciones (hay {self.n})")


@dataclass(frozen=True)
class CensoredSample:
    """
    Triples (Xᵢ, Tᵢ = min(Yᵢ, Cᵢ), δᵢ).
    δᵢ = 1 si la respuesta se observó, 0 si quedó censurada.
    """
    x: np.ndarray
    t: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        x = _frozen_array(self.x, "x")
        t = _frozen_array(self.t, "t")
        delta = _frozen_array(self.delta, "delta")
        if not (x.size == t.size == delta.size):
            raise DataError("x, t y delta deben tener el mismo largo")
        if x.size < 1:
            raise DataError("La muestra censurada está vacía")
        if not np.all((delta == 0.0) | (delta == 1.0)):
            raise DataError("delta debe ser binario (0/1)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "delta", delta)

    @property
    def n(self) -> int:
        return int(self.x.size)

    def take(self, indices) -> "CensoredSample":
        idx = np.asarray(indices, dtype=int)
        return CensoredSample(self.x[idx], self.t[idx], self.delta[idx])

    def require_event(self) -> None:
        if not np.any(self.delta == 1.0):
            raise DataError("Se necesita al menos una observación no censurada (δ = 1)")


@dataclass(frozen=True)
class ContaminatedSample:
    """Pares (Wᵢ = Xᵢ + Uᵢ, Yᵢ) con distribución del error conocida"""
    w: np.ndarray
    y: np.ndarray
    error: "ErrorDistributionSpec"

    def __post_init__(self):
        w = _frozen_array(self.w, "w")
        y = _frozen_array(self.y, "y")
        if w.size != y.size:
            raise DataError("w e y tienen largos distintos")
        if w.size < 1:
            raise DataError("La muestra contaminada está vacía")
        if self.error.scale < 0:
            raise DataError("La escala del error debe ser >= 0")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.w.size)

    def take(self, indices) -> "ContaminatedSample":
        idx = np.asarray(indices, dtype=int)
        return ContaminatedSample(self.w[idx], self.y[idx], self.error)

    def naive(self) -> Sample:
        """Ignora el error de medición: trata W como si fuera X"""
        return Sample(self.w, self.y)


# ======================================================================
# Modos condicionales
# ======================================================================

@dataclass(frozen=True)
class ModeSet:
    """Conjunto finito de modos locales condicionales en un x"""
    x: float
    modes: Tuple[float, ...] = ()
    densities: Tuple[float, ...] = ()
    curvatures: Tuple[float, ...] = ()  # kde_dyy en cada modo (< 0)
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        modes = tuple(float(m) for m in self.modes)
        if not (len(modes) == len(self.densities) == len(self.curvatures)):
            raise DataError("modes, densities y curvatures deben tener el mismo largo")
        if any(b <= a for a, b in zip(modes, modes[1:])):
            raise DataError(f"Los modos deben ser estrictamente crecientes: {modes}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "densities", tuple(float(d) for d in self.densities))
        object.__setattr__(self, "curvatures", tuple(float(c) for c in self.curvatures))
        object.__setattr__(self, "flags", tuple(self.flags))

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def is_empty(self) -> bool:
        return len(self.modes) == 0

    def highest(self) -> Optional[float]:
        """Modo con mayor densidad (empates: el menor)"""
        if self.is_empty:
            return None
        return self.modes[int(np.argmax(self.densities))]


@dataclass(frozen=True)
class ModalCurve:
    """Función multivaluada: grilla de covariable → ModeSet"""
    grid: np.ndarray
    mode_sets: Tuple[ModeSet, ...]
    # rango (min, max) de las respuestas con que se estimó; None si no se conoce
    response_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        grid = _frozen_array(self.grid, "grid")
        sets = tuple(self.mode_sets)
        if grid.size == 0:
            raise DataError("La grilla está vacía")
        if np.any(np.diff(grid) <= 0):
            raise DataError("La grilla debe ser estrictamente creciente")
        if len(sets) != grid.size:
            raise GridMismatchError("Un ModeSet por punto de la grilla")
        for gx, ms in zip(grid, sets):
            if ms.x != float(gx):
                raise GridMismatchError(f"ModeSet en x={ms.x} no coincide con la grilla ({gx})")
        if self.response_range is not None:
            lo, hi = (float(v) for v in self.response_range)
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
                raise DataError(f"Rango de respuestas inválido: {self.response_range}")
            object.__setattr__(self, "response_range", (lo, hi))
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "mode_sets", sets)

    @classmethod
    def from_unimodal(cls, curve: "UnimodalCurve") -> "ModalCurve":
        sets = []
        for gx, value, dens in zip(curve.grid, curve.values, curve.densities):
            if np.isnan(value):
                sets.append(ModeSet(x=gx, flags=("empty",)))
            else:
                sets.append(ModeSet(x=gx, modes=(value,), densities=(dens,), curvatures=(np.nan,)))
        return cls(grid=curve.grid, mode_sets=tuple(sets))

    @property
    def empty_points(self) -> Tuple[int, ...]:
        return tuple(i for i, ms in enumerate(self.mode_sets) if ms.is_empty)

    def nearest_index(self, x) -> np.ndarray:
        """Índice del punto de grilla más cercano a cada x"""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pos = np.clip(np.searchsorted(self.grid, x), 1, max(self.grid.size - 1, 1))
        if self.grid.size == 1:
            return np.zeros(x.size, dtype=int)
        left = self.grid[pos - 1]
        right = self.grid[pos]
        return np.where(np.abs(x - left) <= np.abs(right - x), pos - 1, pos)


@dataclass(frozen=True)
class UnimodalCurve:
    """Curva univaluada m̂(x) = argmax_y p̂(x, y); NaN donde no hay modo"""
    grid: np.ndarray
    values: np.ndarray
    densities: np.ndarray
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        grid = _frozen_array(self.grid, "grid")
        values = np.array(self.values, dtype=float)
        dens = np.array(self.densities, dtype=float)
        if not (grid.size == values.size == dens.size):
            raise GridMismatchError("grid, values y densities deben tener el mismo largo")
        values.setflags(write=False)
        dens.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "densities", dens)
        object.__setattr__(self, "flags", tuple(self.flags))


@dataclass(frozen=True)
class MeanshiftConfig:
    """
    Parámetros del meanshift parcial.
    conv_tol y merge_tol en None se resuelven contra los datos:
    conv_tol = 1e-7·(max Y − min Y), merge_tol = h₂/2.
    """
    max_iter: int = 500
    conv_tol: Optional[float] = None
    merge_tol: Optional[float] = None
    init_count: int = 30
    grad_tol: float = 1e-8

    def __post_init__(self):
        if self.max_iter <= 0 or self.init_count <= 0:
            raise ConfigError("max_iter e init_count deben ser positivos")
        for name in ("conv_tol", "merge_tol"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} debe ser positivo")
        if self.grad_tol <= 0:
            raise ConfigError("grad_tol debe ser positivo")

    def resolved_conv_tol(self, y_range: float) -> float:
        if self.conv_tol is not None:
            return self.conv_tol
        return 1e-7 * y_range if y_range > 0 else 1e-10

    def resolved_merge_tol(self, h2: float) -> float:
        return self.merge_tol if self.merge_tol is not None else h2 / 2.0


# ======================================================================
# Regresión modal lineal (EM)
# ======================================================================

@dataclass(frozen=True)
class EmConfig:
    h: Optional[float] = None  # None: Silverman sobre residuos del ajuste OLS piloto
    n_starts: int = 20
    max_iter: int = 1000
    conv_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.h is not None and self.h <= 0:
            raise ConfigError("h debe ser positivo")
        if self.n_starts <= 0 or self.max_iter <= 0 or self.conv_tol <= 0:
            raise ConfigError("n_starts, max_iter y conv_tol deben ser positivos")


@dataclass(frozen=True)
class LinearModalFit:
    beta0: float
    beta1: float
    objective_trace: Tuple[float, ...]
    n_iter: int
    start_index: int
    h: float
    run_traces: Tuple[Tuple[float, ...], ...] = ()
    flags: Tuple[str, ...] = ()

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


# ======================================================================
# Métricas
# ======================================================================

@dataclass(frozen=True)
class ErrorReport:
    grid: np.ndarray
    pointwise: np.ndarray
    mise: float
    uniform: float
    flags: Tuple[str, ...] = ()


# ======================================================================
# Selección de ancho de banda
# ======================================================================

@dataclass(frozen=True)
class CvConfig:
    """
    Candidatos para (h₁, h₂) y parámetros de la integral en y.
    pairing = "product": todas las combinaciones; "zip": pares alineados.
    weight_range = intervalo donde ω(x) = 1 (None: rango interior de los datos).
    """
    h1_grid: Tuple[float, ...]
    h2_grid: Tuple[float, ...]
    pairing: str = "product"
    weight_range: Optional[Tuple[float, float]] = None
    y_grid: Optional[Tuple[float, ...]] = None
    y_grid_size: int = 200

    def __post_init__(self):
        h1 = tuple(float(h) for h in self.h1_grid)
        h2 = tuple(float(h) for h in self.h2_grid)
        if not h1 or not h2:
            raise ConfigError("Las grillas de candidatos no pueden estar vacías")
        if min(h1) <= 0 or min(h2) <= 0:
            raise ConfigError("Los candidatos de ancho de banda deben ser positivos")
        if self.pairing not in ("product", "zip"):
            raise ConfigError(f"pairing no soportado: {self.pairing}")
        if self.pairing == "zip" and len(h1) != len(h2):
            raise ConfigError("pairing='zip' requiere grillas del mismo largo")
        if self.y_grid is not None and len(self.y_grid) < 2:
            raise ConfigError("y_grid necesita al menos 2 puntos")
        if self.y_grid_size < 2:
            raise ConfigError("y_grid_size debe ser >= 2")
        object.__setattr__(self, "h1_grid", h1)
        object.__setattr__(self, "h2_grid", h2)

    def candidates(self) -> Tuple[Tuple[float, float], ...]:
        if self.pairing == "zip":
            return tuple(zip(self.h1_grid, self.h2_grid))
        return tuple((a, b) for a in self.h1_grid for b in self.h2_grid)


@dataclass(frozen=True)
class BandwidthChoice:
    h1: float
    h2: float
    method: str
    candidates: Tuple[Tuple[float, float], ...] = ()
    criterion: Tuple[float, ...] = ()
    details: Dict[str, object] = field(default_factory=dict)
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.h1 <= 0 or self.h2 <= 0:
            raise DataError("h₁ y h₂ deben ser positivos")

    @property
    def criterion_min(self) -> Optional[float]:
        finite = [c for c in self.criterion if np.isfinite(c)]
        return min(finite) if finite else None


# ======================================================================
# Incertidumbre
# ======================================================================

Interval = Tuple[float, float]


@dataclass(frozen=True)
class PredictionBand:
    level: float
    radius: float
    grid: np.ndarray
    intervals: Tuple[Tuple[Interval, ...], ...]
    size: float
    residuals: np.ndarray
    flags: Tuple[str, ...] = ()


@dataclass(frozen=True)
class ConfidenceBand:
    level: float
    radius: float
    curve: ModalCurve
    intervals: Tuple[Tuple[Interval, ...], ...]
    deviations: np.ndarray
    n_dropped: int = 0
    flags: Tuple[str, ...] = ()

    def contains(self, index: int, value: float) -> bool:
        return any(lo <= value <= hi for lo, hi in self.intervals[index])


# ======================================================================
# Generadores de datos
# ======================================================================

@dataclass(frozen=True)
class MixtureComponent:
    """Componente ℓ: π_ℓ(x), m_ℓ(x), σ_ℓ(x), funciones vectorizadas"""
    mean: Callable[[np.ndarray], np.ndarray]
    sd: Callable[[np.ndarray], np.ndarray]
    weight: Callable[[np.ndarray], np.ndarray]
    label: str = ""


@dataclass(frozen=True)
class MixtureSpec:
    """Y | X=x ~ Σ_ℓ π_ℓ(x) N(m_ℓ(x), σ²_ℓ(x)),  X ~ Uniform[x_low, x_high]"""
    components: Tuple[MixtureComponent, ...]
    x_low: float = 0.0
    x_high: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ConfigError("La mezcla necesita al menos una componente")
        if not self.x_high > self.x_low:
            raise ConfigError("El intervalo de la covariable está vacío")
        object.__setattr__(self, "components", comps)
        check = np.linspace(self.x_low, self.x_high, 101)
        weights = self.weights(check)
        if np.any(weights < 0):
            raise ConfigError("Los pesos de la mezcla deben ser no negativos")
        if not np.allclose(weights.sum(axis=0), 1.0, atol=1e-9):
            raise ConfigError("Los pesos de la mezcla deben sumar 1 en todo x")
        if np.any(self.sds(check) <= 0):
            raise ConfigError("Las desviaciones estándar deben ser positivas")

    def _stack(self, attr: str, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.vstack([np.broadcast_to(getattr(c, attr)(x), x.shape) for c in self.components])

    def weights(self, x) -> np.ndarray:
        return self._stack("weight", x)

    def means(self, x) -> np.ndarray:
        return self._stack("mean", x)

    def sds(self, x) -> np.ndarray:
        return self._stack("sd", x)


@dataclass(frozen=True)
class CensoringSpec:
    """Distribución de C: constant(c) | uniform(a, b) | exponential(rate) | normal(mu, sd)"""
    family: str = "none"
    params: Tuple[float, ...] = ()

    def __post_init__(self):
        expected = {"none": 0, "constant": 1, "uniform": 2, "exponential": 1, "normal": 2}
        if self.family not in expected:
            raise ConfigError(f"Censura no soportada: {self.family}")
        if len(self.params) != expected[self.family]:
            raise ConfigError(f"'{self.family}' espera {expected[self.family]} parámetros")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))


# ======================================================================
# Configuración del modelo de densidad
# ======================================================================

VARIANTS = ("standard", "censored", "deconvolution")


@dataclass(frozen=True)
class ModelConfig:
    """Todo lo necesario para reconstruir un JointDensityModel sobre otra muestra"""
    h1: float
    h2: float
    variant: str = "standard"
    kernel_x: str = "gaussian"
    kernel_y: str = "gaussian"
    error_family: Optional[str] = None
    error_scale: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"Variante no soportada: {self.variant}. Usa: {', '.join(VARIANTS)}")
        if self.h1 <= 0 or self.h2 <= 0:
            raise ConfigError("h₁ y h₂ deben ser positivos")
        if self.variant == "deconvolution" and (self.error_family is None or self.error_scale is None):
            raise ConfigError("La variante deconvolution requiere error_family y error_scale")


# ======================================================================
# Configuración de una corrida (CLI)
# ======================================================================

COMMANDS = ("fit", "bandwidth", "band", "simulate", "eval")
BW_METHODS = ("fixed", "cv", "simex", "predband", "modalcv")
CLI_VARIANTS = {"standard": "standard", "censored": "censored", "deconv": "deconvolution"}
# Selectores válidos por variante
_BW_BY_VARIANT = {
    "standard": ("fixed", "cv", "predband", "modalcv"),
    "censored": ("fixed", "cv"),
    "deconv": ("fixed", "simex"),
}


@dataclass(frozen=True)
class RunConfig:
    """Configuración validada de una corrida; se valida completa antes de calcular nada"""
    command: str
    input: Optional[str] = None
    output: Optional[str] = None
    format: str = "json"
    variant: str = "standard"
    columns: Dict[str, str] = field(default_factory=dict)
    kernel_x: str = "gaussian"
    kernel_y: str = "gaussian"
    h1: Optional[float] = None
    h2: Optional[float] = None
    bw_method: str = "fixed"
    grid: Optional[Tuple[float, float, int]] = None
    level: float = 0.9
    seed: int = 0
    threads: int = 1
    error_dist: Optional[str] = None
    error_scale: Optional[float] = None
    unimodal: bool = False
    band_type: str = "prediction"
    holdout_fraction: float = 0.3
    bootstrap: int = 100
    folds: int = 5
    truth: Optional[str] = None
    spec: Optional[str] = None
    n: int = 500
    censoring: str = "none"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"Subcomando desconocido: {self.command}. Usa: {', '.join(COMMANDS)}")
        if self.format not in ("json", "csv"):
            raise ConfigError("format debe ser json o csv")
        if self.variant not in CLI_VARIANTS:
            raise ConfigError(f"Variante no soportada: {self.variant}. Usa: {', '.join(CLI_VARIANTS)}")
        if self.bw_method not in BW_METHODS:
            raise ConfigError(f"Método de ancho de banda desconocido: {self.bw_method}")
        if self.command in ("fit", "bandwidth", "band"):
            if self.input is None:
                raise ConfigError(f"'{self.command}' necesita --input")
            if self.bw_method not in _BW_BY_VARIANT[self.variant]:
                raise ConfigError(f"--bw-method {self.bw_method} no aplica a la variante {self.variant}")
            if self.command == "bandwidth" and self.bw_method == "fixed":
                raise ConfigError("'bandwidth' necesita un selector (cv, simex, predband o modalcv)")
            if self.bw_method == "fixed" and (self.h1 is None or self.h2 is None):
                raise ConfigError("--bw-method fixed necesita --h1 y --h2")
        for name in ("h1", "h2"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"--{name} debe ser positivo")
        needs_error = self.variant == "deconv" and self.command in ("fit", "bandwidth", "band")
        if needs_error or self.error_dist is not None:
            if self.error_dist is None or self.error_scale is None:
                raise ConfigError("Se necesitan --error-dist y --error-scale")
        if self.error_scale is not None and self.error_scale < 0:
            raise ConfigError("--error-scale debe ser >= 0")
        if self.grid is not None:
            lo, hi, count = self.grid
            if not hi > lo or int(count) < 2:
                raise ConfigError("--grid necesita min < max y al menos 2 puntos")
        if not 0 < self.level < 1:
            raise ConfigError("--level debe estar en (0, 1)")
        if self.threads < 1:
            raise ConfigError("--threads debe ser >= 1")
        if self.band_type not in ("prediction", "confidence"):
            raise ConfigError("--band-type debe ser prediction o confidence")
        if self.command == "band" and self.band_type == "prediction" and self.variant != "standard":
            raise ConfigError("La banda de predicción sólo aplica a la variante standard")
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("--holdout-fraction debe estar en (0, 1)")
        if self.bootstrap < 20 and self.command == "band" and self.band_type == "confidence":
            raise ConfigError("--bootstrap debe ser >= 20")
        if self.folds < 2:
            raise ConfigError("--folds debe ser >= 2")
        if self.n < 1:
            raise ConfigError("--n debe ser >= 1")
        if self.command == "simulate" and self.spec is None:
            raise ConfigError("'simulate' necesita --spec (nombre o archivo JSON)")
        if self.command == "eval" and (self.input is None or (self.truth is None and self.spec is None)):
            raise ConfigError("'eval' necesita --input y --truth o --spec")
        object.__setattr__(self, "columns", dict(self.columns))

    @property
    def model_variant(self) -> str:
        return CLI_VARIANTS[self.variant]
