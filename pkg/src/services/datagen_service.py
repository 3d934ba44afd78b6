"""
Generadores sintéticos con semilla: mezcla de regresiones, error de medición y censura.

    Y | X=x ~ Σ_ℓ π_ℓ(x) N(m_ℓ(x), σ²_ℓ(x)),   X ~ Uniform[x_low, x_high]
"""

import json
import logging
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy import optimize

from src.core.domain import (
    CensoredSample,
    CensoringSpec,
    ContaminatedSample,
    MixtureComponent,
    MixtureSpec,
    ModalCurve,
    ModeSet,
    Sample,
)
from src.core.errors import ConfigError, DataError
from src.core.ports import ErrorDistributionSpec

logger = logging.getLogger(__name__)

_SQRT_2PI = np.sqrt(2.0 * np.pi)


# ======================================================================
# Formas funcionales para π_ℓ, m_ℓ, σ_ℓ
# ======================================================================

def constant(value: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.full(np.shape(x), float(value))


def linear(intercept: float, slope: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: intercept + slope * np.asarray(x, dtype=float)


def poly(coefs) -> Callable[[np.ndarray], np.ndarray]:
    """c₀ + c₁x + c₂x² + …"""
    coefs = [float(c) for c in coefs]
    return lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), coefs)


def sinusoid(amplitude: float = 1.0, frequency: float = 1.0, phase: float = 0.0,
             offset: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: offset + amplitude * np.sin(frequency * np.asarray(x, dtype=float) + phase)


def _parse_form(form) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(form, (int, float)):
        return constant(form)
    if not isinstance(form, dict) or "type" not in form:
        raise ConfigError(f"Forma funcional inválida: {form!r}")
    kind = form["type"]
    try:
        if kind == "constant":
            return constant(form["value"])
        if kind == "linear":
            return linear(form.get("intercept", 0.0), form["slope"])
        if kind == "poly":
            return poly(form["coefs"])
        if kind == "sin":
            return sinusoid(form.get("amplitude", 1.0), form.get("frequency", 1.0),
                            form.get("phase", 0.0), form.get("offset", 0.0))
    except KeyError as e:
        raise ConfigError(f"Falta el parámetro {e} en la forma '{kind}'") from None
    raise ConfigError(f"Forma no soportada: {kind}. Usa: constant, linear, poly, sin")


def parse_mixture_spec(payload: Dict) -> MixtureSpec:
    """
    Mezcla desde JSON:
      {"name": ..., "x_low": 0, "x_high": 1,
       "components": [{"mean": <forma>, "sd": <forma>, "weight": <forma>, "label": ...}, ...]}
    <forma> = número | {"type": "constant"|"linear"|"poly"|"sin", ...}; weight por defecto 1/L.
    """
    comps = payload.get("components")
    if not comps:
        raise ConfigError("La mezcla necesita una lista 'components'")
    unknown = set(payload) - {"name", "x_low", "x_high", "components"}
    if unknown:
        raise ConfigError(f"Claves desconocidas en la mezcla: {', '.join(sorted(unknown))}")
    components = []
    for i, c in enumerate(comps):
        if "mean" not in c or "sd" not in c:
            raise ConfigError(f"La componente {i} necesita 'mean' y 'sd'")
        components.append(MixtureComponent(
            mean=_parse_form(c["mean"]),
            sd=_parse_form(c["sd"]),
            weight=_parse_form(c.get("weight", 1.0 / len(comps))),
            label=str(c.get("label", f"c{i}")),
        ))
    return MixtureSpec(
        components=tuple(components),
        x_low=float(payload.get("x_low", 0.0)),
        x_high=float(payload.get("x_high", 1.0)),
        name=str(payload.get("name", "custom")),
    )


def load_mixture_spec(path: str) -> MixtureSpec:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"No se pudo leer la mezcla '{path}': {e}") from None
    return parse_mixture_spec(payload)


# ======================================================================
# Mezclas con nombre
# ======================================================================

def _equal_weights(count: int):
    return constant(1.0 / count)


def fig1_spec() -> MixtureSpec:
    """Tres ramas sobre [0, 1]: x − 2, sin(4x), x + 2; σ = 0.25, pesos iguales"""
    sd = constant(0.25)
    w = _equal_weights(3)
    return MixtureSpec(
        components=(
            MixtureComponent(mean=linear(-2.0, 1.0), sd=sd, weight=w, label="lower"),
            MixtureComponent(mean=sinusoid(1.0, 4.0), sd=sd, weight=w, label="middle"),
            MixtureComponent(mean=linear(2.0, 1.0), sd=sd, weight=w, label="upper"),
        ),
        name="fig1",
    )


def linear_spec() -> MixtureSpec:
    return MixtureSpec(
        components=(MixtureComponent(mean=linear(1.0, 2.0), sd=constant(0.25), weight=constant(1.0)),),
        name="linear",
    )


def outliers_spec() -> MixtureSpec:
    """Recta 1 + 2x con 20% de outliers desplazados +10"""
    return MixtureSpec(
        components=(
            MixtureComponent(mean=linear(1.0, 2.0), sd=constant(0.1), weight=constant(0.8), label="line"),
            MixtureComponent(mean=linear(11.0, 2.0), sd=constant(0.5), weight=constant(0.2), label="outliers"),
        ),
        name="outliers",
    )


def parallel_spec() -> MixtureSpec:
    """Dos rectas paralelas, 70/30"""
    sd = constant(0.25)
    return MixtureSpec(
        components=(
            MixtureComponent(mean=linear(0.0, 1.0), sd=sd, weight=constant(0.7), label="major"),
            MixtureComponent(mean=linear(3.0, 1.0), sd=sd, weight=constant(0.3), label="minor"),
        ),
        name="parallel",
    )


def sine_spec() -> MixtureSpec:
    """Una rama sinusoidal sobre [−2, 2], pensada para el caso con error de medición"""
    return MixtureSpec(
        components=(MixtureComponent(mean=sinusoid(1.5, 1.5), sd=constant(0.25), weight=constant(1.0)),),
        x_low=-2.0,
        x_high=2.0,
        name="sine",
    )


NAMED_SPECS: Dict[str, Callable[[], MixtureSpec]] = {
    "fig1": fig1_spec,
    "linear": linear_spec,
    "outliers": outliers_spec,
    "parallel": parallel_spec,
    "sine": sine_spec,
}


def named_spec(name: str) -> MixtureSpec:
    try:
        return NAMED_SPECS[name]()
    except KeyError:
        raise ConfigError(f"Mezcla desconocida: {name}. Usa: {', '.join(NAMED_SPECS)}") from None


# ======================================================================
# Generadores
# ======================================================================

def generate_labeled(spec: MixtureSpec, n: int, seed: int) -> Tuple[Sample, np.ndarray]:
    """Como generate, pero devuelve también la componente elegida para cada observación"""
    if n < 1:
        raise ConfigError("n debe ser >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(spec.x_low, spec.x_high, size=n)
    cumulative = np.cumsum(spec.weights(x), axis=0)
    u = rng.random(n)
    labels = np.minimum((u[None, :] >= cumulative).sum(axis=0), len(spec.components) - 1)
    cols = np.arange(n)
    means = spec.means(x)[labels, cols]
    sds = spec.sds(x)[labels, cols]
    y = means + sds * rng.standard_normal(n)
    return Sample(x, y), labels


def generate(spec: MixtureSpec, n: int, seed: int) -> Sample:
    sample, _ = generate_labeled(spec, n, seed)
    return sample


def contaminate(sample: Sample, error: ErrorDistributionSpec, seed: int) -> ContaminatedSample:
    """Wᵢ = Xᵢ + Uᵢ; la respuesta no se toca"""
    if error.scale == 0:
        logger.warning("⚠️ Escala de error 0: W = X")
    rng = np.random.default_rng(seed)
    return ContaminatedSample(sample.x + error.sample(rng, sample.n), sample.y, error)


def censoring_times(spec: CensoringSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    p = spec.params
    if spec.family == "none":
        return np.full(size, np.inf)
    if spec.family == "constant":
        return np.full(size, p[0])
    if spec.family == "uniform":
        if not p[1] > p[0]:
            raise ConfigError("uniform:a:b necesita a < b")
        return rng.uniform(p[0], p[1], size=size)
    if spec.family == "exponential":
        if not p[0] > 0:
            raise ConfigError("La tasa exponencial debe ser positiva")
        return rng.exponential(1.0 / p[0], size=size)
    if not p[1] > 0:
        raise ConfigError("La desviación estándar de la censura debe ser positiva")
    return rng.normal(p[0], p[1], size=size)


def censor(sample: Sample, spec: CensoringSpec, seed: int) -> CensoredSample:
    """Tᵢ = min(Yᵢ, Cᵢ), δᵢ = I(Yᵢ ≤ Cᵢ), con Cᵢ independiente de (Xᵢ, Yᵢ)"""
    rng = np.random.default_rng(seed)
    c = censoring_times(spec, rng, sample.n)
    delta = (sample.y <= c).astype(float)
    t = np.minimum(sample.y, c)
    censored = int(sample.n - delta.sum())
    logger.info(f"📊 Censura '{spec.family}': {censored}/{sample.n} observaciones censuradas")
    return CensoredSample(sample.x, t, delta)


# ======================================================================
# Verdad conocida
# ======================================================================

def _component_terms(spec: MixtureSpec, x: float):
    xs = np.array([float(x)])
    return spec.weights(xs)[:, 0], spec.means(xs)[:, 0], spec.sds(xs)[:, 0]


def mixture_conditional_density(spec: MixtureSpec, x: float, y):
    """p(y | x) de la mezcla"""
    pi, m, s = _component_terms(spec, x)
    y = np.asarray(y, dtype=float)
    z = (y[..., None] - m) / s
    return np.sum(pi * np.exp(-0.5 * z * z) / (s * _SQRT_2PI), axis=-1)


def _mixture_derivatives(pi, m, s, y: float):
    z = (y - m) / s
    phi = np.exp(-0.5 * z * z) / _SQRT_2PI
    return float(np.sum(-pi * z * phi / s ** 2)), float(np.sum(pi * (z * z - 1.0) * phi / s ** 3))


def _true_mode_set(spec: MixtureSpec, x: float, points: int) -> ModeSet:
    pi, m, s = _component_terms(spec, x)
    active = pi > 0
    lo = float(np.min(m[active] - 6 * s[active]))
    hi = float(np.max(m[active] + 6 * s[active]))
    ys = np.linspace(lo, hi, points)
    f = mixture_conditional_density(spec, x, ys)
    peaks = np.flatnonzero((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:])) + 1
    modes: List[Tuple[float, float, float]] = []
    for i in peaks:
        res = optimize.minimize_scalar(
            lambda y: -float(mixture_conditional_density(spec, x, y)),
            bounds=(ys[i - 1], ys[i + 1]),
            method="bounded",
            options={"xatol": 1e-12},
        )
        y = float(res.x)
        _, curv = _mixture_derivatives(pi, m, s, y)
        if curv < 0:
            modes.append((y, float(-res.fun), curv))
    return ModeSet(
        x=x,
        modes=tuple(v[0] for v in modes),
        densities=tuple(v[1] for v in modes),
        curvatures=tuple(v[2] for v in modes),
    )


def true_modes(spec: MixtureSpec, grid, points: int = 4001) -> ModalCurve:
    """Modos locales exactos de p(y | x) por barrido denso + Brent acotado en cada punto de la grilla"""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DataError("La grilla está vacía")
    sets = tuple(_true_mode_set(spec, float(gx), points) for gx in grid)
    return ModalCurve(grid=grid, mode_sets=sets)
