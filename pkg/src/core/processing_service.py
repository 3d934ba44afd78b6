# src/core/processing_service.py
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.adapters.kernel_adapter import KernelFactory
from src.core.domain import (
    BandwidthChoice,
    CensoringSpec,
    ConfidenceBand,
    ModalCurve,
    ModelConfig,
    PredictionBand,
    RunConfig,
    Sample,
    UnimodalCurve,
)
from src.core.errors import ConfigError
from src.core.ports import AnySample, DataRepository
from src.infrastructure.density_adapter import build_model
from src.services import datagen_service
from src.services.bandwidth_service import BandwidthSelectionService
from src.services.metrics_service import error_report
from src.services.mode_seeking_service import ModeSeekingService
from src.services.uncertainty_service import UncertaintyService

logger = logging.getLogger(__name__)

# Resultado de un subcomando: payload JSON + (filas, columnas) para la salida CSV
CommandResult = Tuple[Dict, List[Dict], List[str]]

DEFAULT_GRID_POINTS = 50


def _finite_or_none(value):
    value = float(value)
    return value if np.isfinite(value) else None


def parse_censoring(text: str) -> CensoringSpec:
    """none | constant:c | uniform:a:b | exponential:rate | normal:mu:sd"""
    family, *params = text.split(":")
    try:
        return CensoringSpec(family=family, params=tuple(float(p) for p in params))
    except ValueError:
        raise ConfigError(f"Censura inválida: {text}") from None


class ModalRegressionService:
    def __init__(self, repository: DataRepository, mode_service: ModeSeekingService = None,
                 bandwidth_service: BandwidthSelectionService = None,
                 uncertainty_service: UncertaintyService = None, threads: int = None):
        # Inyección de Dependencias (Puertos y servicios)
        self._repository = repository
        self._modes = mode_service or ModeSeekingService(threads=threads)
        self._bandwidth = bandwidth_service or BandwidthSelectionService(self._modes, threads=threads)
        self._uncertainty = uncertainty_service or UncertaintyService(self._modes, threads=threads)

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _error(self, cfg: RunConfig):
        if cfg.error_dist is None:
            return None
        return KernelFactory.create_error(cfg.error_dist, cfg.error_scale)

    def _load(self, cfg: RunConfig) -> AnySample:
        return self._repository.load_sample(cfg.input, cfg.model_variant, self._error(cfg))

    @staticmethod
    def _covariates(data: AnySample) -> np.ndarray:
        return data.w if hasattr(data, "w") else data.x

    def _grid(self, cfg: RunConfig, data: AnySample) -> np.ndarray:
        if cfg.grid is not None:
            lo, hi, count = cfg.grid
            return np.linspace(lo, hi, int(count))
        x = self._covariates(data)
        span = x.max() - x.min()
        if span == 0:
            return np.array([float(x[0])])
        return np.linspace(x.min() + 0.02 * span, x.max() - 0.02 * span, DEFAULT_GRID_POINTS)

    def _select_bandwidth(self, cfg: RunConfig, data: AnySample, grid) -> Optional[BandwidthChoice]:
        if cfg.bw_method == "fixed":
            return None
        if cfg.bw_method == "cv":
            return self._bandwidth.cv_conditional_density(data)
        if cfg.bw_method == "simex":
            return self._bandwidth.cv_simex(data, seed=cfg.seed)
        if cfg.bw_method == "predband":
            return self._bandwidth.prediction_band_cv(data, level=cfg.level, folds=cfg.folds, seed=cfg.seed)
        return self._bandwidth.modal_cv_bootstrap(data, seed=cfg.seed, grid=grid)

    def _model_config(self, cfg: RunConfig, choice: Optional[BandwidthChoice]) -> ModelConfig:
        h1, h2 = (choice.h1, choice.h2) if choice is not None else (cfg.h1, cfg.h2)
        return ModelConfig(h1=h1, h2=h2, variant=cfg.model_variant, kernel_x=cfg.kernel_x,
                           kernel_y=cfg.kernel_y, error_family=cfg.error_dist, error_scale=cfg.error_scale)

    # ------------------------------------------------------------------
    # Serialización
    # ------------------------------------------------------------------

    @staticmethod
    def curve_payload(curve: ModalCurve) -> List[Dict]:
        return [
            {
                "x": ms.x,
                "modes": list(ms.modes),
                "densities": list(ms.densities),
                "curvatures": [_finite_or_none(c) for c in ms.curvatures],
                "flags": list(ms.flags),
            }
            for ms in curve.mode_sets
        ]

    @staticmethod
    def curve_rows(curve: ModalCurve, kind: str = "multimodal") -> List[Dict]:
        rows = []
        for ms in curve.mode_sets:
            if ms.is_empty:
                rows.append({"x": ms.x, "mode_index": -1, "y": None, "density": None, "curve": kind})
            for i, (m, d) in enumerate(zip(ms.modes, ms.densities)):
                rows.append({"x": ms.x, "mode_index": i, "y": m, "density": d, "curve": kind})
        return rows

    @staticmethod
    def choice_payload(choice: BandwidthChoice) -> Dict:
        return {
            "method": choice.method,
            "h1": choice.h1,
            "h2": choice.h2,
            "candidates": [list(c) for c in choice.candidates],
            "criterion": [_finite_or_none(c) for c in choice.criterion],
            "details": choice.details,
            "flags": list(choice.flags),
        }

    @staticmethod
    def _band_intervals(grid, intervals) -> Tuple[List[Dict], List[Dict]]:
        payload, rows = [], []
        for gx, iv in zip(grid, intervals):
            payload.append({"x": float(gx), "intervals": [[lo, hi] for lo, hi in iv]})
            for k, (lo, hi) in enumerate(iv):
                rows.append({"x": float(gx), "interval_index": k, "lower": lo, "upper": hi})
        return payload, rows

    # ------------------------------------------------------------------
    # Subcomandos
    # ------------------------------------------------------------------

    def fit(self, cfg: RunConfig) -> CommandResult:
        data = self._load(cfg)
        grid = self._grid(cfg, data)
        choice = self._select_bandwidth(cfg, data, grid)
        model = build_model(data, self._model_config(cfg, choice))
        logger.info(f"🔧 Ajustando curva modal ({model.variant}) en {grid.size} puntos...")
        curve = self._modes.fit_multimodal(model, grid)
        flags = [f"variant:{model.variant}"]
        if curve.empty_points:
            flags.append(f"empty_mode_sets:{len(curve.empty_points)}")
        payload = {
            "command": "fit",
            "variant": model.variant,
            "kernel_x": cfg.kernel_x,
            "kernel_y": cfg.kernel_y,
            "h1": model.h1,
            "h2": model.h2,
            "bandwidth": self.choice_payload(choice) if choice else None,
            "grid": list(curve.grid),
            "response_range": list(curve.response_range),
            "mode_sets": self.curve_payload(curve),
            "flags": flags,
        }
        rows = self.curve_rows(curve)
        if cfg.unimodal:
            uni: UnimodalCurve = self._modes.fit_unimodal(model, grid)
            payload["unimodal"] = {
                "values": [_finite_or_none(v) for v in uni.values],
                "densities": [float(d) for d in uni.densities],
                "flags": list(uni.flags),
            }
            rows += self.curve_rows(ModalCurve.from_unimodal(uni), kind="unimodal")
        logger.info(f"✅ Curva modal lista: {sum(len(ms) for ms in curve.mode_sets)} modos")
        return payload, rows, ["x", "mode_index", "y", "density", "curve"]

    def bandwidth(self, cfg: RunConfig) -> CommandResult:
        data = self._load(cfg)
        choice = self._select_bandwidth(cfg, data, self._grid(cfg, data))
        payload = dict(command="bandwidth", **self.choice_payload(choice))
        rows = [{"h1": a, "h2": b, "criterion": _finite_or_none(c)}
                for (a, b), c in zip(choice.candidates, choice.criterion)]
        return payload, rows, ["h1", "h2", "criterion"]

    def band(self, cfg: RunConfig) -> CommandResult:
        data = self._load(cfg)
        grid = self._grid(cfg, data)
        choice = self._select_bandwidth(cfg, data, grid)
        model_cfg = self._model_config(cfg, choice)
        if cfg.band_type == "confidence":
            result: ConfidenceBand = self._uncertainty.bootstrap_confidence_band(
                data, model_cfg, grid, cfg.bootstrap, cfg.level, cfg.seed)
            intervals, rows = self._band_intervals(result.curve.grid, result.intervals)
            payload = {
                "command": "band",
                "type": "confidence",
                "level": result.level,
                "radius": result.radius,
                "h1": model_cfg.h1,
                "h2": model_cfg.h2,
                "n_dropped": result.n_dropped,
                "intervals": intervals,
                "flags": list(result.flags),
            }
            return payload, rows, ["x", "interval_index", "lower", "upper"]

        train, holdout = self.split_holdout(data, cfg.holdout_fraction, cfg.seed)
        model = build_model(train, model_cfg)
        if cfg.unimodal:
            curve = ModalCurve.from_unimodal(self._modes.fit_unimodal(model, grid))
        else:
            curve = self._modes.fit_multimodal(model, grid)
        result: PredictionBand = self._uncertainty.prediction_band(model, curve, holdout, cfg.level)
        intervals, rows = self._band_intervals(result.grid, result.intervals)
        payload = {
            "command": "band",
            "type": "prediction",
            "curve": "unimodal" if cfg.unimodal else "multimodal",
            "level": result.level,
            "radius": result.radius,
            "size": result.size,
            "h1": model_cfg.h1,
            "h2": model_cfg.h2,
            "intervals": intervals,
            "flags": list(result.flags),
        }
        return payload, rows, ["x", "interval_index", "lower", "upper"]

    @staticmethod
    def split_holdout(data: Sample, fraction: float, seed: int) -> Tuple[Sample, Sample]:
        """Partición aleatoria con semilla en entrenamiento / validación"""
        order = np.random.default_rng(seed).permutation(data.n)
        n_hold = int(round(fraction * data.n))
        if n_hold < 1 or data.n - n_hold < 2:
            raise ConfigError("La partición deja vacío el entrenamiento o la validación")
        return data.take(np.sort(order[n_hold:])), data.take(np.sort(order[:n_hold]))

    def _mixture(self, name_or_path: str):
        if name_or_path in datagen_service.NAMED_SPECS:
            return datagen_service.named_spec(name_or_path)
        return datagen_service.load_mixture_spec(name_or_path)

    def simulate(self, cfg: RunConfig) -> CommandResult:
        spec = self._mixture(cfg.spec)
        sample = datagen_service.generate(spec, cfg.n, cfg.seed)
        censoring = parse_censoring(cfg.censoring)
        error = self._error(cfg)
        if censoring.family != "none" and error is not None:
            raise ConfigError("No se puede censurar y contaminar la misma simulación")
        logger.info(f"🔧 Simulando {cfg.n} observaciones de la mezcla '{spec.name}'...")
        if error is not None:
            contaminated = datagen_service.contaminate(sample, error, cfg.seed + 1)
            columns = {"x": sample.x, "w": contaminated.w, "y": sample.y}
        elif censoring.family != "none":
            censored = datagen_service.censor(sample, censoring, cfg.seed + 1)
            columns = {"x": censored.x, "y": censored.t, "delta": censored.delta}
        else:
            columns = {"x": sample.x, "y": sample.y}
        names = list(columns)
        rows = [dict(zip(names, values)) for values in zip(*columns.values())]
        payload = {"command": "simulate", "spec": spec.name, "n": cfg.n, "seed": cfg.seed,
                   **{k: list(v) for k, v in columns.items()}}
        return payload, rows, names

    def evaluate(self, cfg: RunConfig) -> CommandResult:
        est = self._repository.load_curve(cfg.input)
        if cfg.truth is not None:
            truth = self._repository.load_curve(cfg.truth)
        else:
            truth = datagen_service.true_modes(self._mixture(cfg.spec), est.grid)
        report = error_report(est, truth)
        logger.info(f"📊 MISE={report.mise:.6g}, error uniforme={report.uniform:.6g}")
        payload = {
            "command": "eval",
            "grid": list(report.grid),
            "pointwise": list(report.pointwise),
            "mise": report.mise,
            "uniform": report.uniform,
            "flags": list(report.flags),
        }
        rows = [{"x": x, "error": e} for x, e in zip(report.grid, report.pointwise)]
        return payload, rows, ["x", "error"]

    def run(self, cfg: RunConfig) -> None:
        """Ejecuta el subcomando y escribe la salida por el puerto del repositorio"""
        handlers = {
            "fit": self.fit,
            "bandwidth": self.bandwidth,
            "band": self.band,
            "simulate": self.simulate,
            "eval": self.evaluate,
        }
        payload, rows, columns = handlers[cfg.command](cfg)
        if cfg.format == "json":
            self._repository.save_json(cfg.output, payload)
        else:
            self._repository.save_csv(cfg.output, rows, columns)
