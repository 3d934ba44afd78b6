# src/adapters/cli_adapter.py
"""
Front end de línea de comandos: fit, bandwidth, band, simulate, eval.
Códigos de salida: 0 ok, 2 configuración, 3 datos, 4 falla numérica.
"""
import argparse
import json
import logging
import sys
from dataclasses import fields
from typing import Dict, List, Optional

from src.config import settings
from src.core.domain import BW_METHODS, CLI_VARIANTS, COMMANDS, RunConfig
from src.core.errors import ConfigError, ModalKitError
from src.core.processing_service import ModalRegressionService
from src.infrastructure.csv_adapter import CsvRepository

logger = logging.getLogger(__name__)

_RUN_FIELDS = {f.name for f in fields(RunConfig)}


class _Parser(argparse.ArgumentParser):
    """argparse que lanza ConfigError en vez de terminar el proceso"""

    def error(self, message):
        raise ConfigError(message)


def _grid(text: str):
    try:
        lo, hi, count = text.split(":")
        return float(lo), float(hi), int(count)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grilla inválida '{text}' (usa min:max:count)") from None


def _columns(text: str) -> Dict[str, str]:
    try:
        return dict(pair.split("=", 1) for pair in text.split(",") if pair)
    except ValueError:
        raise argparse.ArgumentTypeError(f"mapeo de columnas inválido '{text}' (usa x=col,y=col)") from None


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS: en el namespace quedan sólo las opciones que el usuario pasó
    parser = _Parser(prog="modalkit", description="Regresión modal por densidad de kernel",
                     argument_default=argparse.SUPPRESS)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", dest="config_file", help="JSON con las mismas claves que las opciones")
    parser.add_argument("--input")
    parser.add_argument("--output")
    parser.add_argument("--format", choices=("json", "csv"))
    parser.add_argument("--variant", choices=tuple(CLI_VARIANTS))
    parser.add_argument("--columns", type=_columns, help="mapeo x=col,y=col,delta=col,w=col")
    parser.add_argument("--kernel-x", dest="kernel_x")
    parser.add_argument("--kernel-y", dest="kernel_y")
    parser.add_argument("--h1", type=float)
    parser.add_argument("--h2", type=float)
    parser.add_argument("--bw-method", dest="bw_method", choices=BW_METHODS)
    parser.add_argument("--grid", type=_grid, help="min:max:count")
    parser.add_argument("--level", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--error-dist", dest="error_dist", choices=("laplace", "gaussian"))
    parser.add_argument("--error-scale", dest="error_scale", type=float)
    parser.add_argument("--unimodal", action="store_true")
    parser.add_argument("--band-type", dest="band_type", choices=("prediction", "confidence"))
    parser.add_argument("--holdout-fraction", dest="holdout_fraction", type=float)
    parser.add_argument("--bootstrap", type=int)
    parser.add_argument("--folds", type=int)
    parser.add_argument("--truth")
    parser.add_argument("--spec", help="nombre de mezcla (fig1, linear, outliers, parallel, sine) o archivo JSON")
    parser.add_argument("--n", type=int)
    parser.add_argument("--censoring", help="none | constant:c | uniform:a:b | exponential:rate | normal:mu:sd")
    return parser


def _load_config_file(path: str) -> Dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            values = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"No se pudo leer la configuración '{path}': {e}") from None
    if not isinstance(values, dict):
        raise ConfigError("El archivo de configuración debe ser un objeto JSON")
    values = {k.replace("-", "_"): v for k, v in values.items()}
    unknown = set(values) - (_RUN_FIELDS - {"command"})
    if unknown:
        raise ConfigError(f"Claves desconocidas en la configuración: {', '.join(sorted(unknown))}")
    if isinstance(values.get("grid"), str):
        values["grid"] = _grid(values["grid"])
    elif values.get("grid") is not None:
        values["grid"] = tuple(values["grid"])
    return values


def parse_run_config(argv: Optional[List[str]] = None) -> RunConfig:
    """Valores por defecto ← archivo --config ← opciones explícitas"""
    given = vars(build_parser().parse_args(argv))
    values = {"seed": settings.DEFAULT_SEED, "threads": settings.DEFAULT_THREADS}
    config_file = given.pop("config_file", None)
    if config_file:
        values.update(_load_config_file(config_file))
    values.update(given)
    try:
        return RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def _write_error(error: Exception, exit_code: int) -> None:
    payload = {"error": type(error).__name__, "message": str(error), "exit_code": exit_code}
    sys.stderr.write(json.dumps(payload, ensure_ascii=False) + "\n")


def run(argv: Optional[List[str]] = None) -> int:
    """Orquesta una corrida de la CLI y devuelve el código de salida"""
    settings.configure_logging()
    try:
        cfg = parse_run_config(argv)
        processor = ModalRegressionService(
            repository=CsvRepository(cfg.columns),
            threads=cfg.threads,
        )
        logger.info(f"🚀 modalkit {cfg.command} (variante {cfg.variant}, semilla {cfg.seed})")
        processor.run(cfg)
    except ModalKitError as e:
        logger.error(f"❌ {e}")
        _write_error(e, e.exit_code)
        return e.exit_code
    except SystemExit as e:
        # --help
        return int(e.code or 0)
    logger.info("✅ Listo")
    return 0
