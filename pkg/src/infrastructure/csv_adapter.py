# src/infrastructure/csv_adapter.py
import json
import logging
import math
import os
import sys
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.core.domain import CensoredSample, ContaminatedSample, ModalCurve, ModeSet, Sample
from src.core.errors import ConfigError, DataError, NumericalError
from src.core.ports import AnySample, DataRepository, ErrorDistributionSpec

logger = logging.getLogger(__name__)

# Columnas que lee cada variante (nombre canónico → obligatorio)
REQUIRED_COLUMNS = {
    "standard": ("x", "y"),
    "censored": ("x", "y", "delta"),
    "deconvolution": ("w", "y"),
}


def _format_number(value) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise NumericalError(f"Valor no finito en la salida: {value}")
    text = format(value, ".17g")
    if text in ("-0",):
        text = "0"
    return text


def to_json_text(payload, indent: int = 2, _level: int = 0) -> str:
    """JSON determinista con números en 17 cifras significativas; NaN/Inf → NumericalError"""
    pad = " " * (indent * (_level + 1))
    close = " " * (indent * _level)
    if payload is None:
        return "null"
    if isinstance(payload, (bool, np.bool_)):
        return "true" if payload else "false"
    if isinstance(payload, (int, np.integer)):
        return str(int(payload))
    if isinstance(payload, (float, np.floating)):
        return _format_number(payload)
    if isinstance(payload, str):
        return json.dumps(payload, ensure_ascii=False)
    if isinstance(payload, dict):
        if not payload:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {to_json_text(v, indent, _level + 1)}"
                 for k, v in payload.items()]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(payload, (list, tuple, np.ndarray)):
        values = list(payload)
        if not values:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) or v is None for v in values):
            return "[" + ", ".join(to_json_text(v, indent, _level + 1) for v in values) + "]"
        items = [pad + to_json_text(v, indent, _level + 1) for v in values]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    raise ConfigError(f"Tipo no serializable: {type(payload).__name__}")


class CsvRepository(DataRepository):
    """Lectura de muestras CSV (con encabezado) y escritura de resultados JSON/CSV"""

    def __init__(self, columns: Optional[Dict[str, str]] = None):
        # mapeo opcional nombre canónico → nombre en el archivo
        self.columns = dict(columns or {})

    def _read_frame(self, path: str) -> pd.DataFrame:
        if not os.path.exists(path):
            raise DataError(f"No existe el archivo de entrada: {path}")
        try:
            frame = pd.read_csv(path, sep=",", decimal=".", encoding="utf-8")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise DataError(f"CSV inválido '{path}': {e}") from None
        return frame

    def _column(self, frame: pd.DataFrame, name: str) -> np.ndarray:
        actual = self.columns.get(name, name)
        if actual not in frame.columns:
            raise DataError(f"Falta la columna '{actual}' (columnas: {', '.join(map(str, frame.columns))})")
        values = pd.to_numeric(frame[actual], errors="coerce").to_numpy(dtype=float)
        if np.isnan(values).any():
            raise DataError(f"La columna '{actual}' tiene valores vacíos o no numéricos")
        return values

    def load_sample(self, path: str, variant: str, error: ErrorDistributionSpec = None) -> AnySample:
        frame = self._read_frame(path)
        if variant == "standard":
            sample = Sample(self._column(frame, "x"), self._column(frame, "y"))
        elif variant == "censored":
            sample = CensoredSample(self._column(frame, "x"), self._column(frame, "y"),
                                    self._column(frame, "delta"))
        elif variant == "deconvolution":
            if error is None:
                raise ConfigError("La variante deconvolution necesita la distribución del error")
            name = "w" if self.columns.get("w", "w") in frame.columns else "x"
            if name == "x":
                logger.info("Sin columna 'w': se usa 'x' como covariable contaminada")
            sample = ContaminatedSample(self._column(frame, name), self._column(frame, "y"), error)
        else:
            raise ConfigError(f"Variante no soportada: {variant}")
        logger.info(f"📂 {sample.n} observaciones leídas de {path}")
        return sample

    def load_curve(self, path: str) -> ModalCurve:
        """Curva modal desde la salida JSON de `fit` o desde CSV largo (x, mode_index, y, density)"""
        if path.lower().endswith(".json"):
            return self._curve_from_json(path)
        frame = self._read_frame(path)
        for col in ("x", "mode_index", "y"):
            if col not in frame.columns:
                raise DataError(f"Falta la columna '{col}' en la curva {path}")
        if "curve" in frame.columns:
            frame = frame[frame["curve"] == "multimodal"]
        frame = frame.assign(**{col: pd.to_numeric(frame[col], errors="coerce")
                                for col in ("x", "mode_index", "y", "density") if col in frame.columns})
        if frame["x"].isna().any() or frame["mode_index"].isna().any():
            raise DataError(f"La curva {path} tiene 'x' o 'mode_index' vacíos o no numéricos")
        if frame.loc[frame["mode_index"] >= 0, "y"].isna().any():
            raise DataError(f"La curva {path} tiene modos 'y' vacíos o no numéricos")
        sets = []
        for gx, rows in frame.groupby("x", sort=True):
            rows = rows[rows["mode_index"] >= 0].sort_values("y")
            dens = rows["density"].to_numpy(dtype=float) if "density" in rows else np.full(len(rows), np.nan)
            sets.append(ModeSet(x=float(gx), modes=tuple(rows["y"].to_numpy(dtype=float)),
                                densities=tuple(dens), curvatures=tuple(np.full(len(rows), np.nan))))
        if not sets:
            raise DataError(f"La curva {path} está vacía")
        return ModalCurve(grid=np.array([ms.x for ms in sets]), mode_sets=tuple(sets))

    @staticmethod
    def _mode_set_from_entry(entry) -> ModeSet:
        if not isinstance(entry, dict) or "x" not in entry or "modes" not in entry:
            raise DataError("Cada elemento de 'mode_sets' necesita las claves 'x' y 'modes'")
        try:
            modes = tuple(float(m) for m in entry["modes"])
            nan_fill = [np.nan] * len(modes)
            return ModeSet(
                x=float(entry["x"]),
                modes=modes,
                densities=tuple(float(d) for d in (entry.get("densities") or nan_fill)),
                curvatures=tuple(np.nan if c is None else float(c) for c in (entry.get("curvatures") or nan_fill)),
            )
        except (TypeError, ValueError) as e:
            raise DataError(f"ModeSet inválido en x={entry.get('x')!r}: {e}") from None

    def _curve_from_json(self, path: str) -> ModalCurve:
        try:
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"No se pudo leer la curva '{path}': {e}") from None
        if not isinstance(payload, dict) or not isinstance(payload.get("mode_sets"), list):
            raise DataError(f"'{path}' no contiene una lista 'mode_sets'")
        sets = [self._mode_set_from_entry(entry) for entry in payload["mode_sets"]]
        if not sets:
            raise DataError(f"La curva {path} está vacía")
        response_range = payload.get("response_range")
        if response_range is not None:
            try:
                lo, hi = (float(v) for v in response_range)
            except (TypeError, ValueError):
                raise DataError(f"'response_range' inválido en {path}") from None
            response_range = (lo, hi)
        return ModalCurve(grid=np.array([ms.x for ms in sets]), mode_sets=tuple(sets),
                          response_range=response_range)

    def save_json(self, path: Optional[str], payload: Dict) -> None:
        text = to_json_text(payload) + "\n"
        if path is None or path == "-":
            sys.stdout.write(text)
            return
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        logger.info(f"💾 Resultado guardado en {path}")

    def save_csv(self, path: Optional[str], rows: List[Dict], columns: List[str]) -> None:
        frame = pd.DataFrame(rows, columns=columns)
        target = sys.stdout if path is None or path == "-" else path
        frame.to_csv(target, index=False, float_format="%.17g", lineterminator="\n")
        if target is not sys.stdout:
            logger.info(f"💾 Resultado guardado en {path}")
