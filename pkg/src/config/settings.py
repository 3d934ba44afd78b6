import logging
import os
import sys
from dotenv import load_dotenv

# Carga las variables de entorno del archivo .env
load_dotenv()


def _env_bool(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ("1", "true", "yes", "si", "on")


# Nivel de log (DEBUG, INFO, WARNING, ERROR)
LOG_LEVEL: str = os.getenv("MODALKIT_LOG", "WARNING").upper()

# Paralelismo y reproducibilidad
DEFAULT_THREADS: int = int(os.getenv("MODALKIT_THREADS", "1"))
DEFAULT_SEED: int = int(os.getenv("MODALKIT_SEED", "0"))

# Barras de progreso (tqdm) en stderr
SHOW_PROGRESS: bool = _env_bool("MODALKIT_PROGRESS", False)

# Valores por defecto de los algoritmos
# - meanshift parcial: 30 inicios por punto de la grilla, 500 iteraciones
# - EM modal: 20 reinicios, 1000 iteraciones
INIT_COUNT: int = 30
MAX_ITER_MEANSHIFT: int = 500
GRAD_TOL: float = 1e-8
EM_STARTS: int = 20
EM_MAX_ITER: int = 1000
EM_CONV_TOL: float = 1e-8
SIMEX_REPLICATES: int = 20
SIMEX_CANDIDATES: int = 15
MODAL_CV_BOOTSTRAP: int = 50


def configure_logging(level: str = None) -> None:
    """Configura el logging raíz una sola vez (stderr)."""
    level_name = (level or LOG_LEVEL).upper()
    numeric = getattr(logging, level_name, None)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    root = logging.getLogger()
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)
    root.setLevel(numeric)
