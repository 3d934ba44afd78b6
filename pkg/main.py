# main.py
import sys

from src.adapters.cli_adapter import run


def run_processor(argv=None) -> int:
    """Punto de entrada de la CLI (ver `python main.py --help`)."""
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(run_processor())
