# src/infrastructure/executor.py
"""
Ejecución paralela determinista.
Los resultados conservan el orden de entrada, así que el número de hilos
no cambia la salida; las semillas por réplica salen de la semilla raíz.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

import numpy as np
from tqdm import tqdm

from src.config import settings

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = None,
                 desc: str = None, unit: str = "it") -> List[R]:
    items = list(items)
    threads = max(1, int(threads or settings.DEFAULT_THREADS))
    show = settings.SHOW_PROGRESS and desc is not None
    with tqdm(total=len(items), desc=desc, unit=unit, disable=not show) as pbar:
        if threads == 1 or len(items) <= 1:
            results = []
            for item in items:
                results.append(fn(item))
                pbar.update(1)
            return results
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = []
            for result in pool.map(fn, items):
                results.append(result)
                pbar.update(1)
            return results


def spawn_seeds(seed: int, count: int) -> List[np.random.SeedSequence]:
    """Semillas independientes por réplica, derivadas de la semilla raíz"""
    return np.random.SeedSequence(int(seed)).spawn(int(count))


def rngs(seed: int, count: int) -> Iterable[np.random.Generator]:
    return [np.random.default_rng(s) for s in spawn_seeds(seed, count)]
