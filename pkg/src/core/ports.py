# src/core/ports.py
from abc import ABC, abstractmethod
from typing import Dict, List, Union

import numpy as np

from .domain import CensoredSample, ContaminatedSample, ModalCurve, Sample


# Puerto para kernels univariados (KernelSpec)
class KernelSpec(ABC):
    family: str = ""

    @abstractmethod
    def eval(self, u):
        """K(u), vectorizado"""
        pass

    @abstractmethod
    def deriv1(self, u):
        pass

    @abstractmethod
    def deriv2(self, u):
        pass

    @abstractmethod
    def characteristic(self, s):
        """φ_K(s) = ∫ e^{isu} K(u) du"""
        pass

    @property
    @abstractmethod
    def support(self) -> float:
        """Soporte efectivo [−a, a] para cuadraturas"""
        pass


# Puerto para la distribución del error de medición (ErrorDistributionSpec)
class ErrorDistributionSpec(ABC):
    family: str = ""
    scale: float = 0.0

    @abstractmethod
    def characteristic(self, s):
        """φ_U(s)"""
        pass

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        pass


# Puerto para el estimador de la densidad conjunta
class DensityModel(ABC):
    variant: str = ""
    h1: float
    h2: float

    @abstractmethod
    def covariate_weights(self, x: float) -> np.ndarray:
        """Coeficientes aᵢ(x) tales que p̂(x, y) = Σᵢ aᵢ(x) K₂((Yᵢ − y)/h₂)"""
        pass

    @property
    @abstractmethod
    def responses(self) -> np.ndarray:
        pass

    @abstractmethod
    def density(self, x: float, y):
        pass

    @abstractmethod
    def density_dy(self, x: float, y):
        pass

    @abstractmethod
    def density_dyy(self, x: float, y):
        pass


# Puerto para lectura/escritura de datos (IRepository)
AnySample = Union[Sample, CensoredSample, ContaminatedSample]


class DataRepository(ABC):
    @abstractmethod
    def load_sample(self, path: str, variant: str, error: ErrorDistributionSpec = None) -> AnySample:
        pass

    @abstractmethod
    def load_curve(self, path: str) -> ModalCurve:
        pass

    @abstractmethod
    def save_json(self, path: str, payload: Dict) -> None:
        pass

    @abstractmethod
    def save_csv(self, path: str, rows: List[Dict], columns: List[str]) -> None:
        pass
