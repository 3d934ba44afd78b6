# src/core/errors.py
"""
Jerarquía de errores del paquete.
Cada familia lleva el código de salida que usa la CLI:
  2 = configuración, 3 = datos, 4 = falla numérica
"""


class ModalKitError(Exception):
    """Error base"""
    exit_code: int = 1


class ConfigError(ModalKitError):
    exit_code = 2


class UnsupportedCombinationError(ConfigError):
    """Combinación kernel/error/variante que no tiene estimador válido"""


class VariantMismatchError(ConfigError):
    """Operación llamada sobre un modelo de otra variante"""


class DataError(ModalKitError):
    exit_code = 3


class EmptySetError(DataError):
    pass


class GridMismatchError(DataError):
    pass


class NumericalError(ModalKitError):
    exit_code = 4


class KernelDomainError(NumericalError):
    """Kernel evaluado en un punto no diferenciable"""


class SingularDesignError(NumericalError):
    pass


class DivergedInitializationError(NumericalError):
    """Inicio del meanshift sin peso: denominador cero"""


class TooManyDroppedReplicatesError(NumericalError):
    pass
