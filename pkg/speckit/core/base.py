from abc import ABC, abstractmethod
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


class SpreadFunction(ABC):
    """Abstract base class for instrument spread functions."""

    @abstractmethod
    def width(self, wavelength: ArrayLike) -> ArrayLike:
        """Full width at half maximum at the given measured wavelength."""
        pass

    @abstractmethod
    def kernel(self, wavelength: ArrayLike, wavelength_prime: ArrayLike) -> ArrayLike:
        """Kernel value K(lambda, lambda')."""
        pass

    def peak(self, wavelength: ArrayLike) -> ArrayLike:
        """Kernel value at lambda' = lambda."""
        return self.kernel(wavelength, wavelength)
