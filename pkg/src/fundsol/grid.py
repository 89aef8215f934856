"""Uniform spatial grids and complex samples on them."""

from dataclasses import dataclass, field

import numpy as np

from fundsol.errors import ResolutionError


@dataclass
class GridFunction:
    """Complex samples on the centered lattice x_j = (j - N/2) * dx, dx = 2 * extent / N, per axis.

    With a carrier xi0 the samples are the envelope v of u(x) = e^{i <xi0, x>} v(x).
    """

    n: int
    points_per_axis: int
    extent: float
    samples: np.ndarray
    error: np.ndarray | None = field(default=None, repr=False)
    carrier: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.extent <= 0.0:
            raise ResolutionError(f"Grid extent must be positive, got {self.extent}")
        if self.carrier is not None and len(self.carrier) != self.n:
            raise ValueError(f"Carrier {self.carrier} does not have n = {self.n} components")
        self.samples = np.asarray(self.samples, dtype=complex).reshape((self.points_per_axis,) * self.n)

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.n

    def axis(self) -> np.ndarray:
        return (np.arange(self.points_per_axis) - self.points_per_axis // 2) * self.spacing

    def coordinates(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis()] * self.n), indexing="ij")

    def index_of(self, x) -> tuple[int, ...]:
        """Lattice index of the grid point nearest to x."""
        return tuple(int(round(xi / self.spacing)) + self.points_per_axis // 2 for xi in np.atleast_1d(x))

    def with_samples(self, samples: np.ndarray) -> "GridFunction":
        return GridFunction(self.n, self.points_per_axis, self.extent, samples, carrier=self.carrier)
