"""Quantile-function representation of probability measures on the line.

A measure is stored as ``n`` equal-mass atoms located at the values of its
nondecreasing pseudo-inverse on the cell midpoints of ``[0, 1]``.  In this
representation the 2-Wasserstein distance is exactly the grid L2 distance
between quantile vectors.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridMismatch, LengthMismatch, NonFinite, NotSorted


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform mass grid with ``n`` cells on ``[0, 1]``."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs an integer n >= 2, got {self.n!r}")

    @cached_property
    def nodes(self):
        # (2i + 1) / (2n): cell midpoints, computed as exactly as possible
        return _frozen((2.0 * np.arange(self.n) + 1.0) / (2.0 * self.n))

    @cached_property
    def centered_nodes(self):
        """``2 * eta_i - 1`` evaluated as ``(2i + 1 - n) / n`` (exact numerator)."""
        return _frozen((2.0 * np.arange(self.n) + 1.0 - self.n) / self.n)

    @property
    def spacing(self):
        return 1.0 / self.n


@dataclass(frozen=True, eq=False)
class QuantileMeasure:
    grid: Grid
    chi: np.ndarray

    def __post_init__(self):
        chi = np.asarray(self.chi, dtype=float)
        if chi.shape != (self.grid.n,):
            raise LengthMismatch(f"chi has shape {chi.shape}, grid has {self.grid.n} cells")
        if not np.all(np.isfinite(chi)):
            raise NonFinite("quantile values must be finite")
        if np.any(chi[1:] < chi[:-1]):
            bad = int(np.argmax(chi[1:] < chi[:-1]))
            raise NotSorted(f"quantile function decreases at index {bad}")
        object.__setattr__(self, "chi", _frozen(chi))

    @property
    def n(self):
        return self.grid.n


@dataclass(frozen=True)
class Cluster:
    start: int
    stop: int
    position: float
    mass: float


@dataclass(frozen=True, eq=False)
class ClusterPartition:
    """Ordered maximal flat runs of a quantile vector.

    ``starts``/``stops`` are 0-based half-open index ranges into the grid.
    """

    grid: Grid
    starts: np.ndarray
    stops: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=np.int64)
        stops = np.asarray(self.stops, dtype=np.int64)
        if starts.size == 0 or starts[0] != 0 or stops[-1] != self.grid.n:
            raise ValueError("clusters must cover the whole grid")
        if np.any(stops[:-1] != starts[1:]) or np.any(stops <= starts):
            raise ValueError("cluster ranges must be contiguous and nonempty")
        pos = np.asarray(self.positions, dtype=float)
        if pos.shape != starts.shape:
            raise LengthMismatch("one position per cluster required")
        if np.any(np.diff(pos) <= 0):
            raise NotSorted("cluster positions must be strictly increasing")
        starts.setflags(write=False)
        stops.setflags(write=False)
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "stops", stops)
        object.__setattr__(self, "positions", _frozen(pos))

    def __len__(self):
        return self.starts.size

    @property
    def sizes(self):
        return self.stops - self.starts

    @property
    def masses(self):
        return self.sizes / self.grid.n

    def __iter__(self):
        for a, b, x in zip(self.starts, self.stops, self.positions):
            yield Cluster(int(a), int(b), float(x), (b - a) / self.grid.n)

    def expand(self, values):
        """Broadcast one value per cluster back onto the grid cells."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.starts.shape:
            raise LengthMismatch("one value per cluster required")
        return np.repeat(values, self.sizes)

    def to_measure(self):
        return QuantileMeasure(self.grid, self.expand(self.positions))


def from_sorted_positions(positions, grid=None):
    """Build the empirical measure with weights ``1/n`` on ``positions``."""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 1:
        raise LengthMismatch("positions must be one-dimensional")
    grid = grid or Grid(positions.size)
    return QuantileMeasure(grid, positions)


def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatch(f"grids differ: n={a.grid.n} vs n={b.grid.n}")


def wasserstein2_squared(a, b):
    _same_grid(a, b)
    diff = a.chi - b.chi
    return float(np.mean(diff * diff))


def wasserstein2(a, b):
    """Exact W2 between two quantile measures on the same grid."""
    return float(np.sqrt(wasserstein2_squared(a, b)))


def wasserstein_derivative(a, b):
    """Time derivative of W2^2 along two Lagrangian states.

    ``a`` and ``b`` are ``LagrangianState`` objects (anything with
    ``.measure`` and ``.v``).
    """
    _same_grid(a.measure, b.measure)
    return float(2.0 * np.mean((a.measure.chi - b.measure.chi) * (a.v - b.v)))


def default_cluster_tol(chi):
    return 1e-12 * max(1.0, float(np.max(np.abs(chi))))


def clusters(m, tol=None):
    """Group maximal runs with consecutive gaps ``<= tol`` into clusters."""
    chi = m.chi
    tol = default_cluster_tol(chi) if tol is None else tol
    breaks = np.flatnonzero(np.diff(chi) > tol) + 1
    starts = np.concatenate(([0], breaks))
    stops = np.concatenate((breaks, [chi.size]))
    pos = np.add.reduceat(chi, starts) / (stops - starts)
    lo = np.minimum.reduceat(chi, starts)
    flat = lo == np.maximum.reduceat(chi, starts)
    pos[flat] = lo[flat]
    return ClusterPartition(m.grid, starts, stops, pos)


def project(p, zeta):
    """Average ``zeta`` over every cluster of ``p`` (the projection onto H_chi)."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (p.grid.n,):
        raise LengthMismatch(f"expected {p.grid.n} values, got shape {zeta.shape}")
    means = np.add.reduceat(zeta, p.starts) / p.sizes
    # constant blocks keep their value bit-for-bit, so projecting twice is exact
    lo = np.minimum.reduceat(zeta, p.starts)
    flat = lo == np.maximum.reduceat(zeta, p.starts)
    means[flat] = lo[flat]
    return p.expand(means)


def moments(m):
    """Center of mass and second moment."""
    return float(np.mean(m.chi)), float(np.mean(m.chi * m.chi))
