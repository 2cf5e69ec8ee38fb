"""Empirical measures on R^d and finite mixtures of them.

A labeled dataset is a :class:`MetaMeasure`: one :class:`PointCloud` per
class, together with the mixture weight of each class.  All values are
immutable; operations return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidWeights, ShapeMismatch

# weights further than this from summing to one are rejected, closer ones renormalized
ROUNDOFF = 1e-14
WEIGHT_TOLERANCE = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _probability_vector(weights, size: int, what: str) -> np.ndarray:
    if weights is None:
        return np.full(size, 1.0 / size)
    w = np.array(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != size:
        raise InvalidWeights(f"{what}: expected {size} weights, got {w.shape[0]}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidWeights(f"{what}: weights must be finite and non-negative")
    total = w.sum()
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise InvalidWeights(f"{what}: weights sum to {total!r}, not 1")
    if np.all(w == w[0]):
        return np.full(size, 1.0 / size)
    # only rescale beyond round-off so that re-validation is idempotent
    if abs(total - 1.0) > ROUNDOFF:
        w = w / total
    return w


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Weighted empirical measure ``sum_i w_i delta_{x_i}`` on R^d."""

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights=None):
        x = np.array(points, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ShapeMismatch(f"points must be an (n, d) array with n, d >= 1, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("point coordinates must be finite")
        w = _probability_vector(weights, x.shape[0], "point cloud")
        object.__setattr__(self, "points", _frozen(x))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def moved(self, points) -> "PointCloud":
        return PointCloud(points, self.weights)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None

    def __repr__(self):
        return f"PointCloud(n={self.n}, d={self.d})"


@dataclass(frozen=True, eq=False)
class MetaMeasure:
    """Weighted mixture ``sum_c w_c delta_{mu_c}`` of point clouds sharing one dimension."""

    clouds: tuple
    mix_weights: np.ndarray

    def __init__(self, clouds: Iterable[PointCloud], mix_weights=None):
        clouds = tuple(c if isinstance(c, PointCloud) else PointCloud(c) for c in clouds)
        if not clouds:
            raise ShapeMismatch("a MetaMeasure needs at least one cloud")
        dims = {c.d for c in clouds}
        if len(dims) > 1:
            raise DimensionMismatch(f"clouds disagree on the ambient dimension: {sorted(dims)}")
        w = _probability_vector(mix_weights, len(clouds), "mixture")
        object.__setattr__(self, "clouds", clouds)
        object.__setattr__(self, "mix_weights", _frozen(w))

    @classmethod
    def from_array(cls, points, mix_weights=None) -> "MetaMeasure":
        """Build from a (C, n, d) array of uniformly weighted clouds."""
        arr = np.asarray(points, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeMismatch(f"expected a (C, n, d) array, got shape {arr.shape}")
        return cls([PointCloud(a) for a in arr], mix_weights)

    @property
    def C(self) -> int:
        return len(self.clouds)

    @property
    def d(self) -> int:
        return self.clouds[0].d

    @property
    def sizes(self) -> tuple:
        return tuple(c.n for c in self.clouds)

    @property
    def is_regular(self) -> bool:
        """True when every cloud is uniform and all clouds have the same size."""
        return len(set(self.sizes)) == 1 and all(c.is_uniform for c in self.clouds)

    def as_array(self) -> np.ndarray:
        if len(set(self.sizes)) != 1:
            raise ShapeMismatch("clouds have different sizes; no (C, n, d) view exists")
        return np.stack([c.points for c in self.clouds])

    def with_points(self, point_arrays: Sequence) -> "MetaMeasure":
        if len(point_arrays) != self.C:
            raise ShapeMismatch(f"expected {self.C} point arrays, got {len(point_arrays)}")
        return MetaMeasure([c.moved(p) for c, p in zip(self.clouds, point_arrays)], self.mix_weights)

    def with_weights(self, mix_weights) -> "MetaMeasure":
        return MetaMeasure(self.clouds, mix_weights)

    def reordered(self, order: Sequence[int]) -> "MetaMeasure":
        order = list(order)
        return MetaMeasure([self.clouds[i] for i in order], self.mix_weights[order])

    def __eq__(self, other):
        if not isinstance(other, MetaMeasure):
            return NotImplemented
        return (self.C == other.C
                and np.array_equal(self.mix_weights, other.mix_weights)
                and all(a == b for a, b in zip(self.clouds, other.clouds)))

    __hash__ = None

    def __repr__(self):
        return f"MetaMeasure(C={self.C}, sizes={self.sizes}, d={self.d})"


class Displacement:
    """One (n_c, d) vector field per cloud of a MetaMeasure."""

    __slots__ = ("fields",)

    def __init__(self, fields: Iterable):
        arrays = []
        for f in fields:
            a = np.array(f, dtype=np.float64)
            if a.ndim != 2:
                raise ShapeMismatch(f"each field must be an (n, d) array, got shape {a.shape}")
            arrays.append(_frozen(a))
        self.fields = tuple(arrays)

    @classmethod
    def zeros_like(cls, P: MetaMeasure) -> "Displacement":
        return cls(np.zeros_like(c.points) for c in P.clouds)

    def check_compatible(self, P: MetaMeasure) -> None:
        if len(self.fields) != P.C:
            raise ShapeMismatch(f"displacement has {len(self.fields)} fields, measure has {P.C} clouds")
        for c, (f, cloud) in enumerate(zip(self.fields, P.clouds)):
            if f.shape != cloud.points.shape:
                raise ShapeMismatch(f"cloud {c}: field shape {f.shape} != points shape {cloud.points.shape}")

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(f)) for f in self.fields)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(f))) for f in self.fields)

    def __add__(self, other: "Displacement") -> "Displacement":
        return Displacement(a + b for a, b in zip(self.fields, other.fields))

    def __sub__(self, other: "Displacement") -> "Displacement":
        return Displacement(a - b for a, b in zip(self.fields, other.fields))

    def __mul__(self, scale: float) -> "Displacement":
        return Displacement(scale * a for a in self.fields)

    __rmul__ = __mul__

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, c):
        return self.fields[c]

    def __repr__(self):
        return f"Displacement(shapes={[f.shape for f in self.fields]})"


def new_meta_measure(clouds: Sequence[PointCloud], mix_weights) -> MetaMeasure:
    """Validate clouds and weights into a MetaMeasure (weights renormalized within 1e-9)."""
    return MetaMeasure(clouds, mix_weights)


def displace(P: MetaMeasure, V: Displacement, scale: float) -> MetaMeasure:
    """Move every particle: ``x <- x + scale * V(x)``. Weights are untouched."""
    V.check_compatible(P)
    if not V.is_finite():
        raise ValueError("displacement contains non-finite entries")
    # overflow is reported by PointCloud's finiteness check
    with np.errstate(over="ignore", invalid="ignore"):
        moved = [c.points + scale * f for c, f in zip(P.clouds, V.fields)]
    return P.with_points(moved)
