"""
Finite discrete measures and the operations the Young-measure lab builds on:
disintegration, pushforward, restriction, Radon-Nikodym splitting against a
reference measure, atomic splitting and the (mu, eta) total variation.

All measures are finite atom lists. Absolutely continuous measures are
represented by grid-cell quadrature weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from config import ATOM_MATCH_TOL, DEDUP_TOL, EPS_SING_FACTOR, TOL_PROB

logger = logging.getLogger(__name__)


class EmptyMeasureError(ValueError):
    """Raised when an operation needs positive total mass."""


class MissingFiberError(ValueError):
    """Raised when a marginal atom has no fiber."""


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def group_labels(points: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Group rows of ``points`` joined by chains of max-abs distance <= ``tol``.

    Exact duplicates are collapsed first; the remaining rows are linked
    through ``cKDTree.query_pairs`` and grouped by connected component.

    Returns
    -------
    labels : (N,) int array
        Group label per row, numbered by first occurrence.
    first : (G,) int array
        Index of the first row of every group, in label order.
    """
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    if n == 1:
        return np.zeros(1, dtype=int), np.zeros(1, dtype=int)
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    m = len(uniq)
    component = np.arange(m)
    if m > 1:
        pairs = cKDTree(uniq).query_pairs(max(float(tol), 0.0), p=np.inf, output_type="ndarray")
        if len(pairs):
            graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m))
            _, component = connected_components(graph, directed=False)
    group = component[inverse]
    _, first = np.unique(group, return_index=True)
    rank = np.argsort(np.argsort(first))
    return rank[group], np.sort(first)


def _merge(points: np.ndarray, weights: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    labels, first = group_labels(points, tol)
    if len(first) == len(points):
        return points, weights
    merged = np.zeros((len(first),) + weights.shape[1:], dtype=float)
    np.add.at(merged, labels, weights)
    return points[first], merged


@dataclass(frozen=True)
class DiscreteMeasure:
    """
    Finite nonnegative measure sum_i w_i delta_{p_i} on R^k.

    Parameters
    ----------
    points : array-like, shape (N, k)
        Support points; a flat sequence is read as N points in R^1.
    weights : array-like, shape (N,)
        Nonnegative masses.
    dedup_tol : float
        Points closer than this (max norm) are merged and their weights summed.
    """

    points: np.ndarray
    weights: np.ndarray
    dedup_tol: float = DEDUP_TOL

    def __post_init__(self):
        pts = _as_points(self.points)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(pts) != len(w):
            raise ValueError(f"points ({len(pts)}) and weights ({len(w)}) differ in length")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts, w = _merge(pts, w, self.dedup_tol)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls, dim: int = 1) -> "DiscreteMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def dirac(cls, point, mass: float = 1.0) -> "DiscreteMeasure":
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), [mass])

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mass(self, mask: Optional[np.ndarray] = None) -> float:
        if mask is None:
            return float(np.sum(self.weights))
        return float(np.sum(self.weights[np.asarray(mask)]))

    def support(self) -> "DiscreteMeasure":
        keep = self.weights > 0
        return DiscreteMeasure(self.points[keep], self.weights[keep], self.dedup_tol)

    def scaled(self, alpha: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, alpha * self.weights, self.dedup_tol)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        return DiscreteMeasure(
            np.vstack([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
            self.dedup_tol,
        )

    def mean(self) -> np.ndarray:
        """First moment divided by the mass."""
        m = self.mass()
        if m <= 0:
            raise EmptyMeasureError("empty measure")
        return self.weights @ self.points / m

    def to_dict(self) -> Dict:
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True)
class VectorDiscreteMeasure:
    """Finite R^d-valued measure sum_i v_i delta_{p_i}."""

    points: np.ndarray
    vweights: np.ndarray
    dedup_tol: float = DEDUP_TOL

    def __post_init__(self):
        pts = _as_points(self.points)
        v = np.asarray(self.vweights, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if len(pts) != len(v):
            raise ValueError(f"points ({len(pts)}) and vweights ({len(v)}) differ in length")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector weights must be finite")
        pts, v = _merge(pts, v, self.dedup_tol)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "vweights", v)

    @classmethod
    def zero(cls, dim: int = 1, target_dim: int = 1) -> "VectorDiscreteMeasure":
        return cls(np.zeros((0, dim)), np.zeros((0, target_dim)))

    @classmethod
    def from_density(cls, density: np.ndarray, mu: DiscreteMeasure) -> "VectorDiscreteMeasure":
        """Vector measure density * mu."""
        density = np.asarray(density, dtype=float)
        if density.ndim == 1:
            density = density.reshape(-1, 1)
        return cls(mu.points, density * mu.weights[:, None], mu.dedup_tol)

    def __len__(self) -> int:
        return len(self.vweights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def target_dim(self) -> int:
        return self.vweights.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.vweights, axis=1)

    def total_variation(self) -> float:
        return float(np.sum(self.norms()))

    def total(self) -> np.ndarray:
        return np.sum(self.vweights, axis=0)

    def scaled(self, alpha: float) -> "VectorDiscreteMeasure":
        return VectorDiscreteMeasure(self.points, alpha * self.vweights, self.dedup_tol)

    def variation_measure(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.points, self.norms(), self.dedup_tol)

    def component(self, k: int) -> np.ndarray:
        return self.vweights[:, k]

    def __add__(self, other: "VectorDiscreteMeasure") -> "VectorDiscreteMeasure":
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        return VectorDiscreteMeasure(
            np.vstack([self.points, other.points]),
            np.vstack([self.vweights, other.vweights]),
            self.dedup_tol,
        )

    def __sub__(self, other: "VectorDiscreteMeasure") -> "VectorDiscreteMeasure":
        return self + other.scaled(-1.0)

    def to_dict(self) -> Dict:
        return {"points": self.points.tolist(), "weights": self.vweights.tolist()}


Measure = Union[DiscreteMeasure, VectorDiscreteMeasure]


@dataclass(frozen=True)
class ProductMeasure:
    """Nonnegative measure on X x Z stored as one DiscreteMeasure on joint coordinates."""

    measure: DiscreteMeasure
    x_dim: int

    def __post_init__(self):
        if not 0 < self.x_dim < self.measure.dim:
            raise ValueError(f"x_dim={self.x_dim} incompatible with joint dimension {self.measure.dim}")

    @property
    def z_dim(self) -> int:
        return self.measure.dim - self.x_dim

    def project_x(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.measure.points[:, : self.x_dim], self.measure.weights)


@dataclass(frozen=True)
class ParametrizedMeasure:
    """
    Family of fibers (nu_x) indexed by spatial cells.

    Every fiber is a probability measure within ``TOL_PROB`` unless
    ``sub_probability`` is set, in which case masses only need to be <= 1.
    """

    cells: np.ndarray
    fibers: Tuple[DiscreteMeasure, ...]
    sub_probability: bool = False

    def __post_init__(self):
        cells = _as_points(self.cells)
        fibers = tuple(self.fibers)
        if len(cells) != len(fibers):
            raise ValueError(f"{len(cells)} cells but {len(fibers)} fibers")
        for i, fiber in enumerate(fibers):
            m = fiber.mass()
            if self.sub_probability:
                if m > 1.0 + TOL_PROB:
                    raise ValueError(f"fiber {i} has mass {m} > 1")
            elif abs(m - 1.0) > TOL_PROB:
                raise ValueError(f"fiber {i} has mass {m}, expected a probability")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "fibers", fibers)

    def __len__(self) -> int:
        return len(self.fibers)

    def index_of(self, x, tol: float = DEDUP_TOL) -> Optional[int]:
        x = np.asarray(x, dtype=float).reshape(-1)
        hits = np.nonzero(np.all(np.abs(self.cells - x) <= tol, axis=1))[0]
        return int(hits[0]) if len(hits) else None

    def fiber_at(self, x) -> DiscreteMeasure:
        idx = self.index_of(x)
        if idx is None:
            raise MissingFiberError(f"no fiber at {np.asarray(x).tolist()}")
        return self.fibers[idx]

    def to_dict(self) -> Dict:
        return {
            "cells": self.cells.tolist(),
            "fibers": [f.to_dict() for f in self.fibers],
            "sub_probability": self.sub_probability,
        }


def disintegrate(pm: ProductMeasure) -> Tuple[DiscreteMeasure, ParametrizedMeasure]:
    """Split a product measure into its X-marginal and probability fibers."""
    m = pm.measure.support()
    if m.mass() <= 0:
        raise EmptyMeasureError("empty measure")
    x = m.points[:, : pm.x_dim]
    z = m.points[:, pm.x_dim:]
    labels, first = group_labels(x, m.dedup_tol)
    marginal_w = np.bincount(labels, weights=m.weights, minlength=len(first))
    order = np.argsort(labels, kind="stable")
    bounds = np.cumsum(np.bincount(labels, minlength=len(first)))[:-1]
    fibers = []
    for g, idx in enumerate(np.split(order, bounds)):
        fibers.append(DiscreteMeasure(z[idx], m.weights[idx] / marginal_w[g], m.dedup_tol))
    marginal = DiscreteMeasure(x[first], marginal_w, m.dedup_tol)
    return marginal, ParametrizedMeasure(x[first], tuple(fibers))


def assemble(marginal: DiscreteMeasure, fibers: ParametrizedMeasure) -> ProductMeasure:
    """Rebuild nu = nu_x d(marginal) from a marginal and its fibers."""
    blocks, weights = [], []
    for x, w in zip(marginal.points, marginal.weights):
        if w <= 0:
            continue
        idx = fibers.index_of(x, marginal.dedup_tol)
        if idx is None:
            raise MissingFiberError(f"missing fiber at marginal atom {x.tolist()}")
        fiber = fibers.fibers[idx]
        blocks.append(np.hstack([np.repeat(x[None, :], len(fiber), axis=0), fiber.points]))
        weights.append(w * fiber.weights)
    if not blocks:
        raise EmptyMeasureError("empty measure")
    joint = DiscreteMeasure(np.vstack(blocks), np.concatenate(weights), marginal.dedup_tol)
    return ProductMeasure(joint, marginal.dim)


def _map_points(points: np.ndarray, fn: Callable, vectorized: bool) -> np.ndarray:
    if len(points) == 0:
        return points
    if vectorized:
        return _as_points(fn(points))
    return _as_points(np.array([np.atleast_1d(fn(p)) for p in points]))


def pushforward(m: Measure, fn: Callable, vectorized: bool = False) -> Measure:
    """Image measure fn#m; mapped atoms that coincide are merged."""
    mapped = _map_points(m.points, fn, vectorized)
    if isinstance(m, VectorDiscreteMeasure):
        return VectorDiscreteMeasure(mapped, m.vweights, m.dedup_tol)
    return DiscreteMeasure(mapped, m.weights, m.dedup_tol)


def restrict(m: Measure, keep, vectorized: bool = False) -> Measure:
    """Restriction to the atoms selected by a boolean mask or a point predicate."""
    if callable(keep):
        if vectorized:
            mask = np.asarray(keep(m.points), dtype=bool)
        else:
            mask = np.array([bool(keep(p)) for p in m.points], dtype=bool)
    else:
        mask = np.asarray(keep, dtype=bool)
    if isinstance(m, VectorDiscreteMeasure):
        return VectorDiscreteMeasure(m.points[mask], m.vweights[mask], m.dedup_tol)
    return DiscreteMeasure(m.points[mask], m.weights[mask], m.dedup_tol)


class RadonNikodym(NamedTuple):
    density: np.ndarray
    singular: VectorDiscreteMeasure
    eps_sing: float


def default_eps_sing(mu: DiscreteMeasure) -> float:
    positive = mu.weights[mu.weights > 0]
    if len(positive) == 0:
        return 0.0
    return EPS_SING_FACTOR * float(np.median(positive))


def radon_nikodym(
    l: VectorDiscreteMeasure, mu: DiscreteMeasure, eps_sing: Optional[float] = None
) -> RadonNikodym:
    """
    Split ``l`` into density * mu plus a singular part.

    Atoms of ``l`` are matched to atoms of ``mu`` within ``ATOM_MATCH_TOL``.
    Matched atoms whose mu-weight exceeds ``eps_sing`` go to the density;
    everything else is singular.
    """
    if eps_sing is None:
        eps_sing = default_eps_sing(mu)
    d = l.target_dim
    density = np.zeros((len(mu), d))
    singular_mask = np.ones(len(l), dtype=bool)
    if len(mu) and len(l):
        tree = cKDTree(mu.points)
        dist, idx = tree.query(l.points, k=1, p=np.inf)
        matched = dist <= ATOM_MATCH_TOL
        heavy = matched & (mu.weights[np.minimum(idx, len(mu) - 1)] > eps_sing)
        if np.any(heavy):
            np.add.at(density, idx[heavy], l.vweights[heavy])
            density /= np.where(mu.weights > 0, mu.weights, 1.0)[:, None]
        singular_mask = ~heavy
    singular = VectorDiscreteMeasure(
        l.points[singular_mask].reshape(-1, l.dim), l.vweights[singular_mask].reshape(-1, d), l.dedup_tol
    )
    return RadonNikodym(density, singular, float(eps_sing))


def atomic_split(m: DiscreteMeasure, atom_threshold: float) -> Tuple[DiscreteMeasure, DiscreteMeasure]:
    if atom_threshold <= 0:
        raise ValueError("atom_threshold must be positive")
    heavy = m.weights >= atom_threshold
    return (
        DiscreteMeasure(m.points[heavy], m.weights[heavy], m.dedup_tol),
        DiscreteMeasure(m.points[~heavy], m.weights[~heavy], m.dedup_tol),
    )


def tv_pair(eta: VectorDiscreteMeasure, mu: DiscreteMeasure, eps_sing: Optional[float] = None) -> float:
    """Total variation of (mu, eta): int sqrt(1+|eta/mu|^2) dmu + |eta^s|(Omega)."""
    rn = radon_nikodym(eta, mu, eps_sing)
    ac = np.sqrt(1.0 + np.sum(rn.density ** 2, axis=1)) @ mu.weights
    return float(ac + rn.singular.total_variation())


def lebesgue_grid(n: int, dim: int = 1) -> DiscreteMeasure:
    """Midpoint quadrature of Lebesgue measure on the unit cube with n cells per axis."""
    mids = (np.arange(n) + 0.5) / n
    if dim == 1:
        pts = mids.reshape(-1, 1)
    else:
        mesh = np.meshgrid(*([mids] * dim), indexing="ij")
        pts = np.stack([g.reshape(-1) for g in mesh], axis=1)
    return DiscreteMeasure(pts, np.full(len(pts), 1.0 / n ** dim))


def boundary_points(n: int, dim: int = 1) -> np.ndarray:
    """Explicit boundary sites of the closed unit cube (endpoints in 1D, face midpoints of boundary cells otherwise)."""
    if dim == 1:
        return np.array([[0.0], [1.0]])
    mids = (np.arange(n) + 0.5) / n
    faces = []
    for axis in range(dim):
        for side in (0.0, 1.0):
            others = np.meshgrid(*([mids] * (dim - 1)), indexing="ij")
            cols = [g.reshape(-1) for g in others]
            cols.insert(axis, np.full(cols[0].shape if cols else (1,), side))
            faces.append(np.stack(cols, axis=1))
    return np.vstack(faces)


def measure_from_dict(data: Dict) -> Measure:
    points = np.asarray(data["points"], dtype=float)
    weights = np.asarray(data["weights"], dtype=float)
    if points.size == 0:
        points = points.reshape(0, 1)
    if weights.ndim == 2:
        return VectorDiscreteMeasure(points, weights)
    return DiscreteMeasure(points, weights)


@dataclass(frozen=True)
class SpatialGrid:
    """Sample grid on the unit cube (midpoint quadrature) aggregated into coarser cells."""

    samples_per_axis: int
    cells_per_axis: int
    dim: int = 1

    def __post_init__(self):
        if self.samples_per_axis % self.cells_per_axis:
            raise ValueError("cells_per_axis must divide samples_per_axis")

    def sample_measure(self) -> DiscreteMeasure:
        return lebesgue_grid(self.samples_per_axis, self.dim)

    def cell_index(self) -> np.ndarray:
        pts = self.sample_measure().points
        idx = np.minimum(np.floor(pts * self.cells_per_axis).astype(int), self.cells_per_axis - 1)
        return np.ravel_multi_index(idx.T, (self.cells_per_axis,) * self.dim)

    def cell_points(self) -> np.ndarray:
        return lebesgue_grid(self.cells_per_axis, self.dim).points

    def boundary(self) -> np.ndarray:
        return boundary_points(self.cells_per_axis, self.dim)
