"""
Bounded-Lipschitz (Kantorovich) distance between finite discrete measures.

    ||m1 - m2||_K = max sum_i phi_i (m1_i - m2_i)
                    s.t. |phi_i| <= s, phi_i - phi_j <= L d_ij, s + L <= 1

solved exactly with scipy's HiGHS backend. The LP lives on the support of
m1 - m2 only: a feasible phi on the support extends to the whole space
(McShane extension clipped at s) without changing the objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from compactification import CompactificationSpec, metric_matrix
from config import LP_MAX_POINTS, LP_METRIC_TOL
from measure_core import DiscreteMeasure, group_labels

logger = logging.getLogger(__name__)


class TransportSolverError(RuntimeError):
    """LP backend did not reach an optimal solution."""


@dataclass(frozen=True)
class FiniteMetricSpace:
    points: np.ndarray
    dist: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        dist = np.asarray(self.dist, dtype=float)
        if dist.shape != (len(pts), len(pts)):
            raise ValueError(f"distance matrix {dist.shape} does not match {len(pts)} points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dist", dist)

    @classmethod
    def euclidean(cls, points) -> "FiniteMetricSpace":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        return cls(pts, np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2))

    def __len__(self) -> int:
        return len(self.points)

    def validate(self, tol: float = LP_METRIC_TOL):
        d = self.dist
        if np.max(np.abs(d - d.T), initial=0.0) > tol:
            raise ValueError("metric violation: distance matrix not symmetric")
        if np.max(np.abs(np.diag(d)), initial=0.0) > tol:
            raise ValueError("metric violation: nonzero diagonal")
        if np.any(d < -tol):
            raise ValueError("metric violation: negative distance")
        for k in range(len(d)):
            excess = d - (d[:, k][:, None] + d[k, :][None, :])
            worst = float(np.max(excess))
            if worst > tol:
                raise ValueError(f"metric violation: triangle inequality fails by {worst:.3g} through point {k}")

    def locate(self, points, tol: float = LP_METRIC_TOL) -> np.ndarray:
        """Index of every row of ``points`` in the space; raises if a point is missing."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.points.shape[1])
        gaps = np.max(np.abs(pts[:, None, :] - self.points[None, :, :]), axis=2)
        idx = np.argmin(gaps, axis=1)
        if len(pts) and np.max(gaps[np.arange(len(pts)), idx]) > tol:
            raise ValueError("measure support not embedded in the metric space")
        return idx


@dataclass(frozen=True)
class TransportResult:
    value: float
    iterations: int
    duality_gap: float
    status: int
    n_support: int

    def to_dict(self) -> Dict:
        return {"value": self.value, "iterations": self.iterations, "duality_gap": self.duality_gap,
                "status": self.status, "n_support": self.n_support}


def _constraints(dist: np.ndarray):
    n = len(dist)
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    m = len(ii)
    # phi_i - phi_j - L d_ij <= 0 for every ordered pair i != j
    rows = np.concatenate([np.arange(m), np.arange(m), np.arange(m)])
    cols = np.concatenate([ii, jj, np.full(m, n + 1)])
    vals = np.concatenate([np.ones(m), -np.ones(m), -dist[ii, jj]])
    pair_block = sparse.coo_matrix((vals, (rows, cols)), shape=(m, n + 2))
    eye = sparse.identity(n, format="coo")
    s_col = sparse.coo_matrix((-np.ones(n), (np.arange(n), np.full(n, n))), shape=(n, n + 2))
    upper = sparse.hstack([eye, sparse.coo_matrix((n, 2))]) + s_col
    lower = sparse.hstack([-eye, sparse.coo_matrix((n, 2))]) + s_col
    budget = sparse.coo_matrix(([1.0, 1.0], ([0, 0], [n, n + 1])), shape=(1, n + 2))
    blocks = [upper, lower, pair_block, budget] if m else [upper, lower, budget]
    A = sparse.vstack(blocks).tocsr()
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    return A, b


def kantorovich_norm(delta: np.ndarray, dist: np.ndarray, method: str = "highs") -> TransportResult:
    """Solve the bounded-Lipschitz dual LP for a signed weight vector on a finite metric space."""
    delta = np.asarray(delta, dtype=float).reshape(-1)
    dist = np.asarray(dist, dtype=float)
    support = np.nonzero(delta != 0.0)[0]
    if len(support) == 0:
        return TransportResult(0.0, 0, 0.0, 0, 0)
    if len(support) > LP_MAX_POINTS:
        raise ValueError(f"{len(support)} support points exceed LP_MAX_POINTS = {LP_MAX_POINTS}")
    d = delta[support]
    sub = dist[np.ix_(support, support)]
    n = len(d)
    A, b = _constraints(sub)
    c = np.concatenate([-d, [0.0, 0.0]])
    bounds = [(None, None)] * n + [(0.0, None), (0.0, None)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method=method)
    if res.status != 0:
        raise TransportSolverError(f"LP status {res.status}: {res.message}")
    gap = float("nan")
    marginals = getattr(getattr(res, "ineqlin", None), "marginals", None)
    if marginals is not None:
        gap = abs(float(res.fun) - float(b @ marginals))
    return TransportResult(float(-res.fun), int(getattr(res, "nit", 0) or 0), gap, int(res.status), n)


def solve_lip_dual(m1: DiscreteMeasure, m2: DiscreteMeasure,
                   space: Optional[FiniteMetricSpace] = None) -> TransportResult:
    """Align two measures on a common finite metric space and solve the LP."""
    if m1.dim != m2.dim and len(m1) and len(m2):
        raise ValueError(f"measures live in R^{m1.dim} and R^{m2.dim}")
    dim = m1.dim if len(m1) else m2.dim
    pts = np.vstack([m1.points.reshape(-1, dim), m2.points.reshape(-1, dim)])
    signed = np.concatenate([m1.weights, -m2.weights])
    if space is None:
        labels, first = group_labels(pts, LP_METRIC_TOL)
        delta = np.bincount(labels, weights=signed, minlength=len(first))
        space = FiniteMetricSpace.euclidean(pts[first])
    else:
        idx = space.locate(pts)
        delta = np.bincount(idx, weights=signed, minlength=len(space))
    return kantorovich_norm(delta, space.dist)


def lip_dual_distance(m1: DiscreteMeasure, m2: DiscreteMeasure, space: Optional[FiniteMetricSpace] = None) -> float:
    return solve_lip_dual(m1, m2, space).value


def two_point_value(t: float) -> float:
    """Closed form of ||delta_x - delta_y||_K at distance t."""
    return 2.0 * t / (2.0 + t)


def metric_space_from_spec(points, spec: CompactificationSpec) -> FiniteMetricSpace:
    """Finite subspace of the compactification metric on ball-coordinate points."""
    dist = metric_matrix(points, spec)
    np.fill_diagonal(dist, 0.0)
    space = FiniteMetricSpace(points, dist)
    space.validate()
    return space
