"""
Closed-form sampled sequences and target triples used by the scenarios.

Every field is evaluated exactly at the sample points of the unit cube; no
sequence is obtained by solving anything.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from compactification import AtomRegistry, CompactificationSpec, sphere_spec
from config import SCENARIO_CELLS, SCENARIO_RESOLUTION
from measure_core import DiscreteMeasure, ParametrizedMeasure, SpatialGrid, VectorDiscreteMeasure, lebesgue_grid
from young import SampledSequence, YoungTriple, elementary

logger = logging.getLogger(__name__)

OSCILLATION_JS = (128, 256, 512)
TWO_SCALE_JS = (128,)
CONCENTRATION_JS = (64, 128, 256, 512, 1024)
COUNTER_RING_WEIGHT = 0.01
COUNTER_MAX_I = 6


def _grid(resolution: int, cells: int) -> SpatialGrid:
    return SpatialGrid(resolution, cells, 1)


def _stack(fn: Callable[[np.ndarray, float], np.ndarray], js: Sequence[float], x: np.ndarray,
           direction: Optional[np.ndarray] = None) -> np.ndarray:
    values = np.stack([fn(x, j) for j in js])
    if direction is None:
        return values[:, :, None]
    return values[:, :, None] * np.asarray(direction, dtype=float)[None, None, :]


def square_wave(x: np.ndarray, j: float) -> np.ndarray:
    return np.sign(np.sin(2.0 * np.pi * j * x))


def spike(x: np.ndarray, j: float, x0: float = 0.0) -> np.ndarray:
    """j on (x0, x0 + 1/j), zero elsewhere."""
    return np.where((x > x0) & (x < x0 + 1.0 / j), float(j), 0.0)


def oscillation(js: Sequence[float] = OSCILLATION_JS, resolution: int = SCENARIO_RESOLUTION,
                cells: int = SCENARIO_CELLS) -> SampledSequence:
    """sign(sin 2 pi j x); every cell holds whole periods when j is a multiple of the cell count."""
    grid = _grid(resolution, cells)
    x = grid.sample_measure().points[:, 0]
    return SampledSequence.on_grid(_stack(square_wave, js, x), grid, js)


def two_scale(js: Sequence[float] = TWO_SCALE_JS, resolution: int = SCENARIO_RESOLUTION,
              cells: int = SCENARIO_CELLS) -> SampledSequence:
    """sign(sin 2 pi j x) + sign(sin 8 pi j x) / 2, fibers 1/4 on each of +-1/2, +-3/2."""
    grid = _grid(resolution, cells)
    x = grid.sample_measure().points[:, 0]
    fn = lambda x, j: square_wave(x, j) + 0.5 * square_wave(x, 4 * j)
    return SampledSequence.on_grid(_stack(fn, js, x), grid, js)


def concentration(js: Sequence[float] = CONCENTRATION_JS, resolution: int = SCENARIO_RESOLUTION,
                  cells: int = SCENARIO_CELLS, x0: float = 0.0, direction=None) -> SampledSequence:
    grid = _grid(resolution, cells)
    x = grid.sample_measure().points[:, 0]
    return SampledSequence.on_grid(_stack(lambda x, j: spike(x, j, x0), js, x, direction), grid, js)


def mixed(js: Sequence[float] = OSCILLATION_JS, resolution: int = SCENARIO_RESOLUTION,
          cells: int = SCENARIO_CELLS) -> SampledSequence:
    """square wave plus a spike at 0."""
    grid = _grid(resolution, cells)
    x = grid.sample_measure().points[:, 0]
    return SampledSequence.on_grid(_stack(lambda x, j: square_wave(x, j) + spike(x, j), js, x), grid, js)


def constant(value, js: Sequence[float] = (1.0,), resolution: int = SCENARIO_RESOLUTION,
             cells: int = SCENARIO_CELLS) -> SampledSequence:
    grid = _grid(resolution, cells)
    value = np.atleast_1d(np.asarray(value, dtype=float))
    fields = np.broadcast_to(value, (len(js), resolution, len(value))).copy()
    return SampledSequence.on_grid(fields, grid, js)


def strongly_convergent(value: float, js: Sequence[float], resolution: int = SCENARIO_RESOLUTION,
                        cells: int = SCENARIO_CELLS, spike_at: Optional[float] = None) -> SampledSequence:
    """value + 1/j, optionally plus a spike at ``spike_at``."""
    grid = _grid(resolution, cells)
    x = grid.sample_measure().points[:, 0]

    def fn(x, j):
        out = np.full_like(x, value + 1.0 / j)
        if spike_at is not None:
            out = out + spike(x, j, spike_at)
        return out

    return SampledSequence.on_grid(_stack(fn, js, x), grid, js)


# ---------------------------------------------------------------------------
# counterexample on the logsin compactification

def counter_magnitude(i: int, odd: bool) -> float:
    """|Z_i| with ln(1 + |Z_i|) = pi/2 + 2 pi i (even members) or 3 pi/2 + 2 pi i (odd members)."""
    phase = (1.5 if odd else 0.5) * np.pi + 2.0 * np.pi * i
    return float(np.expm1(phase))


def carved_measure(resolution: int, rho_c: float, ring: float = COUNTER_RING_WEIGHT) -> Tuple[DiscreteMeasure, int, np.ndarray]:
    """
    Lebesgue midpoint grid with an atom of weight rho_c carved at x = 1/2 and
    a ring of two atoms at 1/2 +- 1/(4 resolution) of total weight ring * rho_c.
    The two cells touching 1/2 give up the carved mass.
    """
    base = lebesgue_grid(resolution)
    pts = base.points[:, 0]
    w = base.weights.copy()
    carved = rho_c * (1.0 + ring)
    left = resolution // 2 - 1
    w[left] -= 0.5 * carved
    w[left + 1] -= 0.5 * carved
    if min(w[left], w[left + 1]) < 0:
        raise ValueError("carved mass exceeds the central cells; refine the grid")
    off = 0.25 / resolution
    points = np.concatenate([pts, [0.5, 0.5 - off, 0.5 + off]])
    weights = np.concatenate([w, [rho_c, 0.5 * ring * rho_c, 0.5 * ring * rho_c]])
    centre = len(pts)
    return DiscreteMeasure(points, weights), centre, np.array([centre + 1, centre + 2])


def counterexample(resolution: int = SCENARIO_RESOLUTION, i_values: Sequence[int] = range(1, COUNTER_MAX_I + 1),
                   ring: float = COUNTER_RING_WEIGHT) -> List[Tuple[int, bool, SampledSequence]]:
    """
    Bumps u_j = (phi / int phi dmu) zhat_i e_1 around x = 1/2, alternating
    between the even and odd magnitudes. Each member lives on its own carved
    grid so the central value equals Z_i exactly; u_j dmu has mass |zhat_i|.
    """
    members = []
    for i in i_values:
        if i > COUNTER_MAX_I:
            logger.warning(f"⚠️ counterexample index {i} beyond {COUNTER_MAX_I} overflows; skipped")
            continue
        for odd in (False, True):
            Z = counter_magnitude(i, odd)
            rho_c = 1.0 / ((1.0 + Z) * (1.0 + 0.5 * ring))
            mu, centre, ring_idx = carved_measure(resolution, rho_c, ring)
            u = np.zeros(len(mu))
            u[centre] = Z
            u[ring_idx] = 0.5 * Z
            seq = SampledSequence.from_measure(u[None, :, None], mu, (2 * i + int(odd),))
            members.append((int(i), odd, seq))
    return members


# ---------------------------------------------------------------------------
# mollifiers and measures

def bump(u: np.ndarray) -> np.ndarray:
    """exp(-1 / (1 - u^2)) on (-1, 1), zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


def mollifier_weights(points: np.ndarray, center, eps: float) -> np.ndarray:
    """Product bump in the max norm around ``center``, normalized to unit total weight on ``points``."""
    points = np.atleast_2d(points)
    center = np.asarray(center, dtype=float).reshape(1, -1)
    raw = np.prod(bump((points - center) / eps), axis=1)
    total = raw.sum()
    if total <= 0:
        raise ValueError(f"mollifier of radius {eps} sees no sample point")
    return raw / total


def mollified_point_mass(eps: float, resolution: int = SCENARIO_RESOLUTION, x0: float = 0.5,
                         direction=(1.0,)) -> Tuple[VectorDiscreteMeasure, DiscreteMeasure]:
    """phi_eps * (delta_x0 direction) on the midpoint grid; returns (eta, mu)."""
    mu = lebesgue_grid(resolution)
    w = mollifier_weights(mu.points, [x0], eps)
    return VectorDiscreteMeasure(mu.points, w[:, None] * np.asarray(direction, dtype=float)[None, :]), mu


def rotating_point_mass(eps: float, turns: int = 4, resolution: int = SCENARIO_RESOLUTION,
                        x0: float = 0.5) -> Tuple[VectorDiscreteMeasure, DiscreteMeasure]:
    """Mollified point mass whose direction in R^2 turns ``turns`` times across the bump."""
    mu = lebesgue_grid(resolution)
    w = mollifier_weights(mu.points, [x0], eps)
    theta = np.pi * turns * (mu.points[:, 0] - x0) / eps
    return VectorDiscreteMeasure(mu.points, w[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)), mu


# ---------------------------------------------------------------------------
# targets for the inhomogenization constructions

def fine_grid(K: int, n: int = 1) -> DiscreteMeasure:
    return lebesgue_grid(2 ** K, n)


def singular_target(points, masses, directions, K: int, n: int = 1, spec: Optional[CompactificationSpec] = None,
                    registry: Optional[AtomRegistry] = None) -> YoungTriple:
    """delta_0 fibers on the fine grid plus point masses with single-atom angle fibers."""
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    d = directions.shape[1]
    spec = spec or sphere_spec(d)
    registry = registry or AtomRegistry(spec)
    mu = fine_grid(K, n)
    zero = DiscreteMeasure.dirac(np.zeros(d))
    osc = ParametrizedMeasure(mu.points, tuple(zero for _ in range(len(mu))))
    conc = DiscreteMeasure(np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, n), masses)
    angle = {}
    for i, e in enumerate(directions):
        if conc.weights[i] > 0:
            angle[i] = DiscreteMeasure.dirac([float(registry.atom_for_direction(e))])
    return YoungTriple(osc, mu, conc, angle, spec, registry, {"source": "singular_target"})


def laminate_target(A, B, p: float, K: int, n: int = 1, density: float = 0.0, direction=None,
                    spec: Optional[CompactificationSpec] = None,
                    registry: Optional[AtomRegistry] = None) -> YoungTriple:
    """
    x-independent fibers p delta_A + (1 - p) delta_B, optionally with an
    absolutely continuous concentration of the given density along ``direction``.
    """
    A = np.atleast_1d(np.asarray(A, dtype=float))
    B = np.atleast_1d(np.asarray(B, dtype=float))
    spec = spec or sphere_spec(len(A))
    registry = registry or AtomRegistry(spec)
    mu = fine_grid(K, n)
    fiber = DiscreteMeasure(np.vstack([A, B]), [p, 1.0 - p])
    osc = ParametrizedMeasure(mu.points, tuple(fiber for _ in range(len(mu))))
    conc = DiscreteMeasure(mu.points, density * mu.weights)
    angle: Dict[int, DiscreteMeasure] = {}
    if density > 0:
        atom = DiscreteMeasure.dirac([float(registry.atom_for_direction(direction))])
        angle = {i: atom for i in range(len(mu))}
    return YoungTriple(osc, mu, conc, angle, spec, registry, {"source": "laminate_target"})


def field_target(fn: Callable[[np.ndarray], np.ndarray], K: int, n: int = 1,
                 spec: Optional[CompactificationSpec] = None,
                 registry: Optional[AtomRegistry] = None) -> YoungTriple:
    """Elementary triple of a closed-form field on the fine grid."""
    mu = fine_grid(K, n)
    values = np.asarray(fn(mu.points), dtype=float).reshape(len(mu), -1)
    return elementary(values, mu, spec, registry)
