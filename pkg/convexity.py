"""
Quasiconvexity numerics on 2x2 matrices.

Matrices are stored row-major as vectors (F11, F12, F21, F22). The
lamination envelope computes the rank-one convex envelope R f on a box
grid. It is an upper bound of the quasiconvex envelope, so lower-bound
statements about Q f are only corroborated, never proved, by it.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator

from compactification import AtomRegistry, CompactificationSpec, sphere_spec
from config import (
    ENVELOPE_CLAMP_WARN,
    ENVELOPE_MAX_ITERS,
    ENVELOPE_NODES,
    ENVELOPE_TOL_FACTOR,
    POW3_MAX_EXPONENT,
    TOL_JENSEN,
)
from integrand_catalog import get_battery
from measure_core import DiscreteMeasure
from transform import Integrand, upper_recession
from young import IntegrandNotContinuousError, boundary_value

logger = logging.getLogger(__name__)

ROOTS = ((1, 0), (0, 1), (1, 1), (1, -1))
STENCILS = ((1, 1), (2, 2), (3, 3), (4, 4), (1, 3), (3, 1), (1, 2), (2, 1))
PAD = 4
IDENTITY = np.array([1.0, 0.0, 0.0, 1.0])


def _conformal_part(z: np.ndarray) -> np.ndarray:
    return np.abs(z[:, 0] - z[:, 3]) + np.abs(z[:, 1] + z[:, 2])


def muller_gk(k: float) -> Integrand:
    """g_k(F) = |F11 - F22| + |F12 + F21| + (2k - |tr F|)^+."""
    if k <= 0:
        raise ValueError("k must be positive")
    k = float(k)
    return Integrand(
        func=lambda z, x: _conformal_part(z) + np.maximum(0.0, 2.0 * k - np.abs(z[:, 0] + z[:, 3])),
        p=1,
        growth_C=max(2.0 * np.sqrt(2.0), 2.0 * k),
        label=f"muller_gk:{k:g}",
        dim=4,
        recession=_conformal_part,
    )


def conformal_minorant() -> Integrand:
    """|F11 - F22| + |F12 + F21|, a convex minorant of every g_k and g_Lambda."""
    return Integrand(func=lambda z, x: _conformal_part(z), p=1, growth_C=2.0, label="conformal", dim=4,
                     recession=_conformal_part, homogeneous=True)


@dataclass(frozen=True)
class IndexSet:
    """Finite subset of {0..n_max}; both it and its complement must be nonempty."""

    members: Tuple[int, ...]
    n_max: int = POW3_MAX_EXPONENT

    def __post_init__(self):
        members = tuple(sorted({int(m) for m in self.members}))
        if not members:
            raise ValueError("index set is empty")
        if members[0] < 0 or members[-1] > self.n_max:
            raise ValueError(f"members must lie in 0..{self.n_max}")
        if len(members) == self.n_max + 1:
            raise ValueError("complement is empty below N_max")
        object.__setattr__(self, "members", members)

    @classmethod
    def parse(cls, text: str) -> "IndexSet":
        """'1,2,5' or '1,2,5/40'."""
        body, _, horizon = text.partition("/")
        members = [int(v) for v in body.split(",") if v.strip()]
        return cls(tuple(members), int(horizon) if horizon else POW3_MAX_EXPONENT)

    def __contains__(self, j: int) -> bool:
        return int(j) in self.members

    def __len__(self) -> int:
        return len(self.members)

    def complement(self) -> Tuple[int, ...]:
        return tuple(j for j in range(self.n_max + 1) if j not in self.members)

    def to_dict(self) -> Dict:
        return {"members": list(self.members), "N_max": self.n_max}

    def __str__(self) -> str:
        return ",".join(str(m) for m in self.members) + f"/{self.n_max}"


def g_lambda(index_set: IndexSet) -> Integrand:
    """g_L(F) = |F11 - F22| + |F12 + F21| + min_{i in L} |tr F - 2 3^i|."""
    if index_set.members[-1] > POW3_MAX_EXPONENT:
        raise ValueError(f"3^j overflow guard: members must be <= {POW3_MAX_EXPONENT}")
    targets = 2.0 * np.power(np.longdouble(3.0), np.array(index_set.members, dtype=np.longdouble))

    def func(z, x):
        trace = (z[:, 0] + z[:, 3]).astype(np.longdouble)
        gap = np.min(np.abs(trace[:, None] - targets[None, :]), axis=1)
        return _conformal_part(z) + gap.astype(float)

    return Integrand(
        func=func,
        p=1,
        growth_C=3.0 * np.sqrt(2.0) + 2.0 * 3.0 ** index_set.members[0],
        label=f"glambda:{index_set}",
        dim=4,
        recession=lambda e: _conformal_part(e) + np.abs(e[:, 0] + e[:, 3]),
    )


# ---------------------------------------------------------------------------
# lamination

def rank_one_directions() -> np.ndarray:
    """The 16 lines a (x) b with a, b in {e1, e2, e1 + e2, e1 - e2}, as integer grid steps."""
    return np.array([np.outer(a, b).reshape(-1) for a in ROOTS for b in ROOTS], dtype=int)


@dataclass(frozen=True)
class MatrixGrid:
    center: np.ndarray
    H: float
    n_per_axis: int
    values: np.ndarray

    def __post_init__(self):
        if self.n_per_axis < 3 or self.n_per_axis % 2 == 0:
            raise ValueError("n_per_axis must be an odd integer >= 3")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def step(self) -> float:
        return 2.0 * self.H / (self.n_per_axis - 1)

    def axes(self) -> Tuple[np.ndarray, ...]:
        base = np.linspace(-self.H, self.H, self.n_per_axis)
        return tuple(c + base for c in self.center)

    def value_at_center(self) -> float:
        m = self.n_per_axis // 2
        return float(self.values[m, m, m, m])


@dataclass
class EnvelopeResult:
    grid: MatrixGrid
    f_values: np.ndarray
    iterations: int
    changes: List[float]
    clamp_rate: float
    label: str
    warnings: List[str] = field(default_factory=list)

    def value_at_center(self) -> float:
        return self.grid.value_at_center()

    def header(self) -> Dict:
        return {
            "label": self.label,
            "center": self.grid.center.tolist(),
            "box": self.grid.H,
            "n_per_axis": self.grid.n_per_axis,
            "iters": self.iterations,
            "clamp_rate": self.clamp_rate,
            "final_change": self.changes[-1] if self.changes else 0.0,
            "warnings": list(self.warnings),
        }

    def export(self, stem: str) -> Tuple[str, str]:
        """Dense grid to <stem>.npy and the header to <stem>.json."""
        os.makedirs(os.path.dirname(os.path.abspath(stem)), exist_ok=True)
        np.save(f"{stem}.npy", self.grid.values)
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.header(), fh, indent=2)
        return f"{stem}.npy", f"{stem}.json"


def _evaluate_grid(f: Integrand, axes: Sequence[np.ndarray]) -> np.ndarray:
    """f on the tensor grid, one leading-axis slice at a time."""
    shape = tuple(len(a) for a in axes)
    rest = np.meshgrid(*axes[1:], indexing="ij")
    tail = np.stack([r.reshape(-1) for r in rest], axis=1)
    out = np.empty(shape)
    for i, a0 in enumerate(axes[0]):
        pts = np.hstack([np.full((len(tail), 1), a0), tail])
        out[i] = f(pts).reshape(shape[1:])
    return out


def _window(offset: np.ndarray, n: int) -> Tuple[slice, ...]:
    return tuple(slice(PAD + int(o), PAD + int(o) + n) for o in offset)


def _off_grid(offset: np.ndarray, n: int) -> np.ndarray:
    ar = np.arange(n)
    mask = np.zeros((n,) * 4, dtype=bool)
    for axis, o in enumerate(offset):
        out = (ar + o < 0) | (ar + o >= n)
        shape = [1, 1, 1, 1]
        shape[axis] = n
        mask |= out.reshape(shape)
    return mask


def lamination_envelope(
    f: Integrand,
    H: float,
    n: int = ENVELOPE_NODES,
    center: Optional[np.ndarray] = None,
    dirs: Optional[np.ndarray] = None,
    stencils: Sequence[Tuple[int, int]] = STENCILS,
    iters: int = ENVELOPE_MAX_ITERS,
    scale: float = 1.0,
) -> EnvelopeResult:
    """
    Rank-one convex envelope of f on the box center + [-H, H]^4.

    Jacobi iteration: every sweep replaces each node by the smallest of its
    value and all two-point laminate averages (q A[z + p w] + p A[z - q w]) / (p + q)
    read from the previous sweep. Nodes in the PAD-wide ring around the box
    keep f's own value. Stops once the largest change drops below
    ENVELOPE_TOL_FACTOR * scale.
    """
    if f.dim != 4:
        raise ValueError("lamination works on 2x2 matrices")
    center = np.zeros(4) if center is None else np.asarray(center, dtype=float).reshape(4)
    dirs = rank_one_directions() if dirs is None else np.asarray(dirs, dtype=int)
    if max(max(p, q) for p, q in stencils) * np.max(np.abs(dirs)) > PAD:
        raise ValueError(f"stencil reach exceeds the padding of {PAD} nodes")
    if n < 3 or n % 2 == 0:
        raise ValueError("n_per_axis must be an odd integer >= 3")
    h = 2.0 * H / (n - 1)
    padded_axes = [c + h * np.arange(-(n // 2) - PAD, n // 2 + PAD + 1) for c in center]
    env = _evaluate_grid(f, padded_axes)
    inner = (slice(PAD, PAD + n),) * 4
    f_inner = env[inner].copy()
    tol = ENVELOPE_TOL_FACTOR * scale

    moves = []
    for w in dirs:
        for p, q in stencils:
            fwd, back = p * w, -q * w
            moves.append((_window(fwd, n), _window(back, n), p, q, _off_grid(fwd, n) | _off_grid(back, n)))

    changes: List[float] = []
    updated_total, clamped_total = 0, 0
    for it in range(iters):
        old = env[inner].copy()
        best = old.copy()
        pad_win = np.zeros(old.shape, dtype=bool)
        for sl_f, sl_b, p, q, off in moves:
            cand = (q * env[sl_f] + p * env[sl_b]) / (p + q)
            better = cand < best
            np.copyto(best, cand, where=better)
            pad_win[better] = off[better]
        updated = best < old
        updated_total += int(updated.sum())
        clamped_total += int((pad_win & updated).sum())
        env[inner] = best
        change = float(np.max(old - best))
        changes.append(change)
        if change < tol:
            break
    clamp_rate = clamped_total / updated_total if updated_total else 0.0
    warnings = []
    if clamp_rate > ENVELOPE_CLAMP_WARN:
        msg = f"boundary clamp on {clamp_rate:.1%} of updates; enlarge the box"
        logger.warning(f"⚠️ {f.label}: {msg}")
        warnings.append(msg)
    if changes and changes[-1] >= tol:
        msg = f"not converged after {len(changes)} sweeps (last change {changes[-1]:.3g})"
        logger.warning(f"⚠️ {f.label}: {msg}")
        warnings.append(msg)
    grid = MatrixGrid(center, H, n, env[inner].copy())
    return EnvelopeResult(grid, f_inner, len(changes), changes, clamp_rate, f.label, warnings)


def rank_one_violation(result: EnvelopeResult, dirs: Optional[np.ndarray] = None,
                       stencils: Sequence[Tuple[int, int]] = STENCILS) -> float:
    """Largest env(z) - laminate average over stencils whose both ends lie inside the grid."""
    dirs = rank_one_directions() if dirs is None else np.asarray(dirs, dtype=int)
    n = result.grid.n_per_axis
    padded = np.pad(result.grid.values, PAD, mode="constant", constant_values=np.nan)
    env = result.grid.values
    worst = -np.inf
    for w in dirs:
        for p, q in stencils:
            cand = (q * padded[_window(p * w, n)] + p * padded[_window(-q * w, n)]) / (p + q)
            gap = env - cand
            if np.any(np.isfinite(gap)):
                worst = max(worst, float(np.nanmax(gap)))
    return worst


def minorant_gap(result: EnvelopeResult, minorant: Integrand) -> float:
    """min over nodes of env - minorant; nonnegative when the envelope respects the minorant."""
    values = _evaluate_grid(minorant, result.grid.axes())
    return float(np.min(result.grid.values - values))


def envelope_integrand(result: EnvelopeResult, f: Integrand) -> Integrand:
    """Multilinear interpolation of the envelope inside the box, f outside. Tagged numeric."""
    axes = result.grid.axes()
    interp = RegularGridInterpolator(axes, result.grid.values, method="linear")
    lo = np.array([a[0] for a in axes])
    hi = np.array([a[-1] for a in axes])

    def func(z, x):
        out = f.func(z, x).astype(float)
        inside = np.all((z >= lo) & (z <= hi), axis=1)
        if np.any(inside):
            out[inside] = interp(z[inside])
        return out

    return Integrand(func=func, p=f.p, growth_C=f.growth_C, label=f"numeric:R[{f.label}]", dim=4,
                     recession=f.recession, check_growth=False)


def gk_envelope(k: float, n: int = ENVELOPE_NODES, iters: int = ENVELOPE_MAX_ITERS) -> EnvelopeResult:
    """Envelope of g_k on the default box [-4k, 4k]^4."""
    return lamination_envelope(muller_gk(k), 4.0 * k, n, iters=iters, scale=k)


# ---------------------------------------------------------------------------
# separation and incomparable families

class Separation(NamedTuple):
    value: float
    table: pd.DataFrame


def separation(L: IndexSet, G: IndexSet, j_range: Sequence[int], n: int = 9,
               iters: int = ENVELOPE_MAX_ITERS) -> Separation:
    """
    max_j |R g_L(3^j 1) - R g_G(3^j 1)| / 3^j with envelopes localized on
    the box 3^j 1 + [-3^j, 3^j]^4.
    """
    rows = []
    f_L, f_G = g_lambda(L), g_lambda(G)
    for j in j_range:
        if j > POW3_MAX_EXPONENT:
            raise ValueError(f"3^j overflow guard: j = {j} > {POW3_MAX_EXPONENT}")
        s = 3.0 ** j
        center = s * IDENTITY
        if L.members == G.members:
            rows.append({"j": j, "env_L": 0.0, "env_G": 0.0, "g_L": 0.0, "g_G": 0.0, "gap": 0.0})
            continue
        env_L = lamination_envelope(f_L, s, n, center=center, iters=iters, scale=s).value_at_center()
        env_G = lamination_envelope(f_G, s, n, center=center, iters=iters, scale=s).value_at_center()
        rows.append({
            "j": j,
            "env_L": env_L,
            "env_G": env_G,
            "g_L": float(f_L(center[None, :])[0]),
            "g_G": float(f_G(center[None, :])[0]),
            "gap": abs(env_L - env_G) / s,
        })
    table = pd.DataFrame(rows)
    return Separation(float(table["gap"].max()) if len(table) else 0.0, table)


def diagonal_incomparable(family: Sequence[IndexSet], n_max: int = POW3_MAX_EXPONENT) -> IndexSet:
    """
    Index set frequently inside and outside every member of ``family``.

    Requirements are the nonempty cells of the Boolean algebra generated by
    the family (in/out of each member when the family is larger than four).
    They are served round-robin, every pick at least two past the previous
    one, until some requirement cannot be met below n_max.
    """
    if not family:
        return IndexSet(tuple(range(0, n_max + 1, 2)), n_max)
    universe = range(n_max + 1)
    if len(family) <= 4:
        patterns = {}
        for j in universe:
            patterns.setdefault(tuple(j in A for A in family), []).append(j)
        requirements = [set(v) for v in patterns.values()]
    else:
        requirements = []
        for A in family:
            requirements.append(set(A.members))
            requirements.append(set(universe) - set(A.members))
    picks: List[int] = []
    last = -2
    done = False
    while not done:
        for req in requirements:
            nxt = next((j for j in universe if j >= last + 2 and j in req), None)
            if nxt is None:
                done = True
                break
            picks.append(nxt)
            last = nxt
    m = len(family)
    if len(picks) < 2 * m:
        raise ValueError(f"increase N_max: only {len(picks)} picks below {n_max} for {m} sets")
    result = IndexSet(tuple(picks), n_max)
    need = len(picks) // (2 * m)
    for A in family:
        inside = sum(1 for j in picks if j in A)
        if inside < need or len(picks) - inside < need:
            raise ValueError(f"increase N_max: set {A} met {inside} of {len(picks)} times")
    return result


# ---------------------------------------------------------------------------
# Jensen verifier for homogeneous measures

class JensenReport(NamedTuple):
    table: pd.DataFrame
    min_slack: float
    passed: bool


def convex_battery(dim: int = 4) -> List[Tuple[Integrand, str]]:
    ids = ["abs", "area", "linf", "huber", "directional"]
    battery = [(f, "convex") for f in get_battery(ids, dim)]
    battery.append((get_battery([f"affine:{','.join(['1', '-2', '0.5', '3'][:dim])},1"], dim)[0], "convex"))
    return battery


def jensen_verify(nu0: DiscreteMeasure, nu_inf: DiscreteMeasure, z, battery: Sequence[Tuple[Integrand, str]],
                  spec: Optional[CompactificationSpec] = None, registry: Optional[AtomRegistry] = None,
                  tol: float = TOL_JENSEN) -> JensenReport:
    """
    slack(f) = int f dnu0 + int f# dnu_inf - f(z) for every battery member.
    ``nu_inf`` lives on atom ids of ``registry``; its mass is the concentration weight.
    """
    z = np.asarray(z, dtype=float).reshape(1, -1)
    spec = spec or (registry.spec if registry is not None else sphere_spec(z.shape[1]))
    registry = registry or AtomRegistry(spec)
    rows = []
    for f, tag in battery:
        lhs = float(f(nu0.points) @ nu0.weights) if len(nu0) else 0.0
        for a, w in zip(nu_inf.points, nu_inf.weights):
            if w == 0:
                continue
            atom = registry[int(round(a[0]))]
            try:
                sharp = boundary_value(f, atom, spec)
            except IntegrandNotContinuousError:
                sharp = upper_recession(f, atom, spec)
            lhs += float(w) * sharp
        rhs = float(f(z)[0])
        rows.append({"integrand": f.label, "tag": tag, "lhs": lhs, "rhs": rhs, "slack": lhs - rhs})
    table = pd.DataFrame(rows)
    min_slack = float(table["slack"].min()) if len(table) else 0.0
    return JensenReport(table, min_slack, bool(min_slack >= -tol))
