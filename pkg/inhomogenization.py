"""
Inhomogenization: build one field on the fine grid whose elementary triple
pairs with every test eta (x) Phi within an explicit error budget of a
target triple.

Both constructions work on dyadic cubes of the unit cube and bound the
pairing error for all tests with sup|eta| + Lip(eta) <= 1 (max norm),
sup|T Phi| + Lip(T Phi) <= 1 (compactification metric) and Lip(Phi) <= 5.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.ndimage import convolve1d
from scipy.spatial import cKDTree

from config import ATOM_MATCH_TOL
from gallery import bump, mollifier_weights
from measure_core import DiscreteMeasure
from transform import to_ball_coords
from young import TestBattery, YoungTriple, default_battery, elementary, pair_test

logger = logging.getLogger(__name__)

LIP_PHI = 5.0
TERMS = ("E1", "E2", "E3", "E4", "E5", "E6", "E7")


class BudgetParameterError(ValueError):
    """Construction parameters incompatible with the target or the grid."""


@dataclass
class ErrorBudget:
    terms: Dict[str, float]
    params: Dict
    slack: float = 0.0

    @property
    def total(self) -> float:
        return float(sum(abs(v) for v in self.terms.values()) + self.slack)

    def to_dict(self) -> Dict:
        return {"terms": dict(self.terms), "total": self.total, "slack": self.slack, "params": dict(self.params)}


@dataclass
class Inhomogenization:
    field: np.ndarray
    mu: DiscreteMeasure
    budget: ErrorBudget
    checks: pd.DataFrame
    notes: List[str] = field(default_factory=list)

    @property
    def discrepancy(self) -> float:
        return float(self.checks["gap"].max()) if len(self.checks) else 0.0

    @property
    def within_budget(self) -> bool:
        return self.discrepancy <= self.budget.total + 1e-12


def _fine_shape(mu: DiscreteMeasure) -> Tuple[int, int]:
    """(cells per axis, K) of a full 2^K midpoint grid."""
    n = mu.dim
    per = int(round(len(mu) ** (1.0 / n)))
    if per ** n != len(mu) or per & (per - 1):
        raise BudgetParameterError("target must live on a full dyadic midpoint grid")
    if not np.allclose(mu.weights, 1.0 / len(mu)):
        raise BudgetParameterError("target reference weight must be Lebesgue on the fine grid")
    return per, int(np.log2(per))


def _cubes(mu: DiscreteMeasure, per: int, c: int) -> Tuple[np.ndarray, np.ndarray, int]:
    """Cube id and local multi-index of every fine cell for cubes of c cells per side."""
    idx = np.minimum(np.floor(mu.points * per).astype(int), per - 1)
    side = per // c
    cube = np.ravel_multi_index((idx // c).T, (side,) * mu.dim)
    return cube, idx % c, side ** mu.dim


def _cube_corners(n_cubes: int, side: int, n: int, c: int, per: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lowest and highest cell centre of every cube, per axis."""
    multi = np.stack(np.unravel_index(np.arange(n_cubes), (side,) * n), axis=1)
    lo = (multi * c + 0.5) / per
    return lo, lo + (c - 1) / per


def _boundary_gap(spec, V: np.ndarray, atom) -> float:
    """Compactification distance between the interior point V and a boundary atom."""
    V = np.atleast_2d(V)
    gap = float(np.linalg.norm(to_ball_coords(V)[0] - atom.dir))
    if spec.generators:
        gap += float(np.abs(spec.raw_values(V)[0] - atom.gen_limits) @ spec.weights)
    return gap


def _atom_gap(spec, a, b) -> float:
    gap = float(np.linalg.norm(a.dir - b.dir))
    if spec.generators:
        gap += float(np.abs(a.gen_limits - b.gen_limits) @ spec.weights)
    return gap


def battery_checks(target: YoungTriple, field_triple: YoungTriple,
                   battery: Optional[TestBattery] = None) -> pd.DataFrame:
    battery = battery or default_battery(target.spec, target.x_dim)
    rows = []
    for eta, psi in battery:
        lhs = pair_test(field_triple, eta, psi)
        rhs = pair_test(target, eta, psi)
        rows.append({"eta": eta.label, "psi": psi.label, "field": lhs, "target": rhs, "gap": abs(lhs - rhs)})
    return pd.DataFrame(rows)


def inhomogenize_singular(target: YoungTriple, a: int, b: int = 2,
                          battery: Optional[TestBattery] = None) -> Inhomogenization:
    """
    Realize the point masses of ``target`` by a field on dyadic cubes of
    side 2^-(a+b). The concentration is mollified at radius t = 2^-a, each
    cube receives its average r_Q and concentrates it on its first cell
    layer with value r_Q e / theta (theta = layer fraction), e the
    direction of the cube's dominant atom.
    """
    mu, spec = target.mu, target.spec
    n, d = target.x_dim, target.dim
    per, K = _fine_shape(mu)
    if a < 1 or b < 0:
        raise BudgetParameterError("need a >= 1 and b >= 0")
    if a + b > K:
        raise BudgetParameterError(f"a + b = {a + b} exceeds the fine grid depth {K}")
    for fiber in target.osc.fibers:
        if len(fiber) != 1 or np.any(fiber.points[0] != 0.0):
            raise BudgetParameterError("singular construction expects trivial oscillation fibers")
    h = 1.0 / len(mu)
    params = {"a": a, "b": b, "t": 2.0 ** -a, "K": K, "n": n}
    live = np.nonzero(target.conc.weights > 0)[0]
    if len(live) == 0:
        zero = np.zeros((len(mu), d))
        budget = ErrorBudget({k: 0.0 for k in TERMS}, params)
        triple = elementary(zero, mu, spec, target.registry)
        return Inhomogenization(zero, mu, budget, battery_checks(target, triple, battery))

    xs = target.conc.points[live]
    ms = target.conc.weights[live]
    delta = float(np.min(np.minimum(xs, 1.0 - xs)))
    if delta <= 2.0 ** (1 - a):
        raise BudgetParameterError(f"increase a: boundary distance {delta:.3g} <= 2^(1-a) = {2.0 ** (1 - a):.3g}")
    atoms = []
    for i in live:
        items = target.atoms_of(i)
        if len(items) != 1:
            raise BudgetParameterError("singular construction expects single-atom angle fibers")
        atoms.append(items[0][0])
    dirs = np.array([atom.dir for atom in atoms])

    t = 2.0 ** -a
    c = 2 ** (K - a - b)
    theta = 1.0 / c
    W = np.stack([mollifier_weights(mu.points, x, t) for x in xs])
    cube, local, n_cubes = _cubes(mu, per, c)
    wQ = np.stack([np.bincount(cube, weights=row, minlength=n_cubes) for row in W])
    massQ = ms @ wQ
    family = massQ > 0
    owner = np.argmax(ms[:, None] * wQ, axis=0)
    vol = (c / per) ** n
    rQ = massQ / vol

    field_ = np.zeros((len(mu), d))
    slab = (local[:, 0] == 0) & family[cube]
    field_[slab] = (rQ[cube[slab]] / theta)[:, None] * dirs[owner[cube[slab]]]

    lo, hi = _cube_corners(n_cubes, per // c, n, c, per)
    fam = np.nonzero(family)[0]
    e2 = float(np.sum(ms * np.abs(1.0 - wQ[:, fam].sum(axis=1))))
    e2 += LIP_PHI * float(np.sum(np.linalg.norm(field_[~family[cube]], axis=1)) * h)
    e3 = 0.0
    e6 = 0.0
    for k in range(len(ms)):
        reach = np.max(np.maximum(np.abs(lo[fam] - xs[k]), np.abs(hi[fam] - xs[k])), axis=1)
        e3 += float(ms[k] * wQ[k, fam] @ reach)
        gaps = np.array([_atom_gap(spec, atoms[owner[q]], atoms[k]) for q in fam])
        e6 += float(ms[k] * wQ[k, fam] @ gaps)
    e4 = 0.0
    for q in fam:
        V = rQ[q] / theta * dirs[owner[q]]
        e4 += vol * (2.0 * theta + rQ[q] * _boundary_gap(spec, V, atoms[owner[q]]))
    diam = (c - 1) / per
    e5 = float(diam * vol * np.sum(rQ[fam]))
    realized = (vol * rQ[fam])[:, None] * dirs[owner[fam]]
    e7 = LIP_PHI * float(np.linalg.norm(realized.sum(axis=0) - (ms[:, None] * dirs).sum(axis=0)))
    budget = ErrorBudget({"E1": 0.0, "E2": e2, "E3": e3, "E4": e4, "E5": e5, "E6": e6, "E7": e7},
                         {**params, "cubes": int(family.sum()), "theta": theta})
    triple = elementary(field_, mu, spec, target.registry)
    checks = battery_checks(target, triple, battery)
    result = Inhomogenization(field_, mu, budget, checks)
    logger.info(f"📊 singular a={a} b={b}: budget {budget.total:.4g}, discrepancy {result.discrepancy:.4g}")
    return result


def _mollify_field(values: np.ndarray, per: int, n: int, t: float) -> np.ndarray:
    """Separable bump convolution of a grid field, radius t, nearest-value extension."""
    reach = int(round(t * per))
    offsets = np.arange(-reach, reach + 1)
    kernel = bump(offsets / (t * per))
    kernel = kernel / kernel.sum()
    grid = values.reshape((per,) * n + (values.shape[1],))
    for axis in range(n):
        grid = convolve1d(grid, kernel, axis=axis, mode="nearest")
    return grid.reshape(values.shape)


def _largest_remainder(p: np.ndarray, total: int) -> np.ndarray:
    raw = p * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    if short > 0:
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    return counts


def inhomogenize_ac(target: YoungTriple, t: float, s: float = 0.5,
                    battery: Optional[TestBattery] = None) -> Inhomogenization:
    """
    Realize a target with absolutely continuous concentration. Cubes of side
    t where more than a fraction s of the cells share one (fiber, density,
    angle) class receive a laminate of layers in the class proportions plus
    one slab layer per angle atom; every other cell takes the mollified
    barycentre field.
    """
    mu, spec = target.mu, target.spec
    n, d = target.x_dim, target.dim
    per, K = _fine_shape(mu)
    if not 0.0 < s < 1.0:
        raise BudgetParameterError("s must lie in (0, 1)")
    m = -np.log2(t)
    if abs(m - round(m)) > 1e-12 or round(m) < 1 or round(m) > K - 1:
        raise BudgetParameterError(f"t must be 2^-m with 1 <= m <= {K - 1}")
    c = int(round(t * per))
    h = 1.0 / len(mu)

    lam = np.zeros(len(mu))
    cell_atoms: Dict[int, List] = {}
    live = np.nonzero(target.conc.weights > 0)[0]
    if len(live):
        dist, idx = cKDTree(mu.points).query(target.conc.points[live], p=np.inf)
        if np.any(dist > ATOM_MATCH_TOL):
            raise BudgetParameterError("concentration must be absolutely continuous on the fine grid")
        for i, cell in zip(live, idx):
            lam[cell] += target.conc.weights[i] / h
            cell_atoms[int(cell)] = target.atoms_of(i)

    fibers = target.osc.fibers
    means = np.array([f.mean() for f in fibers]).reshape(len(mu), d)
    moment = np.array([f.weights @ (1.0 + np.linalg.norm(f.points, axis=1)) for f in fibers])
    M = moment + lam
    v = means.copy()
    for cell, items in cell_atoms.items():
        v[cell] += lam[cell] * sum(w * atom.dir for atom, w in items)
    smooth = _mollify_field(v, per, n, t)

    keys: Dict[Tuple, int] = {}
    cls = np.empty(len(mu), dtype=int)
    for i, f in enumerate(fibers):
        angle_key = tuple((atom.id, round(w, 12)) for atom, w in cell_atoms.get(i, []))
        key = (f.points.tobytes(), f.weights.tobytes(), round(float(lam[i]), 12), angle_key)
        cls[i] = keys.setdefault(key, len(keys))
    elementary_cell = np.array([len(f) == 1 for f in fibers]) & (lam == 0)

    cube, local, n_cubes = _cubes(mu, per, c)
    vol = t ** n
    diam = (c - 1) / per
    field_ = smooth.copy()
    selected = np.zeros(len(mu), dtype=bool)
    e2 = e3 = e4 = e5 = e6 = 0.0
    ideal_M = M.copy()
    n_selected = 0
    order = np.argsort(cube, kind="stable")
    bounds = np.searchsorted(cube[order], np.arange(n_cubes + 1))
    for q in range(n_cubes):
        cells = order[bounds[q]:bounds[q + 1]]
        counts = np.bincount(cls[cells])
        ref_cls = int(np.argmax(counts))
        if counts[ref_cls] / len(cells) <= s:
            continue
        ref = cells[np.nonzero(cls[cells] == ref_cls)[0][0]]
        fiber = fibers[ref]
        atoms_q = [(atom, w) for atom, w in cell_atoms.get(int(ref), []) if w > 0]
        lam_q = lam[ref]
        n_slab = len(atoms_q) if lam_q > 0 else 0
        free = c - n_slab
        if free < 1:
            raise BudgetParameterError("cube too thin for its slab layers: decrease the number of atoms or refine")
        layers = _largest_remainder(fiber.weights, free)
        layer_of = local[cells, 0]
        value = np.empty((c, d))
        start = 0
        for z, count in zip(fiber.points, layers):
            value[start:start + count] = z
            start += count
        for atom, w in (atoms_q if n_slab else []):
            V = lam_q * w * c * atom.dir
            value[start] = V
            start += 1
            e4 += vol / c + vol * lam_q * w * _boundary_gap(spec, V, atom)
        field_[cells] = value[layer_of]
        selected[cells] = True
        n_selected += 1
        M_q = M[ref]
        ideal_M[cells] = M_q
        mismatch = cells[cls[cells] != ref_cls]
        e3 += float(h * np.sum(M[mismatch] + M_q))
        e2 += diam * vol * M_q
        e5 += diam * float(h * np.sum(1.0 + np.linalg.norm(field_[cells], axis=1)))
        e6 += float(np.sum(np.abs(layers * vol / c - fiber.weights * vol) * (1.0 + np.linalg.norm(fiber.points, axis=1))))

    out = ~selected
    e1 = float(h * np.sum((M + 1.0 + np.linalg.norm(field_, axis=1))[out & ~elementary_cell]))
    e7 = LIP_PHI * float(h * np.sum(np.linalg.norm(field_ - v, axis=1)[out & elementary_cell]))
    e2_bound = t * float(h * np.sum(ideal_M))
    params = {"t": t, "s": s, "K": K, "n": n, "cubes": n_selected, "E2_bound": e2_bound}
    budget = ErrorBudget({"E1": e1, "E2": e2, "E3": e3, "E4": e4, "E5": e5, "E6": e6, "E7": e7}, params)
    notes = []
    if e2 > e2_bound + 1e-12:
        notes.append(f"E2 = {e2:.4g} exceeds t * int M = {e2_bound:.4g}")
        logger.warning(f"⚠️ {notes[-1]}")
    triple = elementary(field_, mu, spec, target.registry)
    checks = battery_checks(target, triple, battery)
    result = Inhomogenization(field_, mu, budget, checks, notes)
    logger.info(f"📊 ac t={t:g} s={s:g}: budget {budget.total:.4g}, discrepancy {result.discrepancy:.4g}")
    return result
