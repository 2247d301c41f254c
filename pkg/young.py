"""
Generalised Young measures as triples (nu_x, lambda, nu_x^infinity).

A triple pairs with an integrand f of p-growth as

    <nu, f> = int <nu_x, f> dmu + int <nu_x^inf, f^inf> dlambda

where the angle part nu_x^inf is a probability over boundary atoms of the
triple's compactification. Triples come from closed-form constructions
(``elementary``, ``elementary_measure``) or from empirical estimation on a
sampled sequence (``estimate``). The structure results (decomposition,
join, rescaling) are exposed as checkable operations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from compactification import AtomRegistry, BoundaryAtom, CompactificationSpec, sphere_project, sphere_spec
from config import OSC_BINS_1D, OSC_BINS_2D, OSC_BINS_ND, R_CUT, TOL_EI, TOL_PROB, TOL_SCN
from integrand_catalog import abs_integrand
from measure_core import (
    DiscreteMeasure,
    ParametrizedMeasure,
    SpatialGrid,
    VectorDiscreteMeasure,
    lebesgue_grid,
    measure_from_dict,
    pushforward,
    radon_nikodym,
)
from transform import Integrand, recession_profile, to_ball_coords, upper_recession
from transport import lip_dual_distance

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-12


class IntegrandNotContinuousError(ValueError):
    """The integrand has no continuous extension to the triple's compactification."""


class ConcentrationOverlapError(ValueError):
    """Concentration measures of two joined sequences share support."""


@dataclass(frozen=True)
class SampledSequence:
    """
    Finitely many members v_j of a sequence, sampled on the atoms of ``mu``.

    ``fields`` has shape (J, N, d). Samples are aggregated into spatial
    cells through ``cell_index``; ``boundary`` lists explicit boundary sites
    of the closed domain, which carry concentration mass only.
    """

    fields: np.ndarray
    mu: DiscreteMeasure
    js: Tuple[float, ...]
    cell_index: np.ndarray
    cell_points: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.fields, dtype=float)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[0] == 0:
            raise ValueError("fields must have shape (J, N, d) with J >= 1")
        if v.shape[1] != len(self.mu):
            raise ValueError(f"fields carry {v.shape[1]} samples, mu has {len(self.mu)} atoms")
        if not np.all(np.isfinite(v)):
            raise ValueError("fields must be finite")
        cells = np.asarray(self.cell_index, dtype=int).reshape(-1)
        if len(cells) != len(self.mu):
            raise ValueError("cell_index must label every sample")
        js = tuple(float(j) for j in self.js)
        if len(js) != v.shape[0]:
            raise ValueError(f"{len(js)} indices for {v.shape[0]} fields")
        object.__setattr__(self, "fields", v)
        object.__setattr__(self, "cell_index", cells)
        object.__setattr__(self, "js", js)
        object.__setattr__(self, "cell_points", np.asarray(self.cell_points, dtype=float).reshape(-1, self.mu.dim))
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=float).reshape(-1, self.mu.dim))

    @classmethod
    def on_grid(cls, fields, grid: SpatialGrid, js: Sequence[float]) -> "SampledSequence":
        return cls(fields, grid.sample_measure(), tuple(js), grid.cell_index(), grid.cell_points(), grid.boundary())

    @classmethod
    def from_measure(cls, fields, mu: DiscreteMeasure, js: Sequence[float],
                     boundary: Optional[np.ndarray] = None) -> "SampledSequence":
        """Every atom of mu is its own cell."""
        boundary = np.zeros((0, mu.dim)) if boundary is None else boundary
        return cls(fields, mu, tuple(js), np.arange(len(mu)), mu.points, boundary)

    @property
    def dim(self) -> int:
        return self.fields.shape[2]

    @property
    def n_cells(self) -> int:
        return len(self.cell_points)

    def with_fields(self, fields) -> "SampledSequence":
        return replace(self, fields=fields)

    def subset(self, keep: Sequence[int]) -> "SampledSequence":
        keep = list(keep)
        return replace(self, fields=self.fields[keep], js=tuple(self.js[k] for k in keep))

    def cell_mass(self) -> np.ndarray:
        return np.bincount(self.cell_index, weights=self.mu.weights, minlength=self.n_cells)

    def integral(self, f: Integrand) -> np.ndarray:
        """int f(v_j) dmu for every j."""
        x = self.mu.points if f.x_dim else None
        return np.array([f(v, x) @ self.mu.weights for v in self.fields])


@dataclass(frozen=True)
class YoungTriple:
    osc: ParametrizedMeasure
    mu: DiscreteMeasure
    conc: DiscreteMeasure
    angle: Dict[int, DiscreteMeasure]
    spec: CompactificationSpec
    registry: AtomRegistry
    params: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.osc) != len(self.mu):
            raise ValueError(f"{len(self.osc)} fibers for {len(self.mu)} reference atoms")
        if np.any(self.mu.weights <= 0):
            raise ValueError("reference weight must be positive on every fiber cell")
        if self.registry.spec is not self.spec:
            raise ValueError("registry belongs to a different spec")
        for i in np.nonzero(self.conc.weights > 0)[0]:
            fiber = self.angle.get(int(i))
            if fiber is None:
                raise ValueError(f"concentration atom {i} has no angle fiber")
            if abs(fiber.mass() - 1.0) > TOL_PROB:
                raise ValueError(f"angle fiber {i} has mass {fiber.mass()}, expected a probability")
        if not np.isfinite(self.p_moment()):
            raise ValueError("p-moment of the oscillation part is not finite")

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def x_dim(self) -> int:
        return self.mu.dim

    def p_moment(self) -> float:
        return float(sum(w * (f.weights @ np.linalg.norm(f.points, axis=1) ** self.spec.p)
                         for w, f in zip(self.mu.weights, self.osc.fibers)))

    @cached_property
    def flat_osc(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All fibers stacked: (points, mu-weighted fiber weights, owning cell)."""
        fibers = self.osc.fibers
        if not fibers:
            return np.zeros((0, self.dim)), np.zeros(0), np.zeros(0, dtype=int)
        sizes = np.array([len(f) for f in fibers])
        owner = np.repeat(np.arange(len(fibers)), sizes)
        z = np.vstack([f.points for f in fibers])
        w = np.concatenate([f.weights for f in fibers]) * self.mu.weights[owner]
        return z, w, owner

    def lambda_mass(self) -> float:
        return self.conc.mass()

    def lambda_boundary(self) -> float:
        """lambda of the boundary of the unit cube."""
        pts = self.conc.points
        on_edge = np.any((pts <= BOUNDARY_TOL) | (pts >= 1.0 - BOUNDARY_TOL), axis=1)
        return self.conc.mass(on_edge)

    def atoms_of(self, i: int) -> List[Tuple[BoundaryAtom, float]]:
        fiber = self.angle.get(int(i))
        if fiber is None:
            return []
        return [(self.registry[int(round(a[0]))], float(w)) for a, w in zip(fiber.points, fiber.weights)]

    def to_dict(self) -> Dict:
        return {
            "osc": self.osc.to_dict(),
            "mu": self.mu.to_dict(),
            "conc": self.conc.to_dict(),
            "angle": {str(i): m.to_dict() for i, m in self.angle.items()},
            "spec": self.spec.to_dict(),
            "registry": self.registry.to_dict(),
            "params": _jsonable(self.params),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "YoungTriple":
        registry = AtomRegistry.from_dict(data["registry"])
        osc = ParametrizedMeasure(
            np.asarray(data["osc"]["cells"], dtype=float),
            tuple(measure_from_dict(f) for f in data["osc"]["fibers"]),
            bool(data["osc"].get("sub_probability", False)),
        )
        angle = {int(k): measure_from_dict(v) for k, v in data["angle"].items()}
        return cls(osc, measure_from_dict(data["mu"]), measure_from_dict(data["conc"]), angle,
                   registry.spec, registry, dict(data.get("params", {})))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# pairing

def boundary_value(f: Integrand, atom: BoundaryAtom, spec: CompactificationSpec,
                   explicit: Optional[Dict[int, float]] = None, x: Optional[np.ndarray] = None) -> float:
    """
    f^infinity at a boundary atom.

    Resolution order: caller-supplied value, closed-form or homogeneous
    recession, recorded generator limit when f is one of the spec's
    generators, regular numerical recession along the atom's direction.
    """
    if explicit is not None and atom.id in explicit:
        return float(explicit[atom.id])
    e = atom.dir[None, :]
    xs = None if x is None or not f.x_dim else np.atleast_2d(x)
    if f.homogeneous:
        return float(f(e, xs)[0])
    if f.recession is not None:
        return float(np.asarray(f.recession(e)).reshape(-1)[0])
    if f.label in spec.labels:
        i = spec.labels.index(f.label)
        return float(atom.gen_limits[i] * spec.scales[i])
    est = recession_profile(f, directions=e, x=xs)[0]
    if est.regular:
        return float(est.value)
    raise IntegrandNotContinuousError(
        f"integrand not continuous on this compactification: {f.label} at atom {atom.id}")


def pair(nu: YoungTriple, f: Integrand, recession: Union[None, str, Dict[int, float]] = None) -> float:
    """
    <nu, f>. ``recession`` is None for automatic resolution, ``"upper"`` to
    fall back on the upper recession estimate where f is not continuous on
    the compactification, or an explicit {atom id: value} map.
    """
    if f.p != nu.spec.p:
        raise ValueError(f"integrand has p={f.p}, triple uses p={nu.spec.p}")
    z, wts, owner = nu.flat_osc
    total = 0.0
    if len(z):
        total = float(f(z, nu.osc.cells[owner] if f.x_dim else None) @ wts)
    explicit = recession if isinstance(recession, dict) else None
    cache: Dict[int, float] = {}
    for i in np.nonzero(nu.conc.weights > 0)[0]:
        x = nu.conc.points[i]
        inner = 0.0
        for atom, w in nu.atoms_of(i):
            key = atom.id
            if key not in cache or f.x_dim:
                try:
                    cache[key] = boundary_value(f, atom, nu.spec, explicit, x)
                except IntegrandNotContinuousError:
                    if recession != "upper":
                        raise
                    cache[key] = upper_recession(f, atom, nu.spec)
            inner += w * cache[key]
        total += float(nu.conc.weights[i]) * inner
    return total


# ---------------------------------------------------------------------------
# constructions

def default_bins(d: int) -> int:
    if d == 1:
        return OSC_BINS_1D
    if d == 2:
        return OSC_BINS_2D
    return OSC_BINS_ND


def _classify_all(values: np.ndarray, registry: AtomRegistry, floor: float = 0.0) -> np.ndarray:
    """
    Atom id per row, classified in row order at the observed magnitude;
    repeated rows are classified once. Rows below ``floor`` are rejected.
    """
    if len(values) == 0:
        return np.zeros(0, dtype=int)
    _, first, inverse = np.unique(values, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    ids = np.empty(len(first), dtype=int)
    for g in np.argsort(first):
        ids[g] = registry.classify(values[first[g]], floor=floor)
    return ids[inverse]


def estimate(seq: SampledSequence, spec: Optional[CompactificationSpec] = None, R_cut: Optional[float] = None,
             bins: Optional[int] = None, registry: Optional[AtomRegistry] = None) -> YoungTriple:
    """
    Empirical triple of a sampled sequence, averaged over its members.

    Values with |v| <= R_cut feed per-cell histograms over uniform bins of
    the ball [-1, 1]^d (each bin keeps the weighted mean of its values).
    Larger values put mass |v| mu(cell) into lambda at the cell and vote,
    with the same weight, for the boundary atom they classify into.
    """
    spec = spec or sphere_spec(seq.dim)
    if spec.dim != seq.dim:
        raise ValueError(f"sequence takes values in R^{seq.dim}, spec acts on R^{spec.dim}")
    registry = registry or AtomRegistry(spec)
    if registry.spec is not spec:
        raise ValueError("registry belongs to a different spec")
    R = spec.mag_min if R_cut is None else float(R_cut)
    if R < spec.mag_min and not spec.is_sphere:
        logger.warning(f"⚠️ R_cut {R:g} below mag_min {spec.mag_min:g}, atoms classified at observed magnitudes")
    per_axis = bins or default_bins(seq.dim)
    J, N, d = seq.fields.shape
    C = seq.n_cells

    v = seq.fields.reshape(J * N, d)
    cells = np.tile(seq.cell_index, J)
    w = np.tile(seq.mu.weights / J, J)
    live = w > 0
    v, cells, w = v[live], cells[live], w[live]
    mag = np.linalg.norm(v, axis=1)
    inside = mag <= R

    zi, ci, wi = v[inside], cells[inside], w[inside]
    zhat = to_ball_coords(zi)
    bidx = np.clip(np.floor((zhat + 1.0) * 0.5 * per_axis).astype(int), 0, per_axis - 1)
    flat = np.ravel_multi_index(bidx.T, (per_axis,) * d) if len(zi) else np.zeros(0, dtype=int)
    nb = per_axis ** d
    keys, inv = np.unique(ci.astype(np.int64) * nb + flat, return_inverse=True)
    inv = inv.reshape(-1)
    key_w = np.bincount(inv, weights=wi, minlength=len(keys))
    key_z = np.stack([np.bincount(inv, weights=wi * zi[:, k], minlength=len(keys)) for k in range(d)], axis=1)
    key_z = key_z / key_w[:, None] if len(keys) else np.zeros((0, d))
    key_cell = keys // nb

    cell_mass = seq.cell_mass()
    positive = np.nonzero(cell_mass > 0)[0]
    starts = np.searchsorted(key_cell, positive, side="left")
    stops = np.searchsorted(key_cell, positive, side="right")
    fibers = []
    for lo, hi in zip(starts, stops):
        if hi > lo:
            kw = key_w[lo:hi]
            fibers.append(DiscreteMeasure(key_z[lo:hi], kw / kw.sum()))
        else:
            fibers.append(DiscreteMeasure.dirac(np.zeros(d)))
    osc = ParametrizedMeasure(seq.cell_points[positive], tuple(fibers))

    out = ~inside
    lam = np.bincount(cells[out], weights=mag[out] * w[out], minlength=C)
    conc_points = np.vstack([seq.cell_points, seq.boundary])
    conc = DiscreteMeasure(conc_points, np.concatenate([lam, np.zeros(len(seq.boundary))]))

    angle: Dict[int, DiscreteMeasure] = {}
    if np.any(out):
        atom_ids = _classify_all(v[out], registry, floor=min(R, spec.mag_min))
        n_atoms = len(registry)
        votes = np.bincount(cells[out] * n_atoms + atom_ids, weights=mag[out] * w[out], minlength=C * n_atoms)
        votes = votes.reshape(C, n_atoms)
        for c in np.nonzero(lam > 0)[0]:
            ids = np.nonzero(votes[c] > 0)[0]
            angle[int(c)] = DiscreteMeasure(ids[:, None].astype(float), votes[c, ids] / votes[c, ids].sum())

    params = {"R_cut": R, "bins": per_axis, "js": list(seq.js), "mag_min": spec.mag_min, "tol_equiv": spec.tol_equiv}
    logger.debug(f"estimate: {len(positive)} cells, lambda mass {lam.sum():.6g}, {len(registry)} atoms")
    return YoungTriple(osc, DiscreteMeasure(seq.cell_points[positive], cell_mass[positive]), conc, angle, spec,
                       registry, params)


def elementary(v, mu: DiscreteMeasure, spec: Optional[CompactificationSpec] = None,
               registry: Optional[AtomRegistry] = None) -> YoungTriple:
    """Triple of a single field: delta fibers, no concentration."""
    v = np.asarray(v, dtype=float)
    v = v.reshape(len(mu), -1)
    spec = spec or sphere_spec(v.shape[1])
    registry = registry or AtomRegistry(spec)
    keep = mu.weights > 0
    fibers = tuple(DiscreteMeasure.dirac(z) for z in v[keep])
    osc = ParametrizedMeasure(mu.points[keep], fibers)
    conc = DiscreteMeasure(mu.points[keep], np.zeros(int(keep.sum())))
    return YoungTriple(osc, DiscreteMeasure(mu.points[keep], mu.weights[keep]), conc, {}, spec, registry,
                       {"source": "elementary"})


def elementary_measure(l: VectorDiscreteMeasure, mu: DiscreteMeasure, spec: Optional[CompactificationSpec] = None,
                       registry: Optional[AtomRegistry] = None,
                       atoms: Optional[Dict[int, int]] = None) -> YoungTriple:
    """
    Triple of a vector measure l against mu: delta fibers at dl/dmu, lambda =
    |l^s| and angle fibers at the polar direction of l^s.

    On a spec with generators there is no canonical boundary atom for a
    direction, so the caller must pass ``atoms`` mapping every singular
    atom index to a registered atom id.
    """
    spec = spec or sphere_spec(l.target_dim)
    if spec.p != 1:
        raise ValueError("elementary_measure needs p = 1")
    if not spec.is_sphere and atoms is None:
        raise ValueError("no canonical embedding on a compactification finer than the sphere; pass witness atoms")
    registry = registry or AtomRegistry(spec)
    rn = radon_nikodym(l, mu)
    keep = mu.weights > 0
    fibers = tuple(DiscreteMeasure.dirac(z) for z in rn.density[keep])
    osc = ParametrizedMeasure(mu.points[keep], fibers)
    sing = rn.singular
    norms = sing.norms()
    live = norms > 0
    conc = DiscreteMeasure(sing.points[live], norms[live])
    angle = {}
    for i, (vec, r) in enumerate(zip(sing.vweights[live], norms[live])):
        atom_id = atoms[i] if atoms is not None else registry.atom_for_direction(vec / r)
        angle[i] = DiscreteMeasure.dirac([float(atom_id)])
    return YoungTriple(osc, DiscreteMeasure(mu.points[keep], mu.weights[keep]), conc, angle, spec, registry,
                       {"source": "elementary_measure", "eps_sing": rn.eps_sing})


def barycentre(nu: YoungTriple) -> VectorDiscreteMeasure:
    """nu_bar_x mu + nu_bar_x^inf lambda, the latter through sphere projections of the atoms (p = 1 only)."""
    means = np.array([f.mean() for f in nu.osc.fibers]).reshape(len(nu.mu), nu.dim)
    out = VectorDiscreteMeasure(nu.mu.points, means * nu.mu.weights[:, None])
    if nu.spec.p != 1:
        return out
    pts, vecs = [], []
    for i in np.nonzero(nu.conc.weights > 0)[0]:
        direction = sum(w * sphere_project(atom) for atom, w in nu.atoms_of(i))
        pts.append(nu.conc.points[i])
        vecs.append(nu.conc.weights[i] * np.asarray(direction))
    if pts:
        out = out + VectorDiscreteMeasure(np.array(pts), np.array(vecs))
    return out


# ---------------------------------------------------------------------------
# equi-integrability and structure results

class EquiIntegrability(NamedTuple):
    flag: bool
    k_grid: np.ndarray
    profile: np.ndarray


def is_equiintegrable(seq: SampledSequence, k_grid: Optional[Sequence[float]] = None,
                      tol: float = TOL_EI, R_cut: Optional[float] = None) -> EquiIntegrability:
    """profile(k) = max_j int_{|v_j| > k} |v_j| dmu; the flag reads the profile at the largest k."""
    if k_grid is None:
        top = int(np.floor(np.log10(R_cut or R_CUT)))
        k_grid = 10.0 ** np.arange(0, top + 1)
    k_grid = np.sort(np.asarray(k_grid, dtype=float))
    mags = np.linalg.norm(seq.fields, axis=2)
    weighted = mags * seq.mu.weights[None, :]
    profile = np.array([float(np.max(np.sum(np.where(mags > k, weighted, 0.0), axis=1))) for k in k_grid])
    return EquiIntegrability(bool(profile[-1] < tol), k_grid, profile)


class Decomposition(NamedTuple):
    osc_part: SampledSequence
    conc_part: SampledSequence
    thresholds: np.ndarray


def decompose(seq: SampledSequence, k: Optional[float] = None) -> Decomposition:
    """v_j = o_j + c_j with o_j = v_j [|v_j| <= k_j] and a common threshold k_j = k."""
    k = R_CUT if k is None else float(k)
    thresholds = np.full(len(seq.js), k)
    mags = np.linalg.norm(seq.fields, axis=2, keepdims=True)
    o = np.where(mags <= thresholds[:, None, None], seq.fields, 0.0)
    return Decomposition(seq.with_fields(o), seq.with_fields(seq.fields - o), thresholds)


def fiber_distance(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Bounded-Lipschitz distance of two fibers in ball coordinates."""
    if len(m1) == len(m2) and np.array_equal(m1.points, m2.points) and np.array_equal(m1.weights, m2.weights):
        return 0.0
    b1 = pushforward(m1, to_ball_coords, vectorized=True)
    b2 = pushforward(m2, to_ball_coords, vectorized=True)
    return lip_dual_distance(b1, b2)


class JoinResult(NamedTuple):
    sequence: SampledSequence
    predicted: YoungTriple
    parts: Tuple[YoungTriple, YoungTriple]


def join(vseq: SampledSequence, wseq: SampledSequence, spec: Optional[CompactificationSpec] = None,
         registry: Optional[AtomRegistry] = None, tol: float = TOL_SCN,
         R_cut: Optional[float] = None) -> JoinResult:
    """
    Sum of a sequence with delta oscillation limit v and a second sequence.
    The predicted triple translates the second sequence's fibers by v(x),
    adds the concentration measures and glues the angle fibers.
    """
    same_samples = np.array_equal(vseq.mu.points, wseq.mu.points) and np.array_equal(vseq.mu.weights, wseq.mu.weights)
    if vseq.fields.shape != wseq.fields.shape or not same_samples:
        raise ValueError("joined sequences must share samples and indices")
    spec = spec or sphere_spec(vseq.dim)
    registry = registry or AtomRegistry(spec)
    nu_v = estimate(vseq, spec, R_cut, registry=registry)
    nu_w = estimate(wseq, spec, R_cut, registry=registry)

    centres = []
    for fiber in nu_v.osc.fibers:
        c = fiber.mean()
        gap = fiber_distance(fiber, DiscreteMeasure.dirac(c))
        if gap > tol:
            raise ValueError(f"first sequence does not oscillate trivially (fiber gap {gap:.3g})")
        centres.append(c)

    lam_v, lam_w = nu_v.conc.weights, nu_w.conc.weights
    overlap = float(np.sum(np.minimum(lam_v, lam_w)))
    if overlap > tol:
        raise ConcentrationOverlapError(f"concentrations not mutually singular (overlap {overlap:.3g})")

    fibers = tuple(pushforward(f, lambda z, c=c: z + c, vectorized=True) for f, c in zip(nu_w.osc.fibers, centres))
    osc = ParametrizedMeasure(nu_w.osc.cells, fibers)
    lam = lam_v + lam_w
    angle: Dict[int, DiscreteMeasure] = {}
    for i in np.nonzero(lam > 0)[0]:
        parts = [nu.angle[int(i)].scaled(l[i] / lam[i]) for nu, l in ((nu_v, lam_v), (nu_w, lam_w)) if l[i] > 0]
        glued = parts[0]
        for extra in parts[1:]:
            glued = glued + extra
        angle[int(i)] = glued.scaled(1.0 / glued.mass())
    predicted = YoungTriple(osc, nu_w.mu, DiscreteMeasure(nu_w.conc.points, lam), angle, spec, registry,
                            {"source": "join", "overlap": overlap})
    return JoinResult(vseq.with_fields(vseq.fields + wseq.fields), predicted, (nu_v, nu_w))


class RescaleReport(NamedTuple):
    fiber_gap: float
    lambda_gap: float
    angle_gap: float
    passed: bool
    nu: YoungTriple
    eta: YoungTriple


def _direction_measure(nu: YoungTriple, i: int) -> DiscreteMeasure:
    items = nu.atoms_of(i)
    if not items:
        return DiscreteMeasure.zero(nu.dim)
    return DiscreteMeasure(np.array([sphere_project(a) for a, _ in items]), [w for _, w in items])


def rescale_compare(seq: SampledSequence, a, spec: Optional[CompactificationSpec] = None, tol: float = TOL_SCN,
                    R_cut: Optional[float] = None) -> RescaleReport:
    """
    Compare the triple of (v_j, mu) with the triple of (v_j / a, a mu).
    Oscillation fibers must agree after z -> a(x) z, lambda masses and the
    sphere projections of the angle fibers must coincide.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    if len(a) != len(seq.mu):
        raise ValueError("rescaling weight must be sampled on the sequence's atoms")
    if np.any(a[seq.mu.weights > 0] <= 0):
        raise ValueError("rescaling weight must be positive on the support of mu")
    spec = spec or sphere_spec(seq.dim)
    registry = AtomRegistry(spec)
    nu = estimate(seq, spec, R_cut, registry=registry)
    safe = np.where(a > 0, a, 1.0)
    eta_seq = replace(seq, fields=seq.fields / safe[None, :, None],
                      mu=DiscreteMeasure(seq.mu.points, a.clip(min=0.0) * seq.mu.weights))
    eta = estimate(eta_seq, spec, R_cut, registry=registry)

    cell_mass = seq.cell_mass()
    a_cell = np.bincount(seq.cell_index, weights=a * seq.mu.weights, minlength=seq.n_cells)
    a_cell = a_cell[cell_mass > 0] / cell_mass[cell_mass > 0]
    fiber_gap = 0.0
    for f_nu, f_eta, ac in zip(nu.osc.fibers, eta.osc.fibers, a_cell):
        pushed = pushforward(f_eta, lambda z, ac=ac: ac * z, vectorized=True)
        fiber_gap = max(fiber_gap, fiber_distance(f_nu, pushed))

    lambda_gap = abs(nu.lambda_mass() - eta.lambda_mass())
    angle_gap = 0.0
    for i in np.nonzero((nu.conc.weights > 0) | (eta.conc.weights > 0))[0]:
        angle_gap = max(angle_gap, lip_dual_distance(_direction_measure(nu, i), _direction_measure(eta, i)))
    passed = fiber_gap <= tol and lambda_gap <= tol * max(1.0, nu.lambda_mass()) and angle_gap <= tol
    return RescaleReport(fiber_gap, lambda_gap, angle_gap, passed, nu, eta)


class Staircase(NamedTuple):
    values: np.ndarray
    sup_err: float
    ratio_err: float


def staircase(a, n: int) -> Staircase:
    """a_n = floor(n a) / n; |a_n - a| <= 1/n everywhere."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("staircase needs a positive weight")
    a_n = np.floor(a * n) / n
    if np.any(a_n == 0):
        raise ValueError(f"staircase vanishes where a < 1/n: increase n (now {n})")
    return Staircase(a_n, float(np.max(np.abs(a_n - a))), float(np.max(np.abs(a / a_n - 1.0))))


# ---------------------------------------------------------------------------
# test battery and distances

@dataclass(frozen=True)
class SpatialTest:
    """Tent max(0, 1/2 - |x - c|_inf / 2), or the constant 1 when ``center`` is None."""

    center: Optional[Tuple[float, ...]] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.center is None:
            return np.ones(len(x))
        return np.maximum(0.0, 0.5 - 0.5 * np.max(np.abs(x - np.asarray(self.center)), axis=1))

    @property
    def label(self) -> str:
        return "1" if self.center is None else f"tent{tuple(round(c, 4) for c in self.center)}"


@dataclass(frozen=True)
class BallTest:
    """T Psi on the closed ball with bounded-Lipschitz norm <= 1 for the compactification metric."""

    kind: str
    param: Tuple[float, ...] = ()

    @property
    def label(self) -> str:
        return f"{self.kind}{self.param if self.param else ''}"

    def interior(self, zhat: np.ndarray, spec: CompactificationSpec) -> np.ndarray:
        r = np.linalg.norm(zhat, axis=1)
        if self.kind == "mass":
            return 0.5 * (1.0 - r)
        if self.kind == "radial":
            return 0.5 * r
        if self.kind == "coord":
            return 0.5 * zhat[:, int(self.param[0])]
        if self.kind == "bump":
            return np.maximum(0.0, 1.0 - 2.0 * np.linalg.norm(zhat - np.asarray(self.param), axis=1)) / 3.0
        if self.kind == "gen":
            i = int(self.param[0])
            return spec.ball_values(zhat)[:, i] / (1.0 + 2.0 ** (i + 1))
        raise KeyError(f"unknown ball test '{self.kind}'")

    def boundary(self, atom: BoundaryAtom) -> float:
        if self.kind == "mass":
            return 0.0
        if self.kind == "radial":
            return 0.5
        if self.kind == "coord":
            return 0.5 * float(atom.dir[int(self.param[0])])
        if self.kind == "bump":
            return max(0.0, 1.0 - 2.0 * float(np.linalg.norm(atom.dir - np.asarray(self.param)))) / 3.0
        if self.kind == "gen":
            i = int(self.param[0])
            return float(atom.gen_limits[i]) / (1.0 + 2.0 ** (i + 1))
        raise KeyError(f"unknown ball test '{self.kind}'")


TestBattery = List[Tuple[SpatialTest, BallTest]]


def pair_test(nu: YoungTriple, eta: SpatialTest, psi: BallTest) -> float:
    """<nu, eta (x) Psi> with Psi = T^-1(T Psi)."""
    total = 0.0
    z, w, owner = nu.flat_osc
    if len(z):
        weight = eta(nu.mu.points)[owner] * w * (1.0 + np.linalg.norm(z, axis=1)) ** nu.spec.p
        total = float(weight @ psi.interior(to_ball_coords(z), nu.spec))
    live = np.nonzero(nu.conc.weights > 0)[0]
    if len(live):
        ec = eta(nu.conc.points[live]) * nu.conc.weights[live]
        for weight, i in zip(ec, live):
            if weight != 0.0:
                total += weight * sum(w * psi.boundary(atom) for atom, w in nu.atoms_of(i))
    return total


def default_battery(spec: CompactificationSpec, x_dim: int = 1, n_centers: int = 4) -> TestBattery:
    centers = [tuple(c) for c in lebesgue_grid(n_centers, x_dim).points]
    if x_dim == 1:
        centers += [(0.0,), (1.0,)]
    spatial = [SpatialTest()] + [SpatialTest(c) for c in centers]
    ball = [BallTest("mass"), BallTest("radial")] + [BallTest("coord", (k,)) for k in range(spec.dim)]
    if spec.dim == 1:
        ball += [BallTest("bump", (c,)) for c in (-0.75, -0.25, 0.25, 0.75)]
    else:
        for k in range(spec.dim):
            for s in (-0.5, 0.5):
                ball.append(BallTest("bump", tuple(s * np.eye(spec.dim)[k])))
    ball += [BallTest("gen", (i,)) for i in range(len(spec.generators))]
    return [(e, b) for e in spatial for b in ball]


def ym_distance(nu1: YoungTriple, nu2: YoungTriple, battery: Optional[TestBattery] = None) -> float:
    """Largest pairing gap over a finite battery of tensor tests; a lower bound of the Kantorovich distance."""
    if nu1.spec.to_dict() != nu2.spec.to_dict():
        raise ValueError("triples use different compactifications")
    battery = battery or default_battery(nu1.spec, nu1.x_dim)
    return max(abs(pair_test(nu1, e, b) - pair_test(nu2, e, b)) for e, b in battery)


class TripleComparison(NamedTuple):
    fiber_gap: float
    lambda_gap: float
    lambda_distance: float
    angle_gap: float
    ym: float

    def within(self, tol: float) -> bool:
        return max(self.fiber_gap, self.lambda_gap, self.angle_gap) <= tol


def compare_triples(nu1: YoungTriple, nu2: YoungTriple, battery: Optional[TestBattery] = None) -> TripleComparison:
    """Fiberwise, concentration and angle gaps between two triples on matching cells."""
    fiber_gap = 0.0
    for x, fiber in zip(nu1.osc.cells, nu1.osc.fibers):
        idx = nu2.osc.index_of(x)
        other = nu2.osc.fibers[idx] if idx is not None else DiscreteMeasure.dirac(np.zeros(nu1.dim))
        fiber_gap = max(fiber_gap, fiber_distance(fiber, other))
    lambda_gap = abs(nu1.lambda_mass() - nu2.lambda_mass())
    c1, c2 = nu1.conc.support(), nu2.conc.support()
    lambda_distance = lip_dual_distance(c1, c2) if len(c1) or len(c2) else 0.0
    angle_gap = 0.0
    for i in np.nonzero(nu1.conc.weights > 0)[0]:
        j = None
        hits = np.nonzero(np.all(np.abs(nu2.conc.points - nu1.conc.points[i]) <= BOUNDARY_TOL, axis=1))[0]
        if len(hits):
            j = int(hits[0])
        d2 = _direction_measure(nu2, j) if j is not None and nu2.conc.weights[j] > 0 else DiscreteMeasure.zero(nu1.dim)
        angle_gap = max(angle_gap, lip_dual_distance(_direction_measure(nu1, i), d2))
    return TripleComparison(fiber_gap, lambda_gap, lambda_distance, angle_gap, ym_distance(nu1, nu2, battery))


def r_cut_sensitivity(seq: SampledSequence, spec: Optional[CompactificationSpec] = None,
                      cuts: Sequence[float] = (1e2, 1e3, 1e4), f: Optional[Integrand] = None) -> pd.DataFrame:
    """lambda mass and pairing of the estimate for several cut-offs."""
    spec = spec or sphere_spec(seq.dim)
    f = f or abs_integrand(seq.dim)
    rows = []
    for cut in cuts:
        nu = estimate(seq, spec, R_cut=cut)
        rows.append({"R_cut": cut, "lambda_mass": nu.lambda_mass(), "pair": pair(nu, f),
                     "atoms": len(nu.registry)})
    return pd.DataFrame(rows)
