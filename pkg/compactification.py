"""
Separable metric compactifications of R^d generated by finite lists of
Lipschitz integrands.

Ball points are compared with

    d(z, w) = |z - w| + sum_i 2^-i |Tf_i(z) - Tf_i(w)|,   i = 1..G

and boundary points are stored as witness sequences (BoundaryAtom) carrying
their limiting direction and generator limits.
"""

from __future__ import annotations

import bisect
import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import MAG_MIN, MAX_GENERATORS, NORMALIZATION_SAMPLES, SEED, TOL_EQUIV, WITNESS_CAPACITY
from integrand_catalog import get_integrand
from transform import Integrand, as_targets, lipschitz_norms, lipschitz_pairs

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CompactificationSpec:
    """
    Normalized generator list. Each raw generator is divided by
    max(1, sampled sup|Tf|, sampled Lip f) so the normalized family has
    sup|Tf_i| <= 1 and Lip f_i <= 1 on the seeded sample.

    The sampled Lip(Tf_i) in ball coordinates is recorded in ``ball_lips``
    but not divided out. Phase generators such as logsin have Tf_i with
    slope of order 1 + |z| near the sphere, so dividing by it would scale
    their boundary signature below tol_equiv.
    """

    raw_generators: Tuple[Integrand, ...]
    generator_ids: Tuple[str, ...]
    generators: Tuple[Integrand, ...]
    scales: Tuple[float, ...]
    dim: int = 1
    p: float = 1.0
    mag_min: float = MAG_MIN
    tol_equiv: float = TOL_EQUIV
    ball_lips: Tuple[float, ...] = ()

    @classmethod
    def build(cls, generators: Sequence[Integrand] = (), ids: Optional[Sequence[str]] = None, dim: int = 1,
              p: float = 1.0, mag_min: float = MAG_MIN, tol_equiv: float = TOL_EQUIV) -> "CompactificationSpec":
        generators = list(generators)
        ids = list(ids) if ids is not None else [g.label for g in generators]
        if len(generators) > MAX_GENERATORS:
            logger.warning(f"⚠️ Generator list truncated from {len(generators)} to {MAX_GENERATORS}")
            generators, ids = generators[:MAX_GENERATORS], ids[:MAX_GENERATORS]
        for g in generators:
            if g.p != p:
                raise ValueError(f"generator {g.label} has p={g.p}, spec uses p={p}")
            if g.dim != dim:
                raise ValueError(f"generator {g.label} acts on R^{g.dim}, spec on R^{dim}")
        normalized, scales, ball_lips = [], [], []
        pairs = lipschitz_pairs(dim, NORMALIZATION_SAMPLES, SEED)
        for g in generators:
            norms = lipschitz_norms(g, pairs)
            scale = max(1.0, norms.sup_T, norms.lip_f)
            scales.append(float(scale))
            ball_lips.append(float(norms.lip_T / scale))
            normalized.append(g.scaled(1.0 / scale, label=g.label))
            if norms.lip_T > scale:
                logger.debug(f"📊 {g.label}: sampled Lip(Tf) {norms.lip_T / scale:.3g} after normalization")
        return cls(tuple(generators), tuple(ids), tuple(normalized), tuple(scales), dim, p, mag_min, tol_equiv,
                   tuple(ball_lips))

    @property
    def is_sphere(self) -> bool:
        return len(self.generators) == 0

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(g.label for g in self.generators)

    @property
    def weights(self) -> np.ndarray:
        return 0.5 ** np.arange(1, len(self.generators) + 1)

    def ball_values(self, zhat: np.ndarray) -> np.ndarray:
        """Tf_i at ball points, shape (N, G)."""
        zhat = as_targets(zhat, self.dim)
        if not self.generators:
            return np.zeros((len(zhat), 0))
        r = np.linalg.norm(zhat, axis=1)
        if np.any(r >= 1.0):
            raise ValueError("metric_d needs interior ball points")
        raw = zhat / (1.0 - r)[:, None]
        scale = (1.0 - r) ** self.p
        return np.stack([scale * g(raw) for g in self.generators], axis=1)

    def raw_values(self, z: np.ndarray) -> np.ndarray:
        """Tf_i at the images of raw points z, shape (N, G)."""
        z = as_targets(z, self.dim)
        if not self.generators:
            return np.zeros((len(z), 0))
        return np.stack([g.transformed(z) for g in self.generators], axis=1)

    def signature(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z = as_targets(z, self.dim)
        dirs = z / np.linalg.norm(z, axis=1, keepdims=True)
        return dirs, self.raw_values(z)

    def signature_distance(self, z: np.ndarray, atom: "BoundaryAtom") -> np.ndarray:
        dirs, vals = self.signature(z)
        out = np.linalg.norm(dirs - atom.dir, axis=1)
        if self.generators:
            out = out + np.abs(vals - atom.gen_limits) @ self.weights
        return out

    def to_dict(self) -> Dict:
        return {"generators": list(self.generator_ids), "p": self.p, "dim": self.dim,
                "mag_min": self.mag_min, "tol_equiv": self.tol_equiv}

    @classmethod
    def from_dict(cls, data: Dict) -> "CompactificationSpec":
        dim = int(data.get("dim", 1))
        ids = list(data.get("generators", []))
        return cls.build([get_integrand(i, dim) for i in ids], ids, dim, float(data.get("p", 1.0)),
                         float(data.get("mag_min", MAG_MIN)), float(data.get("tol_equiv", TOL_EQUIV)))


def sphere_spec(dim: int = 1, **kwargs) -> CompactificationSpec:
    return CompactificationSpec.build([], [], dim, **kwargs)


def spec_from_ids(ids: Sequence[str], dim: int = 1, **kwargs) -> CompactificationSpec:
    return CompactificationSpec.build([get_integrand(i, dim) for i in ids], list(ids), dim, **kwargs)


def metric_d(z: np.ndarray, w: np.ndarray, spec: CompactificationSpec) -> np.ndarray:
    """Row-wise distance between ball points z and w."""
    z = as_targets(z, spec.dim)
    w = as_targets(w, spec.dim)
    out = np.linalg.norm(z - w, axis=1)
    if spec.generators:
        out = out + np.abs(spec.ball_values(z) - spec.ball_values(w)) @ spec.weights
    return out


def metric_matrix(zhat: np.ndarray, spec: CompactificationSpec) -> np.ndarray:
    zhat = as_targets(zhat, spec.dim)
    diff = zhat[:, None, :] - zhat[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    if spec.generators:
        vals = spec.ball_values(zhat)
        dist = dist + np.abs(vals[:, None, :] - vals[None, :, :]) @ spec.weights
    return dist


class BoundaryAtom:
    """Boundary point of the compactification, represented by a witness sequence."""

    def __init__(self, atom_id: int, spec: CompactificationSpec, capacity: int = WITNESS_CAPACITY):
        self.id = atom_id
        self.capacity = capacity
        self._spec = spec
        self._mags: List[float] = []
        self._points: List[np.ndarray] = []
        self.dir = np.zeros(spec.dim)
        self.gen_limits = np.zeros(len(spec.generators))
        self.spread = 0.0
        self.cauchy = True

    def add(self, z: np.ndarray):
        z = np.asarray(z, dtype=float).reshape(-1)
        r = float(np.linalg.norm(z))
        pos = bisect.bisect_left(self._mags, r)
        if pos < len(self._mags) and self._mags[pos] == r:
            return
        self._mags.insert(pos, r)
        self._points.insert(pos, z)
        if len(self._mags) > self.capacity:
            del self._mags[0]
            del self._points[0]
        self._refresh()

    def _refresh(self):
        tail = self.witness_array()[len(self._points) // 2:]
        dirs, vals = self._spec.signature(tail)
        mean_dir = dirs.mean(axis=0)
        self.dir = mean_dir / np.linalg.norm(mean_dir)
        self.gen_limits = vals.mean(axis=0) if vals.shape[1] else np.zeros(0)
        self.spread = float(np.max(self._spec.signature_distance(tail, self)))

    def validate(self) -> bool:
        """
        Unit limiting direction (to 1e-9) and a witness tail whose signatures
        stay within tol_equiv of the recorded limits. A loose tail is kept
        but flagged ``cauchy = False``.
        """
        if len(self) == 0:
            raise ValueError(f"atom {self.id} has no witness")
        if abs(np.linalg.norm(self.dir) - 1.0) > 1e-9:
            raise ValueError(f"atom {self.id}: |dir| = {np.linalg.norm(self.dir):.12g}")
        self.cauchy = self.spread <= self._spec.tol_equiv
        if not self.cauchy:
            logger.warning(f"⚠️ Atom {self.id}: witness tail not Cauchy, spread {self.spread:.3g} > "
                           f"tol_equiv {self._spec.tol_equiv:g}")
        return self.cauchy

    def witness_array(self) -> np.ndarray:
        return np.array(self._points).reshape(-1, self._spec.dim)

    def __len__(self) -> int:
        return len(self._points)

    def to_dict(self) -> Dict:
        return {"id": self.id, "dir": self.dir.tolist(), "gen_limits": self.gen_limits.tolist(),
                "witness": self.witness_array().tolist()}

    def __repr__(self) -> str:
        return f"BoundaryAtom(id={self.id}, dir={np.round(self.dir, 6).tolist()}, n={len(self)})"


class AtomRegistry:
    """
    Registry of boundary atoms for one spec. Writes go through a lock;
    ``lookup`` never mutates.
    """

    def __init__(self, spec: CompactificationSpec):
        self.spec = spec
        self.atoms: List[BoundaryAtom] = []
        self._lock = threading.Lock()
        self.logger = logging.getLogger(__name__)

    def __len__(self) -> int:
        return len(self.atoms)

    def __getitem__(self, atom_id: int) -> BoundaryAtom:
        return self.atoms[atom_id]

    def _nearest(self, z: np.ndarray) -> Optional[int]:
        best, best_d = None, np.inf
        for atom in self.atoms:
            dist = float(self.spec.signature_distance(z[None, :], atom)[0])
            if dist <= self.spec.tol_equiv and dist < best_d:
                best, best_d = atom.id, dist
        return best

    def _check(self, z, floor: Optional[float] = None) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1)
        floor = self.spec.mag_min if floor is None else floor
        r = np.linalg.norm(z)
        if r < floor or r == 0.0:
            raise ValueError(f"|z| = {r:.3g} below mag_min = {floor:g}")
        return z

    def lookup(self, z) -> Optional[int]:
        return self._nearest(self._check(z))

    def classify(self, z, floor: Optional[float] = None) -> int:
        """Atom id of z, registering a new atom when none is within tol_equiv. ``floor`` overrides mag_min."""
        z = self._check(z, floor)
        with self._lock:
            atom_id = self._nearest(z)
            if atom_id is None:
                atom = BoundaryAtom(len(self.atoms), self.spec)
                self.atoms.append(atom)
                atom_id = atom.id
            self.atoms[atom_id].add(z)
            return atom_id

    def seed_atom(self, z, n_witness: int = 8, log_step: float = 2.0 * np.pi) -> int:
        """Register (or extend) the atom of z with the witness z * e^(k log_step), k < n_witness."""
        z = self._check(z)
        with self._lock:
            atom_id = self._nearest(z)
            if atom_id is None:
                atom = BoundaryAtom(len(self.atoms), self.spec)
                self.atoms.append(atom)
                atom_id = atom.id
            r = np.linalg.norm(z)
            for k in range(n_witness):
                # keep ln(1 + |z|) on the same phase mod log_step
                target = (1.0 + r) * np.exp(k * log_step) - 1.0
                self.atoms[atom_id].add(z * (target / r))
            self.atoms[atom_id].validate()
            return atom_id

    def atom_for_direction(self, direction, magnitude: Optional[float] = None) -> int:
        direction = np.asarray(direction, dtype=float).reshape(-1)
        direction = direction / np.linalg.norm(direction)
        magnitude = magnitude or 10.0 * self.spec.mag_min
        return self.seed_atom(direction * magnitude)

    def to_dict(self) -> Dict:
        return {"spec": self.spec.to_dict(), "atoms": [a.to_dict() for a in self.atoms]}

    @classmethod
    def from_dict(cls, data: Dict, spec: Optional[CompactificationSpec] = None) -> "AtomRegistry":
        spec = spec or CompactificationSpec.from_dict(data["spec"])
        reg = cls(spec)
        for entry in sorted(data["atoms"], key=lambda a: a["id"]):
            atom = BoundaryAtom(int(entry["id"]), spec)
            for z in entry["witness"]:
                atom.add(np.asarray(z))
            atom.validate()
            reg.atoms.append(atom)
        return reg


def classify_point(z, spec: CompactificationSpec, registry: AtomRegistry) -> int:
    if registry.spec is not spec:
        raise ValueError("registry belongs to a different spec")
    return registry.classify(z)


def sphere_project(atom: BoundaryAtom) -> np.ndarray:
    return atom.dir


def stack(spec: CompactificationSpec, extra: Sequence[Integrand] = (),
          extra_ids: Optional[Sequence[str]] = None) -> CompactificationSpec:
    """Append generators; normalization of each generator does not depend on its position."""
    extra = list(extra)
    extra_ids = list(extra_ids) if extra_ids is not None else [g.label for g in extra]
    for g in extra:
        if g.p != spec.p:
            raise ValueError(f"extra generator {g.label} has p={g.p}, spec uses p={spec.p}")
    return CompactificationSpec.build(list(spec.raw_generators) + extra, list(spec.generator_ids) + extra_ids,
                                      spec.dim, spec.p, spec.mag_min, spec.tol_equiv)
