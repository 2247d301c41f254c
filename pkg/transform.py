"""
p-growth integrands and the transform T onto the open unit ball.

    (T f)(x, zh) = (1 - |zh|)^p f(x, zh / (1 - |zh|))
    (T^-1 g)(x, z) = (1 + |z|)^p g(x, z / (1 + |z|))

Recession analysis (regular recession, upper recession along a boundary atom),
the perspective functional and sampled Lipschitz norms live here as well.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from config import GROWTH_SAMPLES, REC_MAGNITUDE_DECADES, REC_POINTS_PER_DECADE, SEED, TOL_REC, UPPER_REC_TRIALS

logger = logging.getLogger(__name__)


class DomainError(ValueError):
    """Ball function evaluated outside the open unit ball."""


class GrowthViolationError(ValueError):
    """Integrand exceeds its certified growth bound."""


class NoRecessionError(ValueError):
    """Integrand has no regular recession function."""


def as_targets(z, dim: int) -> np.ndarray:
    """Coerce target-space input into an (N, dim) float array."""
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    return arr


def to_ball_coords(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z / (1.0 + np.linalg.norm(z, axis=-1, keepdims=True))


def from_ball_coords(zhat: np.ndarray) -> np.ndarray:
    zhat = np.asarray(zhat, dtype=float)
    r = np.linalg.norm(zhat, axis=-1, keepdims=True)
    if np.any(r >= 1.0):
        raise DomainError("ball coordinates must satisfy |zhat| < 1")
    return zhat / (1.0 - r)


def sample_targets(n: int, dim: int, rng: np.random.Generator, log_min: float = -3.0,
                   log_max: float = 6.0) -> np.ndarray:
    """Random directions with log-uniform magnitudes in [10^log_min, 10^log_max]."""
    dirs = rng.normal(size=(n, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    mags = 10.0 ** rng.uniform(log_min, log_max, size=n)
    return dirs * mags[:, None]


@dataclass(frozen=True)
class Integrand:
    """
    Vectorised integrand f(z, x) of p-growth: |f(x, z)| <= growth_C (1 + |z|)^p.

    ``func`` receives z as an (N, dim) array and x as (N, x_dim) or None and
    returns N values. ``recession`` optionally gives the closed-form
    recession function on unit vectors.
    """

    func: Callable[[np.ndarray, Optional[np.ndarray]], np.ndarray]
    p: float = 1.0
    growth_C: float = 1.0
    label: str = "integrand"
    dim: int = 1
    x_dim: int = 0
    recession: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    homogeneous: bool = False
    check_growth: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"growth exponent p={self.p} must be >= 1")
        if self.check_growth:
            self.certify()

    def __call__(self, z, x: Optional[np.ndarray] = None) -> np.ndarray:
        zz = as_targets(z, self.dim)
        if x is not None:
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = np.broadcast_to(x, (len(zz), len(x)))
        return np.asarray(self.func(zz, x), dtype=float).reshape(-1)

    def certify(self, samples: int = GROWTH_SAMPLES):
        """Probabilistic growth check over seeded samples; raises on violation."""
        rng = np.random.default_rng(SEED)
        z = sample_targets(samples, self.dim, rng)
        z[: min(8, samples)] = 0.0
        x = rng.uniform(size=(samples, self.x_dim)) if self.x_dim else None
        values = self(z, x)
        bound = self.growth_C * (1.0 + np.linalg.norm(z, axis=1)) ** self.p
        ratio = np.abs(values) / bound
        if not np.all(np.isfinite(values)) or np.max(ratio) > 1.0 + 1e-9:
            worst = float(np.nanmax(ratio)) if np.any(np.isfinite(ratio)) else float("inf")
            raise GrowthViolationError(f"{self.label}: |f| / (C(1+|z|)^p) reaches {worst:.6g} > 1")

    def transformed(self, z, x: Optional[np.ndarray] = None) -> np.ndarray:
        """Tf evaluated at the images of raw points z."""
        zz = as_targets(z, self.dim)
        return self(zz, x) / (1.0 + np.linalg.norm(zz, axis=1)) ** self.p

    def tail_values(self, z, x: Optional[np.ndarray] = None) -> np.ndarray:
        """f(z) / |z|^p, the boundary value estimate of Tf along diverging z."""
        zz = as_targets(z, self.dim)
        return self(zz, x) / np.linalg.norm(zz, axis=1) ** self.p

    def scaled(self, alpha: float, label: Optional[str] = None) -> "Integrand":
        rec = self.recession
        return Integrand(
            func=lambda z, x: alpha * self.func(z, x),
            p=self.p,
            growth_C=abs(alpha) * self.growth_C,
            label=label or f"{alpha:g}*{self.label}",
            dim=self.dim,
            x_dim=self.x_dim,
            recession=(lambda e: alpha * rec(e)) if rec is not None else None,
            homogeneous=self.homogeneous,
            check_growth=False,
        )


@dataclass(frozen=True)
class BallFunction:
    """Bounded function g(x, zh) on the open unit ball, |g| <= bound."""

    func: Callable[[np.ndarray, Optional[np.ndarray]], np.ndarray]
    bound: float
    p: float = 1.0
    dim: int = 1
    label: str = "ball"

    def __call__(self, zhat, x: Optional[np.ndarray] = None) -> np.ndarray:
        zz = as_targets(zhat, self.dim)
        if np.any(np.linalg.norm(zz, axis=1) >= 1.0):
            raise DomainError("ball coordinates must satisfy |zhat| < 1")
        return np.asarray(self.func(zz, x), dtype=float).reshape(-1)


def to_ball(f: Integrand) -> BallFunction:
    def g(zhat, x):
        r = np.linalg.norm(zhat, axis=1)
        return (1.0 - r) ** f.p * f.func(zhat / (1.0 - r)[:, None], x)

    return BallFunction(func=g, bound=f.growth_C, p=f.p, dim=f.dim, label=f"T[{f.label}]")


def from_ball(g: BallFunction, p: Optional[float] = None, label: Optional[str] = None) -> Integrand:
    p = g.p if p is None else p

    def f(z, x):
        r = np.linalg.norm(z, axis=1)
        return (1.0 + r) ** p * g.func(z / (1.0 + r)[:, None], x)

    return Integrand(func=f, p=p, growth_C=g.bound, label=label or f"Tinv[{g.label}]", dim=g.dim,
                     check_growth=False)


def direction_net(dim: int, count: Optional[int] = None, seed: int = SEED) -> np.ndarray:
    """Finite set of unit directions: +-1 in 1D, a uniform circle in 2D, seeded sphere samples above."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        count = count or 64
        theta = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    count = count or 256
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(count, dim))
    dirs[: 2 * dim] = np.vstack([np.eye(dim), -np.eye(dim)])[: min(count, 2 * dim)]
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def default_magnitudes(decades: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Log-spaced profile magnitudes over ``decades`` (default REC_MAGNITUDE_DECADES), at least 4 decades."""
    lo, hi = decades or REC_MAGNITUDE_DECADES
    if hi - lo < 4:
        raise ValueError(f"recession profile needs >= 4 decades, got 10^{lo}..10^{hi}")
    return 10.0 ** np.linspace(lo, hi, (hi - lo) * REC_POINTS_PER_DECADE + 1)


@dataclass(frozen=True)
class RecessionEstimate:
    direction: np.ndarray
    liminf_est: float
    limsup_est: float
    regular: bool
    value: Optional[float]


def recession_profile(
    f: Integrand,
    directions: Optional[np.ndarray] = None,
    magnitudes: Optional[np.ndarray] = None,
    tol: float = TOL_REC,
    x: Optional[np.ndarray] = None,
) -> List[RecessionEstimate]:
    """
    Tf along zh = t e / (1 + t) for every direction e.

    A direction is regular when the spread of Tf over the last two decades of
    magnitudes stays below ``tol`` (relative).
    """
    dirs = direction_net(f.dim) if directions is None else as_targets(directions, f.dim)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    mags = default_magnitudes() if magnitudes is None else np.sort(np.asarray(magnitudes, dtype=float))
    if np.log10(mags[-1] / mags[0]) < 4.0 - 1e-12:
        raise ValueError("magnitudes must span at least four decades")
    tail = mags >= mags[-1] / 100.0
    z = (dirs[:, None, :] * mags[None, :, None]).reshape(-1, f.dim)
    xs = None if x is None else np.broadcast_to(np.asarray(x, dtype=float), (len(z), f.x_dim))
    tvals = (f(z, xs) / (1.0 + np.linalg.norm(z, axis=1)) ** f.p).reshape(len(dirs), len(mags))
    if np.any(np.abs(tvals) > f.growth_C * (1.0 + 1e-9)):
        raise GrowthViolationError(f"{f.label}: |Tf| exceeds growth constant {f.growth_C}")
    out = []
    for i, e in enumerate(dirs):
        lo, hi = float(tvals[i, tail].min()), float(tvals[i, tail].max())
        regular = (hi - lo) < tol * max(1.0, abs(0.5 * (hi + lo)))
        value = None
        if regular:
            if f.homogeneous:
                value = float(f(e[None, :], None if x is None else np.atleast_2d(x))[0])
            elif f.recession is not None:
                value = float(np.asarray(f.recession(e[None, :])).reshape(-1)[0])
            else:
                t = mags[-1]
                zz = (t * e)[None, :]
                value = float(f(zz, None if x is None else np.atleast_2d(x))[0] / t ** f.p)
        out.append(RecessionEstimate(e, lo, hi, regular, value))
    return out


def recession_value(f: Integrand, direction: np.ndarray) -> Optional[float]:
    """f^infinity at one unit direction, or None when the profile is irregular."""
    direction = np.asarray(direction, dtype=float).reshape(1, -1)
    if f.recession is not None:
        return float(np.asarray(f.recession(direction / np.linalg.norm(direction))).reshape(-1)[0])
    est = recession_profile(f, directions=direction)[0]
    return est.value if est.regular else None


def upper_recession(f: Integrand, atom, spec, trials: int = UPPER_REC_TRIALS, log_span: float = np.pi,
                    seed: int = SEED) -> float:
    """
    Heuristic f-sharp estimate at a boundary atom.

    Takes the tail maximum of f(z)/|z|^p along the atom's stored witness and
    then searches random perturbations of every tail witness point (magnitude
    factor e^u, u in [-log_span, log_span], small direction jitter). A
    candidate counts only if it stays within ``spec.tol_equiv`` of the atom's
    signature. The result is a lower bound of the true supremum over the class.
    """
    witness = atom.witness_array()
    if len(witness) < 8:
        raise ValueError(f"atom {atom.id} has {len(witness)} witness points, need >= 8")
    tail = witness[len(witness) // 2:]
    best = float(np.max(f.tail_values(tail)))
    rng = np.random.default_rng(seed + int(atom.id))
    for z in tail:
        r = np.linalg.norm(z)
        mags = r * np.exp(rng.uniform(-log_span, log_span, size=trials))
        dirs = z / r + rng.normal(scale=spec.tol_equiv / 4.0, size=(trials, len(z)))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        cands = dirs * mags[:, None]
        ok = (mags >= spec.mag_min) & (spec.signature_distance(cands, atom) <= spec.tol_equiv)
        if np.any(ok):
            best = max(best, float(np.max(f.tail_values(cands[ok]))))
    return best


class Perspective:
    """f~(x, z, t) = f(x, z/t)|t| for t != 0 and f^infinity(x, z) at t = 0."""

    def __init__(self, f: Integrand):
        if f.p != 1:
            raise ValueError("perspective needs linear growth (p = 1)")
        estimates = recession_profile(f)
        if not all(e.regular for e in estimates):
            raise NoRecessionError(f"no recession: {f.label} is not regular at infinity")
        self.f = f

    def recession(self, z: np.ndarray) -> np.ndarray:
        z = as_targets(z, self.f.dim)
        r = np.linalg.norm(z, axis=1)
        out = np.zeros(len(z))
        nz = r > 0
        if not np.any(nz):
            return out
        e = z[nz] / r[nz, None]
        if self.f.homogeneous:
            vals = self.f(e)
        elif self.f.recession is not None:
            vals = np.asarray(self.f.recession(e)).reshape(-1)
        else:
            vals = np.array([est.value for est in recession_profile(self.f, directions=e)])
        out[nz] = r[nz] * vals
        return out

    def __call__(self, z, t, x: Optional[np.ndarray] = None) -> np.ndarray:
        z = as_targets(z, self.f.dim)
        t = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), (len(z),))
        out = np.empty(len(z))
        live = t != 0
        if np.any(live):
            xs = None if x is None else np.asarray(x)[live] if np.ndim(x) == 2 else x
            out[live] = self.f(z[live] / t[live, None], xs) * np.abs(t[live])
        if np.any(~live):
            out[~live] = self.recession(z[~live])
        return out


def perspective(f: Integrand) -> Perspective:
    return Perspective(f)


class LipschitzNorms(NamedTuple):
    sup_T: float
    lip_T: float
    weighted_lip: float
    lip_f: float


def lipschitz_pairs(dim: int, n: int = GROWTH_SAMPLES, seed: int = SEED) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded point pairs: half close neighbours, half independent draws."""
    rng = np.random.default_rng(seed)
    z = sample_targets(n, dim, rng)
    half = n // 2
    w = np.empty_like(z)
    scale = 1e-3 * (1.0 + np.linalg.norm(z[:half], axis=1, keepdims=True))
    w[:half] = z[:half] + scale * rng.normal(size=(half, dim))
    w[half:] = sample_targets(n - half, dim, rng)
    return z, w


def lipschitz_norms(f: Integrand, pairs: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> LipschitzNorms:
    """Sampled (lower-bound) estimates of sup|Tf|, Lip(Tf), Lip(f) and the weighted norm."""
    z, w = lipschitz_pairs(f.dim) if pairs is None else (as_targets(pairs[0], f.dim), as_targets(pairs[1], f.dim))
    if len(z) == 0:
        raise ValueError("sample must be nonempty")
    fz, fw = f(z), f(w)
    tz = fz / (1.0 + np.linalg.norm(z, axis=1)) ** f.p
    tw = fw / (1.0 + np.linalg.norm(w, axis=1)) ** f.p
    sup_T = float(max(np.max(np.abs(tz)), np.max(np.abs(tw))))
    dz = np.linalg.norm(z - w, axis=1)
    dball = np.linalg.norm(to_ball_coords(z) - to_ball_coords(w), axis=1)
    live = dz > 0
    lip_f = float(np.max(np.abs(fz - fw)[live] / dz[live])) if np.any(live) else 0.0
    live_b = dball > 0
    lip_T = float(np.max(np.abs(tz - tw)[live_b] / dball[live_b])) if np.any(live_b) else 0.0
    return LipschitzNorms(sup_T, lip_T, sup_T + lip_f, lip_f)


def linear_combination(terms: Sequence[Tuple[float, Integrand]], label: Optional[str] = None) -> Integrand:
    """sum_k c_k f_k; every term must share dim, x_dim and p."""
    if not terms:
        raise ValueError("empty combination")
    first = terms[0][1]
    if any(t.p != first.p or t.dim != first.dim for _, t in terms):
        raise ValueError("terms must share growth exponent and dimension")
    coeffs = [c for c, _ in terms]
    fs = [t for _, t in terms]

    def func(z, x):
        return sum(c * t.func(z, x) for c, t in zip(coeffs, fs))

    rec = None
    if all(t.recession is not None or t.homogeneous for t in fs):
        def rec(e):
            return sum(c * (np.asarray(t.recession(e)).reshape(-1) if t.recession is not None else t(e))
                       for c, t in zip(coeffs, fs))

    return Integrand(
        func=func,
        p=first.p,
        growth_C=float(sum(abs(c) * t.growth_C for c, t in zip(coeffs, fs))),
        label=label or " + ".join(f"{c:g}*{t.label}" for c, t in zip(coeffs, fs)),
        dim=first.dim,
        x_dim=max(t.x_dim for t in fs),
        recession=rec,
        homogeneous=all(t.homogeneous for t in fs),
        check_growth=False,
    )
