"""Built-in integrands addressable by string id in configs and on the CLI."""

from __future__ import annotations

import logging
from typing import Callable, Dict, List, Sequence

import numpy as np

from transform import Integrand

logger = logging.getLogger(__name__)


def _norm(z: np.ndarray) -> np.ndarray:
    return np.linalg.norm(z, axis=1)


def abs_integrand(dim: int = 1) -> Integrand:
    return Integrand(func=lambda z, x: _norm(z), p=1, growth_C=1.0, label="abs", dim=dim,
                     recession=lambda e: _norm(e), homogeneous=True)


def area_integrand(dim: int = 1) -> Integrand:
    return Integrand(func=lambda z, x: np.sqrt(1.0 + np.sum(z * z, axis=1)), p=1, growth_C=1.0,
                     label="area", dim=dim, recession=lambda e: _norm(e))


def logsin_integrand(dim: int = 1) -> Integrand:
    """|z|(1 + sin ln(1 + |z|)): linear growth, no recession function."""
    def func(z, x):
        r = _norm(z)
        return r * (1.0 + np.sin(np.log1p(r)))

    return Integrand(func=func, p=1, growth_C=2.0, label="logsin", dim=dim)


def affine_integrand(coef: Sequence[float], const: float = 0.0) -> Integrand:
    coef = np.asarray(coef, dtype=float).reshape(-1)
    return Integrand(
        func=lambda z, x: z @ coef + const,
        p=1,
        growth_C=float(max(abs(const), np.linalg.norm(coef))),
        label=f"affine:{','.join(f'{c:g}' for c in coef)},{const:g}",
        dim=len(coef),
        recession=lambda e: e @ coef,
    )


def linf_integrand(dim: int = 1) -> Integrand:
    return Integrand(func=lambda z, x: np.max(np.abs(z), axis=1), p=1, growth_C=1.0, label="linf",
                     dim=dim, recession=lambda e: np.max(np.abs(e), axis=1), homogeneous=True)


def huber_integrand(dim: int = 1, delta: float = 1.0) -> Integrand:
    def func(z, x):
        r = _norm(z)
        return np.where(r <= delta, 0.5 * r * r / delta, r - 0.5 * delta)

    return Integrand(func=func, p=1, growth_C=1.0, label="huber", dim=dim, recession=lambda e: _norm(e))


def directional_integrand(dim: int = 1, q: float = 0.5) -> Integrand:
    """|z|(1 + q e_1.z/|z|) = |z| + q z_1, positively 1-homogeneous."""
    return Integrand(func=lambda z, x: _norm(z) + q * z[:, 0], p=1, growth_C=1.0 + abs(q),
                     label="directional", dim=dim, recession=lambda e: _norm(e) + q * e[:, 0],
                     homogeneous=True)


def constant_integrand(c: float, dim: int = 1) -> Integrand:
    return Integrand(func=lambda z, x: np.full(len(z), float(c)), p=1, growth_C=max(abs(float(c)), 1e-300),
                     label=f"const:{c:g}", dim=dim, recession=lambda e: np.zeros(len(e)))


def weight_integrand(dim: int = 1) -> Integrand:
    """1 + |z|, the p = 1 mass weight."""
    return Integrand(func=lambda z, x: 1.0 + _norm(z), p=1, growth_C=1.0, label="weight", dim=dim,
                     recession=lambda e: _norm(e))


def projected_integrand(base: Integrand, m: int, n: int) -> Integrand:
    """g o P where P keeps the leading 2x2 block of a row-major m x n matrix."""
    if m < 2 or n < 2 or base.dim != 4:
        raise ValueError("projection needs a 2x2 base integrand and m, n >= 2")
    cols = np.array([0, 1, n, n + 1])
    rec = base.recession
    return Integrand(
        func=lambda z, x: base.func(z[:, cols], x),
        p=base.p,
        growth_C=base.growth_C,
        label=f"proj:{base.label}@{m}x{n}",
        dim=m * n,
        recession=(lambda e: rec(e[:, cols])) if rec is not None else None,
        check_growth=False,
    )


_SIMPLE: Dict[str, Callable[[int], Integrand]] = {
    "abs": abs_integrand,
    "area": area_integrand,
    "logsin": logsin_integrand,
    "linf": linf_integrand,
    "huber": huber_integrand,
    "directional": directional_integrand,
    "weight": weight_integrand,
}


def get_integrand(spec_id: str, dim: int = 1) -> Integrand:
    """
    Resolve a catalog id.

    Supported: abs, area, logsin, linf, huber, directional, weight,
    const:<c>, affine:<c1,...,cd,const>, muller_gk:<k>,
    glambda:<i1,i2,...>[/<N_max>], proj:<m>x<n>:<base id>.
    """
    key, _, arg = spec_id.partition(":")
    if key in _SIMPLE and not arg:
        return _SIMPLE[key](dim)
    if key == "const":
        return constant_integrand(float(arg), dim)
    if key == "affine":
        values = [float(v) for v in arg.split(",")]
        return affine_integrand(values[:-1], values[-1])
    if key == "muller_gk":
        from convexity import muller_gk
        return muller_gk(float(arg))
    if key == "glambda":
        from convexity import IndexSet, g_lambda
        return g_lambda(IndexSet.parse(arg))
    if key == "proj":
        shape, _, base_id = arg.partition(":")
        m, n = (int(v) for v in shape.split("x"))
        return projected_integrand(get_integrand(base_id, 4), m, n)
    raise KeyError(f"unknown integrand id '{spec_id}'")


def get_battery(ids: Sequence[str], dim: int = 1) -> List[Integrand]:
    return [get_integrand(i, dim) for i in ids]
