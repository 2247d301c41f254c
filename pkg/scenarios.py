"""
Scenario gallery: end-to-end runs of the constructions with checked
tolerances. Every scenario takes a ScenarioConfig and returns a
ScenarioReport of (tolerance, measured, pass) checks plus tables and
convergence series for the report writer.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

import gallery
from compactification import AtomRegistry, CompactificationSpec, spec_from_ids, sphere_spec
from config import (
    ATOM_MATCH_TOL,
    ENVELOPE_MAX_ITERS,
    ENVELOPE_NODES,
    OUTPUT_DIR,
    SCENARIO_CELLS,
    SCENARIO_RESOLUTION,
    SEED,
    TOL_JENSEN,
    TOL_SCN,
)
from convexity import (
    IndexSet,
    conformal_minorant,
    convex_battery,
    diagonal_incomparable,
    envelope_integrand,
    gk_envelope,
    jensen_verify,
    minorant_gap,
    muller_gk,
    rank_one_violation,
    separation,
)
from inhomogenization import inhomogenize_ac, inhomogenize_singular
from integrand_catalog import abs_integrand, get_integrand
from measure_core import (
    DiscreteMeasure,
    ParametrizedMeasure,
    VectorDiscreteMeasure,
    default_eps_sing,
    group_labels,
    lebesgue_grid,
    radon_nikodym,
    tv_pair,
)
from transform import Integrand, upper_recession
from transport import FiniteMetricSpace, kantorovich_norm
from young import (
    ConcentrationOverlapError,
    IntegrandNotContinuousError,
    YoungTriple,
    barycentre,
    boundary_value,
    decompose,
    elementary,
    elementary_measure,
    estimate,
    fiber_distance,
    is_equiintegrable,
    join,
    pair,
    r_cut_sensitivity,
    rescale_compare,
    staircase,
    ym_distance,
)

logger = logging.getLogger(__name__)

CONCENTRATION_R_CUT = 32.0
AREA_STRICT_EPS = tuple(2.0 ** -k for k in range(3, 9))
SINGULAR_A = (4, 6, 8)
AC_T = tuple(2.0 ** -k for k in range(3, 9))
BUDGET_DECAY = 0.9
BUDGET_FLOOR = 0.02


class CharacterisationError(ValueError):
    """Characterisation hypotheses fail for the candidate triple."""


@dataclass
class ScenarioConfig:
    scenario: str
    resolution: int = SCENARIO_RESOLUTION
    cells: int = SCENARIO_CELLS
    js: Optional[Tuple[float, ...]] = None
    spec: Tuple[str, ...] = ()
    battery: Tuple[str, ...] = ("abs", "area")
    tol: float = TOL_SCN
    r_cut: Optional[float] = None
    output_dir: str = OUTPUT_DIR
    seed: int = SEED
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.resolution < 2 or self.resolution & (self.resolution - 1):
            raise ValueError(f"resolution must be a power of two, got {self.resolution}")
        if self.resolution % self.cells:
            raise ValueError("cells must divide the resolution")
        if self.js is not None:
            self.js = tuple(float(j) for j in self.js)
            if not self.js:
                raise ValueError("j-range must be nonempty")
        self.spec = tuple(self.spec)
        self.battery = tuple(self.battery)

    @classmethod
    def from_dict(cls, data: Dict) -> "ScenarioConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        extra = {k: v for k, v in data.items() if k not in cls.__dataclass_fields__}
        if extra:
            known["params"] = {**extra, **known.get("params", {})}
        return cls(**known)

    @classmethod
    def from_json(cls, path: str, scenario: Optional[str] = None) -> "ScenarioConfig":
        with open(path) as fh:
            data = json.load(fh)
        if scenario is not None:
            data["scenario"] = scenario
        return cls.from_dict(data)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    expected: Optional[float] = None

    def to_dict(self) -> Dict:
        return {"name": self.name, "measured": float(self.measured), "tolerance": float(self.tolerance),
                "expected": self.expected, "pass": bool(self.passed)}


@dataclass
class ScenarioReport:
    scenario: str
    config: ScenarioConfig
    checks: List[Check] = field(default_factory=list)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    series: Dict[str, Dict] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def _add(self, check: Check) -> Check:
        self.checks.append(check)
        mark = "✅" if check.passed else "❌"
        logger.info(f"{mark} {self.scenario}/{check.name}: measured {check.measured:.6g} (tol {check.tolerance:.3g})")
        return check

    def near(self, name: str, measured: float, expected: float, tol: float) -> Check:
        return self._add(Check(name, float(measured), tol, bool(abs(measured - expected) <= tol), float(expected)))

    def at_most(self, name: str, measured: float, bound: float) -> Check:
        return self._add(Check(name, float(measured), bound, bool(measured <= bound)))

    def at_least(self, name: str, measured: float, bound: float) -> Check:
        return self._add(Check(name, float(measured), bound, bool(measured >= bound)))

    def holds(self, name: str, condition: bool, measured: float = float("nan")) -> Check:
        return self._add(Check(name, float(measured), 0.0, bool(condition)))

    def add_series(self, name: str, x: Sequence[float], y: Sequence[float], xlabel: str, ylabel: str,
                   logx: bool = False, logy: bool = False):
        self.series[name] = {"x": [float(v) for v in x], "y": [float(v) for v in y], "xlabel": xlabel,
                             "ylabel": ylabel, "logx": logx, "logy": logy}

    def checks_frame(self) -> pd.DataFrame:
        return pd.DataFrame([c.to_dict() for c in self.checks])

    def to_dict(self) -> Dict:
        return {
            "scenario": self.scenario,
            "pass": self.passed,
            "config": self.config.to_dict(),
            "checks": [c.to_dict() for c in self.checks],
            "tables": {k: json.loads(v.to_json(orient="records")) for k, v in self.tables.items()},
            "series": self.series,
        }


def _spec(cfg: ScenarioConfig, dim: int = 1) -> CompactificationSpec:
    return spec_from_ids(cfg.spec, dim) if cfg.spec else sphere_spec(dim)


def _budget_decay(report: ScenarioReport, label: str, totals: Sequence[float]):
    """Each step must shrink the budget by BUDGET_DECAY until it falls below BUDGET_FLOOR."""
    for k in range(1, len(totals)):
        prev, cur = totals[k - 1], totals[k]
        if prev < BUDGET_FLOOR:
            break
        report.at_most(f"{label}_decay[{k}]", cur, BUDGET_DECAY * prev)


# ---------------------------------------------------------------------------
# characterisation inputs

@dataclass(frozen=True)
class PiecewiseAffineField:
    """u on (0, 1): affine pieces between ``knots`` with jumps at the knots."""

    knots: Tuple[float, ...]
    slopes: Tuple[float, ...]
    jumps: Tuple[float, ...]
    value0: float = 0.0

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        if len(self.slopes) != len(knots) + 1 or len(self.jumps) != len(knots):
            raise ValueError("need one slope per piece and one jump per knot")
        if any(b <= a for a, b in zip(knots, knots[1:])) or (knots and (knots[0] <= 0 or knots[-1] >= 1)):
            raise ValueError("knots must increase strictly inside (0, 1)")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "slopes", tuple(float(s) for s in self.slopes))
        object.__setattr__(self, "jumps", tuple(float(j) for j in self.jumps))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.asarray(self.slopes)[np.searchsorted(self.knots, x, side="right")]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        starts = np.concatenate([[0.0], self.knots])
        base = [self.value0]
        for k, knot in enumerate(self.knots):
            base.append(base[-1] + self.slopes[k] * (knot - starts[k]) + self.jumps[k])
        piece = np.searchsorted(self.knots, x, side="right")
        return np.asarray(base)[piece] + np.asarray(self.slopes)[piece] * (x - starts[piece])

    def derivative_measure(self, mu: DiscreteMeasure) -> VectorDiscreteMeasure:
        """Du = u' mu + sum of jumps at the knots."""
        ac = VectorDiscreteMeasure(mu.points, (self.gradient(mu.points[:, 0]) * mu.weights)[:, None])
        live = [k for k, j in enumerate(self.jumps) if j != 0.0]
        if not live:
            return ac
        jumps = VectorDiscreteMeasure(np.array([[self.knots[k]] for k in live]),
                                      np.array([[self.jumps[k]] for k in live]))
        return ac + jumps

    def to_dict(self) -> Dict:
        return {"knots": list(self.knots), "slopes": list(self.slopes), "jumps": list(self.jumps),
                "value0": self.value0}

    @classmethod
    def from_dict(cls, data: Dict) -> "PiecewiseAffineField":
        return cls(tuple(data["knots"]), tuple(data["slopes"]), tuple(data["jumps"]), float(data.get("value0", 0.0)))


class CharacterisationReport(NamedTuple):
    table: pd.DataFrame
    first_moment: float
    barycentre_gap: float
    min_slack: float
    passed: bool


def _sharp(f: Integrand, atom, spec: CompactificationSpec) -> float:
    try:
        return boundary_value(f, atom, spec)
    except IntegrandNotContinuousError:
        return upper_recession(f, atom, spec)


def _vector_gap(a: VectorDiscreteMeasure, b: VectorDiscreteMeasure) -> float:
    """Largest componentwise bounded-Lipschitz distance between two vector measures."""
    pts = np.vstack([a.points, b.points])
    labels, first = group_labels(pts, ATOM_MATCH_TOL)
    space = FiniteMetricSpace.euclidean(pts[first])
    gap = 0.0
    for k in range(a.target_dim):
        signed = np.concatenate([a.vweights[:, k], -b.vweights[:, k]])
        delta = np.bincount(labels, weights=signed, minlength=len(first))
        delta[np.abs(delta) < 1e-15] = 0.0
        gap = max(gap, kantorovich_norm(delta, space.dist).value)
    return gap


def verify_characterisation(nu: YoungTriple, u: PiecewiseAffineField, battery: Optional[Sequence[Integrand]] = None,
                            tol: float = TOL_JENSEN, bary_tol: float = TOL_SCN) -> CharacterisationReport:
    """
    Check a candidate triple against a candidate field u: finite first
    moment, the density inequality on mu-cells, the singular inequality on
    the atoms of lambda^s and D^s u, and the barycentre identity Du = nu_bar.
    """
    if nu.lambda_boundary() > tol:
        raise CharacterisationError(f"hypothesis λ(∂Ω)=0 violated: λ(∂Ω) = {nu.lambda_boundary():.3g}")
    if nu.spec.p != 1 or nu.x_dim != 1:
        raise ValueError("characterisation check works with p = 1 on (0, 1)")
    battery = list(battery) if battery is not None else [f for f, _ in convex_battery(nu.dim)]
    mu = nu.mu
    du = u.derivative_measure(mu)
    rn = radon_nikodym(du, mu)
    grad = rn.density

    live = np.nonzero(nu.conc.weights > 0)[0]
    ac = np.zeros(len(live), dtype=bool)
    cell = np.zeros(len(live), dtype=int)
    if len(live):
        dist, cell = cKDTree(mu.points).query(nu.conc.points[live], p=np.inf)
        ac = (dist <= ATOM_MATCH_TOL) & (mu.weights[cell] > default_eps_sing(mu))
    lam_sing = live[~ac]
    sing_pts = rn.singular.points
    scratch = AtomRegistry(nu.spec)

    first_moment = float(sum(w * (f.weights @ np.linalg.norm(f.points, axis=1))
                             for w, f in zip(mu.weights, nu.osc.fibers))) + nu.lambda_mass()
    rows = [{"condition": 1, "integrand": "1(x)|z|", "slack": 0.0, "measured": first_moment,
             "pass": bool(np.isfinite(first_moment))}]
    for f in battery:
        cache: Dict[int, float] = {}

        def angle_value(i: int) -> float:
            total = 0.0
            for atom, w in nu.atoms_of(i):
                if atom.id not in cache:
                    cache[atom.id] = _sharp(f, atom, nu.spec)
                total += w * cache[atom.id]
            return total

        rhs = np.array([f(fb.points) @ fb.weights for fb in nu.osc.fibers])
        for i, c in zip(live[ac], cell[ac]):
            rhs[c] += nu.conc.weights[i] / mu.weights[c] * angle_value(i)
        slack2 = float(np.min(rhs - f(grad)))
        rows.append({"condition": 2, "integrand": f.label, "slack": slack2, "measured": slack2,
                     "pass": slack2 >= -tol})

        slack3 = np.inf
        matched = set()
        for v, x in zip(rn.singular.vweights, sing_pts):
            r = float(np.linalg.norm(v))
            lhs = r * _sharp(f, scratch[scratch.atom_for_direction(v / r)], nu.spec) if r > 0 else 0.0
            hits = [i for i in lam_sing if np.max(np.abs(nu.conc.points[i] - x)) <= ATOM_MATCH_TOL]
            rhs3 = 0.0
            for i in hits:
                matched.add(int(i))
                rhs3 += nu.conc.weights[i] * angle_value(i)
            slack3 = min(slack3, rhs3 - lhs)
        for i in lam_sing:
            if int(i) not in matched:
                slack3 = min(slack3, nu.conc.weights[i] * angle_value(i))
        slack3 = 0.0 if not np.isfinite(slack3) else float(slack3)
        rows.append({"condition": 3, "integrand": f.label, "slack": slack3, "measured": slack3,
                     "pass": slack3 >= -tol})

    table = pd.DataFrame(rows)
    gap = _vector_gap(barycentre(nu), du)
    min_slack = float(table["slack"].min())
    passed = bool(table["pass"].all()) and gap <= bary_tol
    return CharacterisationReport(table, first_moment, gap, min_slack, passed)


def perspective_functional(eta: VectorDiscreteMeasure, f: Integrand) -> float:
    """int f(d eta / d|eta|) d|eta| for a positively 1-homogeneous f."""
    if not f.homogeneous:
        raise ValueError(f"perspective functional needs a 1-homogeneous integrand, got {f.label}")
    norms = eta.norms()
    live = norms > 0
    if not np.any(live):
        return 0.0
    return float(norms[live] @ f(eta.vweights[live] / norms[live, None]))


# ---------------------------------------------------------------------------
# scenarios

def scenario_oscillation(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("oscillation", cfg)
    js = cfg.js or gallery.OSCILLATION_JS
    seq = gallery.oscillation(js, cfg.resolution, cfg.cells)
    spec = _spec(cfg, 1)
    nu = estimate(seq, spec, cfg.r_cut)

    target = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])
    gaps = np.array([fiber_distance(f, target) for f in nu.osc.fibers])
    report.at_most("fiber_gap", gaps.max(), cfg.tol)
    report.at_most("lambda_mass", nu.lambda_mass(), cfg.tol)

    two = gallery.two_scale(gallery.TWO_SCALE_JS, cfg.resolution, cfg.cells)
    nu2 = estimate(two, spec, cfg.r_cut)
    target2 = DiscreteMeasure([[-1.5], [-0.5], [0.5], [1.5]], [0.25] * 4)
    report.at_most("two_scale_fiber_gap", max(fiber_distance(f, target2) for f in nu2.osc.fibers), cfg.tol)

    x = seq.mu.points[:, 0]
    rows = []
    for label, a in (("1", np.ones_like(x)), ("2", np.full_like(x, 2.0)), ("1+x", 1.0 + x)):
        rr = rescale_compare(seq, a, spec, cfg.tol, cfg.r_cut)
        rows.append({"a": label, "fiber_gap": rr.fiber_gap, "lambda_gap": rr.lambda_gap,
                     "angle_gap": rr.angle_gap, "pass": rr.passed})
        report.holds(f"rescale[{label}]", rr.passed, max(rr.fiber_gap, rr.lambda_gap, rr.angle_gap))
    report.tables["rescale"] = pd.DataFrame(rows)

    rows = []
    for n in (10, 20, 40):
        st = staircase(1.0 + x, n)
        rows.append({"n": n, "sup_err": st.sup_err, "ratio_err": st.ratio_err})
        report.at_most(f"staircase_sup[n={n}]", st.sup_err, 1.0 / n)
    stairs = pd.DataFrame(rows)
    report.tables["staircase"] = stairs
    report.add_series("staircase", stairs["n"], stairs["sup_err"], "n", "sup |a_n - a|", logx=True, logy=True)

    rows = []
    for fid in cfg.battery:
        f = get_integrand(fid, 1)
        limit = float(seq.integral(f)[-1])
        value = pair(nu, f)
        rows.append({"integrand": fid, "pair": value, "limit": limit})
        report.near(f"pair[{fid}]", value, limit, cfg.tol * max(1.0, abs(limit)))
    report.tables["pairing"] = pd.DataFrame(rows)

    ei = is_equiintegrable(seq)
    report.holds("equiintegrable", ei.flag, float(ei.profile[-1]))
    return report


def scenario_concentration(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("concentration", cfg)
    js = cfg.js or gallery.CONCENTRATION_JS
    seq = gallery.concentration(js, cfg.resolution, cfg.cells)
    r_cut = cfg.r_cut or CONCENTRATION_R_CUT
    spec = _spec(cfg, 1)
    nu = estimate(seq, spec, r_cut, registry=AtomRegistry(spec))

    lam = nu.lambda_mass()
    report.near("lambda_mass", lam, 1.0, 0.02)
    centre = float(nu.conc.weights @ nu.conc.points[:, 0]) / lam if lam > 0 else 1.0
    report.at_most("lambda_location", centre, 1.0 / cfg.cells)
    plus = 0.0
    for i in np.nonzero(nu.conc.weights > 0)[0]:
        plus += nu.conc.weights[i] * sum(w for atom, w in nu.atoms_of(i) if atom.dir[0] > 0)
    report.near("angle_plus", plus / lam if lam > 0 else 0.0, 1.0, cfg.tol)

    area = get_integrand("area", 1)
    value = pair(nu, area)
    report.near("pair[area]", value, 2.0, cfg.tol)

    ei = is_equiintegrable(seq)
    report.holds("not_equiintegrable", not ei.flag, float(ei.profile[-1]))
    report.at_most("profile_deviation", float(np.max(np.abs(ei.profile - 1.0))), cfg.tol)

    dec = decompose(seq, r_cut)
    report.holds("decompose_exact", bool(np.array_equal(dec.osc_part.fields + dec.conc_part.fields, seq.fields)))
    report.at_most("osc_part_lambda", estimate(dec.osc_part, spec, r_cut).lambda_mass(), cfg.tol)
    report.near("conc_part_lambda", estimate(dec.conc_part, spec, r_cut).lambda_mass(), lam, cfg.tol)

    integrals = seq.integral(area)
    report.tables["sequence"] = pd.DataFrame({"j": list(seq.js), "integral": integrals, "pair": value})
    report.tables["r_cut"] = r_cut_sensitivity(seq, spec, cuts=(r_cut, 1e2, 1e3, 1e4), f=area)
    report.add_series("area_integral", seq.js, integrals, "j", "int sqrt(1 + v_j^2)", logx=True)
    return report


def scenario_structure(cfg: ScenarioConfig) -> ScenarioReport:
    """Equi-integrability against lambda = 0, decomposition and join."""
    report = ScenarioReport("structure", cfg)
    r_cut = cfg.r_cut or CONCENTRATION_R_CUT
    spec = _spec(cfg, 1)
    res, cells = cfg.resolution, cfg.cells
    js = cfg.js or gallery.OSCILLATION_JS
    cases = {
        "oscillation": gallery.oscillation(js, res, cells),
        "concentration": gallery.concentration((float(res),), res, cells),
        "mixed": gallery.mixed(js, res, cells),
        "constant": gallery.constant(0.5, (1.0,), res, cells),
    }
    rows = []
    for name, seq in cases.items():
        ei = is_equiintegrable(seq, R_cut=r_cut)
        lam = estimate(seq, spec, r_cut).lambda_mass()
        agree = ei.flag == (lam < cfg.tol)
        rows.append({"sequence": name, "equiintegrable": ei.flag, "lambda_mass": lam, "agree": agree})
        report.holds(f"ei_iff_no_concentration[{name}]", agree, lam)
    report.tables["equiintegrability"] = pd.DataFrame(rows)

    seq = cases["mixed"]
    dec = decompose(seq, r_cut)
    report.holds("decompose_exact", bool(np.array_equal(dec.osc_part.fields + dec.conc_part.fields, seq.fields)))
    nu_o = estimate(dec.osc_part, spec, r_cut)
    report.at_most("osc_part_lambda", nu_o.lambda_mass(), cfg.tol)
    full = estimate(seq, spec, r_cut).lambda_mass()
    report.near("conc_part_lambda", estimate(dec.conc_part, spec, r_cut).lambda_mass(), full, cfg.tol)
    report.at_most("osc_part_ym", ym_distance(nu_o, estimate(cases["oscillation"], spec, r_cut)), cfg.tol)

    registry = AtomRegistry(spec)
    vseq = gallery.strongly_convergent(0.5, js, res, cells, spike_at=0.5)
    joined = join(vseq, seq, spec, registry, cfg.tol, r_cut)
    nu_sum = estimate(joined.sequence, spec, r_cut, registry=registry)
    report.at_most("join_ym", ym_distance(nu_sum, joined.predicted), cfg.tol)

    rejected = False
    try:
        join(gallery.strongly_convergent(0.5, js, res, cells, spike_at=0.0), seq, spec, AtomRegistry(spec),
             cfg.tol, r_cut)
    except ConcentrationOverlapError as e:
        logger.info(f"📊 overlap rejected: {e}")
        rejected = True
    report.holds("overlap_rejected", rejected)
    return report


def scenario_counterexample(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("counterexample", cfg)
    i_max = int(cfg.params.get("i_max", gallery.COUNTER_MAX_I))
    if i_max > gallery.COUNTER_MAX_I:
        logger.warning(f"⚠️ i range restricted to {gallery.COUNTER_MAX_I} (requested {i_max})")
        i_max = gallery.COUNTER_MAX_I
    members = gallery.counterexample(cfg.resolution, range(1, i_max + 1))
    logsin = get_integrand("logsin", 1)

    rows = []
    for i, odd, seq in members:
        u = seq.fields[0, :, 0]
        mu = seq.mu
        eta = VectorDiscreteMeasure(mu.points, (u * mu.weights)[:, None])
        rows.append({"i": i, "odd": odd, "j": seq.js[0], "integral": float(seq.integral(logsin)[0]),
                     "tv_pair": tv_pair(eta, mu), "mu_mass": mu.mass(), "mass": float(u @ mu.weights)})
    table = pd.DataFrame(rows)
    report.tables["members"] = table
    report.add_series("logsin_integral", table["j"], table["integral"], "j", "int logsin(u_j) dmu")

    even = table[~table["odd"]]
    odd = table[table["odd"]]
    report.near("even_limit", even["integral"].iloc[-1], 2.0, 0.1)
    report.near("odd_limit", odd["integral"].iloc[-1], 0.0, 0.1)
    report.at_least("oscillation_gap", even["integral"].iloc[-1] - odd["integral"].iloc[-1], 1.8)
    last = table.iloc[-1]
    expected = last["mu_mass"] + 1.0
    report.near("tv_pair", last["tv_pair"], expected, 0.03 * expected)

    seq_even, seq_odd = members[-2][2], members[-1][2]
    sphere = sphere_spec(1)
    reg = AtomRegistry(sphere)
    report.at_most("sphere_ym", ym_distance(estimate(seq_even, sphere, registry=reg),
                                            estimate(seq_odd, sphere, registry=reg)), cfg.tol)

    fine = spec_from_ids(["logsin"], 1)
    reg_l = AtomRegistry(fine)
    nu_e = estimate(seq_even, fine, registry=reg_l)
    nu_o = estimate(seq_odd, fine, registry=reg_l)

    def atom_ids(nu: YoungTriple) -> set:
        return {atom.id for i in np.nonzero(nu.conc.weights > 0)[0] for atom, _ in nu.atoms_of(i)}

    shared = atom_ids(nu_e) & atom_ids(nu_o)
    report.holds("logsin_atoms_differ", not shared, len(shared))
    report.near("logsin_pair_even", pair(nu_e, logsin), even["integral"].iloc[-1], 0.1)
    report.near("logsin_pair_odd", pair(nu_o, logsin), odd["integral"].iloc[-1], 0.1)
    return report


def scenario_area_strict(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("area_strict", cfg)
    eps_list = tuple(cfg.params.get("eps", AREA_STRICT_EPS))
    area = get_integrand("area", 1)
    rows = []
    for eps in eps_list:
        eta, mu = gallery.mollified_point_mass(eps, cfg.resolution)
        rn = radon_nikodym(eta, mu)
        functional = float(area(rn.density) @ mu.weights) + rn.singular.total_variation()
        rows.append({"eps": eps, "tv_pair": tv_pair(eta, mu), "functional": functional})
    table = pd.DataFrame(rows)
    report.tables["mollification"] = table
    report.add_series("tv_pair", table["eps"], table["tv_pair"], "eps", "|(mu, eta_eps)|", logx=True)

    report.near("tv_pair_limit", table["tv_pair"].iloc[-1], 2.0, 0.02 * 2.0)
    report.holds("tv_pair_monotone", bool(np.all(np.diff(table["tv_pair"]) >= -1e-12)))

    mu = lebesgue_grid(cfg.resolution)
    xi = elementary_measure(VectorDiscreteMeasure([[0.5]], [[1.0]]), mu)
    exact = pair(xi, area)
    report.near("xi_pair", exact, 2.0, 1e-9)
    report.near("functional_limit", table["functional"].iloc[-1], exact, 0.02 * exact)
    return report


def scenario_reshetnyak(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("reshetnyak", cfg)
    eps_list = tuple(cfg.params.get("eps", AREA_STRICT_EPS))
    rows = []
    for fid in ("abs", "directional"):
        f = get_integrand(fid, 1)
        limit = float(f(np.array([[1.0]]))[0])
        for eps in eps_list:
            eta, _ = gallery.mollified_point_mass(eps, cfg.resolution)
            value = perspective_functional(eta, f)
            rows.append({"integrand": fid, "eps": eps, "functional": value, "limit": limit,
                         "gap": abs(value - limit), "control": False})
        report.at_most(f"reshetnyak[{fid}]", rows[-1]["gap"], cfg.tol)

    f2 = get_integrand("directional", 2)
    gaps = []
    for eps in eps_list:
        eta, _ = gallery.rotating_point_mass(eps, resolution=cfg.resolution)
        weak = VectorDiscreteMeasure([[0.5]], eta.total()[None, :])
        value = perspective_functional(eta, f2)
        gap = abs(value - perspective_functional(weak, f2))
        gaps.append(gap)
        rows.append({"integrand": "directional(R^2)", "eps": eps, "functional": value,
                     "limit": perspective_functional(weak, f2), "gap": gap, "control": True})
    report.at_least("rotating_control_gap", gaps[-1], cfg.tol)
    report.tables["decay"] = pd.DataFrame(rows)

    rejected = False
    try:
        eta, _ = gallery.mollified_point_mass(eps_list[0], cfg.resolution)
        perspective_functional(eta, get_integrand("area", 1))
    except ValueError:
        rejected = True
    report.holds("non_homogeneous_rejected", rejected)
    return report


def scenario_characterisation(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("characterisation", cfg)
    mu = lebesgue_grid(cfg.cells)
    spec = sphere_spec(1)
    registry = AtomRegistry(spec)
    battery = [f for f, _ in convex_battery(1)]

    smooth = PiecewiseAffineField((0.3, 0.7), (1.0, -2.0, 0.5), (0.0, 0.0))
    nu_s = elementary(smooth.gradient(mu.points[:, 0]), mu, spec, registry)
    rep = verify_characterisation(nu_s, smooth, battery)
    report.at_least("elementary_min_slack", rep.min_slack, -TOL_JENSEN)
    report.at_most("elementary_barycentre", rep.barycentre_gap, cfg.tol)

    A, B, p, jump = 2.0, -1.0, 0.25, 0.3
    mean = p * A + (1.0 - p) * B
    u = PiecewiseAffineField((0.5,), (mean, mean), (jump,))
    atom = registry.atom_for_direction([1.0])
    fiber = DiscreteMeasure([[A], [B]], [p, 1.0 - p])
    nu_l = YoungTriple(ParametrizedMeasure(mu.points, tuple(fiber for _ in range(len(mu)))), mu,
                       DiscreteMeasure([[0.5]], [jump]), {0: DiscreteMeasure.dirac([float(atom)])}, spec, registry,
                       {"source": "laminate"})
    rep_l = verify_characterisation(nu_l, u, battery)
    report.at_least("laminate_min_slack", rep_l.min_slack, -TOL_JENSEN)
    report.holds("laminate_pass", rep_l.passed, rep_l.barycentre_gap)
    report.tables["laminate"] = rep_l.table

    restored = YoungTriple.from_dict(json.loads(json.dumps(nu_l.to_dict())))
    again = verify_characterisation(restored, PiecewiseAffineField.from_dict(u.to_dict()), battery)
    report.near("roundtrip_slack", again.min_slack, rep_l.min_slack, 1e-12)

    shifted = DiscreteMeasure([[A + 0.5], [B + 0.5]], [p, 1.0 - p])
    nu_c = YoungTriple(ParametrizedMeasure(mu.points, tuple(shifted for _ in range(len(mu)))), mu,
                       nu_l.conc, nu_l.angle, spec, registry, {"source": "corrupted"})
    rep_c = verify_characterisation(nu_c, u, battery)
    report.holds("corrupted_detected", not rep_c.passed, rep_c.barycentre_gap)

    raised = False
    nu_b = YoungTriple(nu_l.osc, mu, DiscreteMeasure([[0.0]], [jump]), nu_l.angle, spec, registry)
    try:
        verify_characterisation(nu_b, u, battery)
    except CharacterisationError:
        raised = True
    report.holds("boundary_hypothesis_enforced", raised)
    return report


def scenario_envelope(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("envelope", cfg)
    ks = tuple(cfg.params.get("ks", (8, 16, 32)))
    n = int(cfg.params.get("n", ENVELOPE_NODES))
    iters = int(cfg.params.get("iters", ENVELOPE_MAX_ITERS))
    rows = []
    ratio0 = None
    for k in ks:
        res = gk_envelope(k, n, iters)
        value = res.value_at_center()
        ratio = value / k
        ratio0 = ratio if ratio0 is None else ratio0
        violation = rank_one_violation(res)
        last = res.changes[-1] if res.changes else 0.0
        rows.append({"k": k, "envelope0": value, "ratio": ratio, "iterations": res.iterations,
                     "clamp_rate": res.clamp_rate, "violation": violation,
                     "minorant_gap": minorant_gap(res, conformal_minorant())})
        report.holds(f"envelope_positive[k={k}]", value > 0, value)
        report.near(f"ratio[k={k}]", ratio, ratio0, 0.25 * abs(ratio0))
        report.holds(f"monotone[k={k}]", all(c >= 0 for c in res.changes), min(res.changes, default=0.0))
        report.at_most(f"rank_one_violation[k={k}]", violation, last + 1e-9 * k)
        report.at_least(f"minorant[k={k}]", rows[-1]["minorant_gap"], -1e-9 * k)
        if cfg.params.get("export", False):
            res.export(os.path.join(cfg.output_dir, "envelope", f"gk_{k:g}"))
    table = pd.DataFrame(rows)
    report.tables["envelope"] = table
    report.add_series("envelope_ratio", table["k"], table["ratio"], "k", "R g_k(0) / k", logx=True)
    return report


def scenario_separation(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("separation", cfg)
    rng = np.random.default_rng(cfg.seed)
    n_max = int(cfg.params.get("n_max", 16))
    j_max = int(cfg.params.get("j_max", 8))
    n = int(cfg.params.get("n", 9))
    family = [IndexSet(tuple(int(v) for v in rng.choice(np.arange(1, n_max + 1), size=n_max // 2, replace=False)),
                       n_max) for _ in range(5)]
    diag = diagonal_incomparable(family, n_max)
    rows = []
    for k, A in enumerate(family):
        sep = separation(A, diag, range(1, j_max + 1), n)
        rows.append({"pair": k, "L": str(A), "G": str(diag), "separation": sep.value})
        report.holds(f"separated[{k}]", sep.value > 0, sep.value)
    report.tables["separation"] = pd.DataFrame(rows)
    return report


def scenario_jensen(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("jensen", cfg)
    spec = sphere_spec(4)
    registry = AtomRegistry(spec)
    # R g_1 on a 5-node grid: node spacing 2, laminate ends sit on nodes
    env = gk_envelope(1.0, int(cfg.params.get("n", 5)), int(cfg.params.get("iters", ENVELOPE_MAX_ITERS)))
    numeric = (envelope_integrand(env, muller_gk(1.0)), "numeric")
    env_tol = TOL_JENSEN + (env.changes[-1] if env.changes else 0.0)
    rng = np.random.default_rng(cfg.seed)
    none = DiscreteMeasure.zero(1)

    z = rng.normal(size=4)
    A = np.array([2.0, 2.0, 0.0, 2.0])
    B = np.array([2.0, -2.0, 0.0, 2.0])
    # a (x) b with a = e1, b = (e1 + e2) / sqrt 2
    ab = np.outer([1.0, 0.0], [1.0, 1.0]).reshape(-1) / np.sqrt(2.0)
    atom = registry.atom_for_direction(ab)
    at_atom = DiscreteMeasure([[float(atom)]], [1.0])
    origin = DiscreteMeasure.dirac(np.zeros(4))
    cases = {
        "elementary": (DiscreteMeasure.dirac(z), none, z, convex_battery(4) + [numeric], env_tol),
        "laminate": (DiscreteMeasure(np.vstack([A, B]), [0.5, 0.5]), none, 0.5 * (A + B),
                     convex_battery(4) + [numeric], env_tol),
        "concentration": (origin, at_atom, ab, convex_battery(4), TOL_JENSEN),
        "rank_one_abs": (origin, at_atom, ab, [(abs_integrand(4), "abs")], TOL_JENSEN),
    }
    frames = []
    for name, (nu0, nu_inf, bary, battery, tol) in cases.items():
        rep = jensen_verify(nu0, nu_inf, bary, battery, spec, registry, tol=tol)
        frames.append(rep.table.assign(case=name))
        report.at_least(f"jensen[{name}]", rep.min_slack, -tol)
    abs_slack = float(frames[-1]["slack"].iloc[0])
    report.near("rank_one_abs_slack", abs_slack, 0.0, 1e-9)
    report.tables["jensen"] = pd.concat(frames, ignore_index=True)
    return report


def scenario_inhomogenize_singular(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("inhomogenize_singular", cfg)
    K = int(cfg.params.get("K", 12))
    b = int(cfg.params.get("b", 2))
    a_values = tuple(cfg.params.get("a", SINGULAR_A))

    empty = gallery.singular_target([[0.5]], [0.0], [[1.0]], K)
    res0 = inhomogenize_singular(empty, a_values[0], b)
    report.at_most("zero_target_field", float(np.abs(res0.field).max()), 0.0)
    report.at_most("zero_target_budget", res0.budget.total, 0.0)

    target = gallery.singular_target([[0.5]], [1.0], [[1.0]], K)
    rows = []
    for a in a_values:
        res = inhomogenize_singular(target, a, b)
        rows.append({"a": a, **res.budget.terms, "total": res.budget.total, "discrepancy": res.discrepancy})
        report.at_most(f"within_budget[a={a}]", res.discrepancy, res.budget.total)
    table = pd.DataFrame(rows)
    report.tables["budget"] = table
    report.add_series("singular_budget", table["a"], table["total"], "a", "budget total", logy=True)
    _budget_decay(report, "singular_budget", list(table["total"]))

    K2 = int(cfg.params.get("K2", 6))
    spec4 = sphere_spec(4)
    target2 = gallery.singular_target([[0.5, 0.5]], [1.0], [[1.0, 0.0, 0.0, 0.0]], K2, 2, spec4)
    res2 = inhomogenize_singular(target2, 3, 2)
    report.at_most("within_budget[n=2]", res2.discrepancy, res2.budget.total)
    field_triple = elementary(res2.field, res2.mu, spec4, target2.registry)
    abs4 = get_integrand("abs", 4)
    report.at_most("abs_pairing[n=2]", abs(pair(field_triple, abs4) - pair(target2, abs4)), res2.budget.total)
    return report


def scenario_inhomogenize_ac(cfg: ScenarioConfig) -> ScenarioReport:
    report = ScenarioReport("inhomogenize_ac", cfg)
    K = int(cfg.params.get("K", 10))
    s = float(cfg.params.get("s", 0.5))
    t_values = tuple(cfg.params.get("t", AC_T))

    lam0 = gallery.laminate_target([1.0], [-1.0], 0.5, K)
    rows = []
    for t in t_values:
        res = inhomogenize_ac(lam0, t, s)
        rows.append({"t": t, **res.budget.terms, "total": res.budget.total, "discrepancy": res.discrepancy,
                     "E2_bound": res.budget.params["E2_bound"]})
        report.at_most(f"within_budget[t={t:g}]", res.discrepancy, res.budget.total)
        report.at_most(f"E2_bound[t={t:g}]", res.budget.terms["E2"], res.budget.params["E2_bound"] + 1e-12)
    table = pd.DataFrame(rows)
    report.tables["laminate_budget"] = table
    report.add_series("ac_budget", table["t"], table["total"], "t", "budget total", logx=True, logy=True)
    _budget_decay(report, "ac_budget", list(table["total"]))

    t_mid = t_values[len(t_values) // 2]
    dense = gallery.laminate_target([1.0], [-1.0], 0.5, K, density=0.5, direction=[1.0])
    res_d = inhomogenize_ac(dense, t_mid, s)
    report.at_most("within_budget[density]", res_d.discrepancy, res_d.budget.total)

    smooth = gallery.field_target(lambda x: np.sin(2.0 * np.pi * x[:, 0]), K)
    res_s = inhomogenize_ac(smooth, t_mid, s)
    report.at_most("within_budget[elementary]", res_s.discrepancy, res_s.budget.total)
    report.at_most("elementary_field_gap", float(np.max(np.abs(res_s.field[:, 0] - np.sin(2.0 * np.pi * res_s.mu.points[:, 0])))),
                   2.0 * np.pi * t_mid)
    return report


SCENARIOS: Dict[str, Callable[[ScenarioConfig], ScenarioReport]] = {
    "oscillation": scenario_oscillation,
    "concentration": scenario_concentration,
    "structure": scenario_structure,
    "counterexample": scenario_counterexample,
    "area_strict": scenario_area_strict,
    "reshetnyak": scenario_reshetnyak,
    "characterisation": scenario_characterisation,
    "envelope": scenario_envelope,
    "separation": scenario_separation,
    "jensen": scenario_jensen,
    "inhomogenize_singular": scenario_inhomogenize_singular,
    "inhomogenize_ac": scenario_inhomogenize_ac,
}


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    if cfg.scenario not in SCENARIOS:
        raise KeyError(f"unknown scenario '{cfg.scenario}'")
    logger.info(f"🚀 scenario {cfg.scenario}")
    report = SCENARIOS[cfg.scenario](cfg)
    mark = "✅" if report.passed else "❌"
    failed = sum(1 for c in report.checks if not c.passed)
    logger.info(f"{mark} scenario {cfg.scenario}: {len(report.checks) - failed}/{len(report.checks)} checks pass")
    return report
