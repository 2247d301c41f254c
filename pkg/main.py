#!/usr/bin/env python3
"""
Main entry point untuk Young-measure lab
"""

import argparse
import asyncio
import json
import logging
import os
import signal
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from compactification import spec_from_ids, sphere_spec
from config import LOG_FILE, LOG_LEVEL
from convexity import gk_envelope, rank_one_violation
from measure_core import DiscreteMeasure, measure_from_dict
from report_writer import summary_frame, write_report, write_summary
from scenarios import (
    SCENARIOS,
    CharacterisationError,
    PiecewiseAffineField,
    ScenarioConfig,
    ScenarioReport,
    run_scenario,
    verify_characterisation,
)
from transform import to_ball_coords
from transport import metric_space_from_spec, solve_lip_dual
from young import SampledSequence, YoungTriple, estimate

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class LabRunner:
    def __init__(self, configs: Sequence[ScenarioConfig], workers: Optional[int] = None,
                 output_dir: Optional[str] = None, plots: bool = True):
        self.logger = logging.getLogger(__name__)
        self.configs = list(configs)
        self.workers = workers
        self.output_dir = output_dir
        self.plots = plots
        self.reports: List[ScenarioReport] = []
        self.executor: Optional[ProcessPoolExecutor] = None
        self.is_running = False
        self.errors = 0

    async def start(self) -> bool:
        """Jalankan semua scenario di process pool"""
        try:
            self.logger.info(f"🚀 Memulai {len(self.configs)} scenario...")
            self.is_running = True
            loop = asyncio.get_running_loop()
            self.executor = ProcessPoolExecutor(max_workers=self.workers)
            pending = [loop.run_in_executor(self.executor, run_scenario, cfg) for cfg in self.configs]
            for done in asyncio.as_completed(pending):
                if not self.is_running:
                    self.logger.info("🛑 Run dihentikan sebelum semua scenario selesai")
                    break
                try:
                    report = await done
                except Exception as e:
                    self.errors += 1
                    self.logger.error(f"❌ Error dalam scenario: {e}")
                    continue
                self.reports.append(report)
                write_report(report, self.output_dir, self.plots)
            if self.reports:
                path = write_summary(self.reports, self.output_dir or self.configs[0].output_dir)
                self.logger.info(f"📊 Summary: {path}")
        except Exception as e:
            self.errors += 1
            self.logger.error(f"❌ Error dalam main loop: {e}")
        finally:
            await self.shutdown()
        return self.passed

    @property
    def passed(self) -> bool:
        complete = len(self.reports) == len(self.configs)
        return complete and self.errors == 0 and all(r.passed for r in self.reports)

    async def shutdown(self):
        """Matikan process pool"""
        try:
            self.is_running = False
            if self.executor is not None:
                self.executor.shutdown(wait=True, cancel_futures=True)
                self.executor = None
            self.logger.info("✅ Lab runner berhasil dimatikan!")
        except Exception as e:
            self.logger.error(f"❌ Error saat shutdown: {e}")

    def signal_handler(self, signum, frame):
        """Handle system signals"""
        self.logger.info(f"📡 Received signal {signum}, initiating shutdown...")
        self.is_running = False


def setup_logging(level: str = LOG_LEVEL, log_file: str = LOG_FILE):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler()
        ]
    )


def _load_json(text: str):
    """Inline JSON or a path to a JSON file."""
    if os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    return json.loads(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="young-lab", description="Generalised Young measure lab")
    parser.add_argument("--log-level", default=LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", help="run one scenario or all of them")
    p.add_argument("id", help=f"one of: all, {', '.join(SCENARIOS)}")
    p.add_argument("--config", help="ScenarioConfig JSON")
    p.add_argument("--output-dir", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("envelope", help="lamination envelope of g_k")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--grid", type=int, default=17, help="nodes per axis (odd)")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--output", default=None, help="stem for .npy/.json export")

    p = sub.add_parser("distance", help="bounded-Lipschitz distance of two measures")
    p.add_argument("--m1", required=True, help="measure JSON (inline or path)")
    p.add_argument("--m2", required=True)
    p.add_argument("--metric", choices=("euclidean", "ball"), default="euclidean")
    p.add_argument("--spec", default="", help="comma separated generator ids for --metric ball")

    p = sub.add_parser("estimate", help="estimate a triple from a sampled sequence")
    p.add_argument("--seq", required=True, help=".npz with fields, points, weights[, js]")
    p.add_argument("--spec", default="", help="comma separated generator ids")
    p.add_argument("--r-cut", type=float, default=None)
    p.add_argument("--output", default=None, help="triple JSON path")

    p = sub.add_parser("verify-characterisation", help="check a triple against a piecewise-affine u")
    p.add_argument("--triple", required=True)
    p.add_argument("--u", required=True)
    return parser


def _ids(text: str) -> List[str]:
    return [t for t in text.split(",") if t]


def cmd_scenario(args) -> int:
    logger = logging.getLogger(__name__)
    ids = list(SCENARIOS) if args.id == "all" else [args.id]
    if args.id != "all" and args.id not in SCENARIOS:
        print(f"unknown scenario '{args.id}'; choose from: all, {', '.join(SCENARIOS)}", file=sys.stderr)
        return EXIT_USAGE
    base = _load_json(args.config) if args.config else {}
    configs = [ScenarioConfig.from_dict({**base, "scenario": sid}) for sid in ids]

    if len(configs) == 1:
        report = run_scenario(configs[0])
        write_report(report, args.output_dir, not args.no_plots)
        print(report.checks_frame().to_string(index=False))
        return EXIT_PASS if report.passed else EXIT_FAIL

    runner = LabRunner(configs, args.workers, args.output_dir, not args.no_plots)
    signal.signal(signal.SIGINT, runner.signal_handler)
    signal.signal(signal.SIGTERM, runner.signal_handler)
    ok = asyncio.run(runner.start())
    if runner.reports:
        print(summary_frame(runner.reports).to_string(index=False))
    logger.info("🎉 Semua scenario lulus!" if ok else "⚠️ Beberapa scenario gagal. Silakan cek report.")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_envelope(args) -> int:
    kwargs = {"iters": args.iters} if args.iters else {}
    res = gk_envelope(args.k, args.grid, **kwargs)
    value = res.value_at_center()
    violation = rank_one_violation(res)
    last = res.changes[-1] if res.changes else 0.0
    print(json.dumps({**res.header(), "envelope0": value, "ratio": value / args.k, "violation": violation}, indent=2))
    if args.output:
        res.export(args.output)
    ok = value > 0 and violation <= last + 1e-9 * args.k
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_distance(args) -> int:
    m1 = measure_from_dict(_load_json(args.m1))
    m2 = measure_from_dict(_load_json(args.m2))
    space = None
    if args.metric == "ball":
        ids = _ids(args.spec)
        spec = spec_from_ids(ids, m1.dim) if ids else sphere_spec(m1.dim)
        m1 = DiscreteMeasure(to_ball_coords(m1.points), m1.weights)
        m2 = DiscreteMeasure(to_ball_coords(m2.points), m2.weights)
        pts = np.unique(np.vstack([m1.points, m2.points]), axis=0)
        space = metric_space_from_spec(pts, spec)
    result = solve_lip_dual(m1, m2, space)
    print(f"{result.value:.12g}")
    return EXIT_PASS


def cmd_estimate(args) -> int:
    data = np.load(args.seq)
    mu = DiscreteMeasure(data["points"], data["weights"])
    fields = data["fields"]
    js = data["js"] if "js" in data else np.arange(1, fields.shape[0] + 1)
    seq = SampledSequence.from_measure(fields, mu, js)
    ids = _ids(args.spec)
    spec = spec_from_ids(ids, seq.dim) if ids else sphere_spec(seq.dim)
    nu = estimate(seq, spec, args.r_cut)
    payload = nu.to_dict()
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(payload, fh)
    print(json.dumps({"cells": len(nu.mu), "lambda_mass": nu.lambda_mass(), "atoms": len(nu.registry)}))
    return EXIT_PASS


def cmd_verify(args) -> int:
    nu = YoungTriple.from_dict(_load_json(args.triple))
    u = PiecewiseAffineField.from_dict(_load_json(args.u))
    try:
        rep = verify_characterisation(nu, u)
    except CharacterisationError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_FAIL
    print(rep.table.to_string(index=False))
    print(f"barycentre gap: {rep.barycentre_gap:.6g}")
    print("✅ PASS" if rep.passed else "❌ FAIL")
    return EXIT_PASS if rep.passed else EXIT_FAIL


COMMANDS = {
    "scenario": cmd_scenario,
    "envelope": cmd_envelope,
    "distance": cmd_distance,
    "estimate": cmd_estimate,
    "verify-characterisation": cmd_verify,
}


def cli_run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_PASS
    setup_logging(args.log_level)
    logger = logging.getLogger(__name__)
    try:
        return COMMANDS[args.command](args)
    except (KeyError, ValueError, FileNotFoundError) as e:
        logger.error(f"❌ {args.command}: {e}")
        return EXIT_FAIL
    except Exception as e:
        logger.error(f"❌ Fatal error: {e}")
        return EXIT_FAIL


if __name__ == "__main__":
    try:
        sys.exit(cli_run())
    except KeyboardInterrupt:
        print("\n🛑 Lab dihentikan oleh user")
        sys.exit(0)
