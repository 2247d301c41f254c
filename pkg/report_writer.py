"""Writes scenario reports: report.json, report.csv, one CSV per table and SVG plots."""

from __future__ import annotations

import json
import logging
import os
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from scenarios import ScenarioReport  # noqa: E402

logger = logging.getLogger(__name__)


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return str(obj)


def plot_series(name: str, series: Dict, path: str) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(series["x"], series["y"], marker="o")
    if series.get("logx"):
        ax.set_xscale("log")
    if series.get("logy") and min(series["y"], default=1.0) > 0:
        ax.set_yscale("log")
    ax.set_xlabel(series.get("xlabel", "x"))
    ax.set_ylabel(series.get("ylabel", "y"))
    ax.set_title(name)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def write_report(report: ScenarioReport, output_dir: Optional[str] = None, plots: bool = True) -> Dict[str, str]:
    """Write every artifact of one report under <output_dir>/<scenario>/ and return the paths."""
    out = os.path.join(output_dir or report.config.output_dir, report.scenario)
    os.makedirs(out, exist_ok=True)
    paths = {}

    paths["json"] = os.path.join(out, "report.json")
    with open(paths["json"], "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, default=_default)

    paths["csv"] = os.path.join(out, "report.csv")
    report.checks_frame().to_csv(paths["csv"], index=False)

    for name, table in report.tables.items():
        paths[f"table:{name}"] = os.path.join(out, f"{name}.csv")
        table.to_csv(paths[f"table:{name}"], index=False)

    if plots:
        for name, series in report.series.items():
            if len(series["x"]) < 2:
                continue
            paths[f"plot:{name}"] = plot_series(name, series, os.path.join(out, f"{name}.svg"))

    logger.info(f"📊 {report.scenario}: {len(paths)} files written to {out}")
    return paths


def summary_frame(reports: Sequence[ScenarioReport]) -> pd.DataFrame:
    rows: List[Dict] = []
    for r in reports:
        failed = [c.name for c in r.checks if not c.passed]
        rows.append({"scenario": r.scenario, "checks": len(r.checks), "failed": len(failed),
                     "pass": r.passed, "failed_checks": ";".join(failed)})
    return pd.DataFrame(rows)


def write_summary(reports: Sequence[ScenarioReport], output_dir: str) -> str:
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, "summary.csv")
    summary_frame(reports).to_csv(path, index=False)
    return path
