"""Writing run outputs: CSV tables, SVG plots, summary.txt and run.json."""

from __future__ import annotations

import csv
import json
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml


@dataclass
class Table:
    name: str
    header: list
    rows: list


@dataclass
class Plot:
    name: str
    x: list
    y: list
    xlabel: str
    ylabel: str
    logy: bool = False
    scatter: bool = False
    series: str = ""


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunOutputs:
    tables: list = field(default_factory=list)
    plots: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def table(self, name, header, rows) -> None:
        self.tables.append(Table(name, list(header), [list(r) for r in rows]))

    def check(self, name, passed, detail="") -> None:
        self.checks.append(Check(name, bool(passed), detail))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass
class RunRecord:
    experiment: str
    config_hash: str
    timestamp: str
    versions: dict
    files: list
    checks: list
    passed: bool


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(table: Table, directory: Path) -> Path:
    path = directory / f"{table.name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_plot(plot: Plot, directory: Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = directory / f"{plot.name}.svg"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if plot.scatter:
        ax.scatter(plot.x, plot.y, s=8)
    else:
        ax.plot(plot.x, plot.y, "o-", label=plot.series or None)
    if plot.logy:
        ax.set_yscale("log")
    ax.set_xlabel(plot.xlabel)
    ax.set_ylabel(plot.ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def versions() -> dict:
    from . import __version__
    from .kernels import BACKEND
    import scipy

    return {"spectrolab": __version__, "kernels": BACKEND, "numpy": np.__version__,
            "scipy": scipy.__version__, "python": platform.python_version()}


def emit_report(outputs: RunOutputs, out_dir, experiment: str = "", cfg_hash: str = "",
                config: dict | None = None) -> RunRecord:
    """Write every table and plot plus ``summary.txt``, ``run.json`` and the resolved config."""
    directory = Path(out_dir)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {directory}: {exc}") from exc
    files = [write_table(t, directory) for t in outputs.tables]
    files += [write_plot(p, directory) for p in outputs.plots]
    if config is not None:
        cfg_path = directory / "config.yaml"
        cfg_path.write_text(yaml.safe_dump(config, sort_keys=True))
        files.append(cfg_path)
    lines = [f"experiment: {experiment}", f"config_hash: {cfg_hash}", f"tables: {len(outputs.tables)}"]
    for c in outputs.checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f" ({c.detail})" if c.detail else ""))
    summary = directory / "summary.txt"
    summary.write_text("\n".join(lines) + "\n")
    files.append(summary)
    run_json = directory / "run.json"
    names = [p.name for p in files] + [run_json.name]
    record = RunRecord(
        experiment=experiment, config_hash=cfg_hash,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        versions=versions(), files=names, checks=[asdict(c) for c in outputs.checks], passed=outputs.passed,
    )
    run_json.write_text(json.dumps(asdict(record), indent=2, sort_keys=True) + "\n")
    return record
