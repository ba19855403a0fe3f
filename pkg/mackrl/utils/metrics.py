"""Metric CSV, run manifest and sweep aggregation."""

import csv
import hashlib
import logging
import math
import os
from pathlib import Path

import pandas as pd
import yaml

from mackrl.errors import DomainError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("run_id", "seed", "env_steps", "phase", "metric", "value")
PHASES = ("train", "eval")


class MetricWriter:
    """Appends schema-checked rows to a CSV file (or only keeps them in memory)"""

    def __init__(self, path=None, run_id="run", seed=0):
        self.path = Path(path) if path is not None else None
        self.run_id = run_id
        self.seed = seed
        self.rows = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(CSV_COLUMNS)

    def record(self, env_steps, phase, metric, value):
        """Append one metric row, and to the CSV when the writer has a path"""
        if phase not in PHASES:
            raise DomainError(f"phase must be one of {PHASES}, got '{phase}'")
        value = float(value)
        if not math.isfinite(value):
            raise DomainError(f"Refusing to write non-finite {metric}={value} at {env_steps} steps")
        row = (self.run_id, int(self.seed), int(env_steps), phase, metric, repr(value))
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", newline="") as f:
                csv.writer(f).writerow(row)
        return row

    def record_many(self, env_steps, phase, values):
        for metric, value in values.items():
            if value is not None:
                self.record(env_steps, phase, metric, value)

    def frame(self):
        """Every recorded row as a DataFrame"""
        df = pd.DataFrame(self.rows, columns=CSV_COLUMNS)
        df["value"] = df["value"].astype(float)
        return df


def read_metrics(path):
    """Load a metrics CSV written by MetricWriter"""
    df = pd.read_csv(path)
    if tuple(df.columns) != CSV_COLUMNS:
        raise DomainError(f"{path} does not follow the metric schema {CSV_COLUMNS}")
    return df


def source_hash(package_dir=None):
    """sha256 over the package's .py files in sorted path order"""
    package_dir = Path(package_dir or Path(__file__).resolve().parents[1])
    digest = hashlib.sha256()
    for path in sorted(package_dir.rglob("*.py")):
        digest.update(path.relative_to(package_dir).as_posix().encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()


def write_manifest(out_dir, config, seeds, outputs):
    """Write manifest.yaml: config, source hash, seeds and outputs relative to out_dir"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": config.to_dict(),
        "code_sha256": source_hash(),
        "seeds": [int(s) for s in seeds],
        "outputs": sorted(Path(os.path.relpath(o, out_dir)).as_posix() for o in outputs),
    }
    path = out_dir / "manifest.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(manifest, f, default_flow_style=False, sort_keys=True)
    logger.info(f"Manifest written: {path}")
    return path


def final_values(df, metric="return", phase="eval"):
    """Last recorded value of a metric per (run_id, seed)"""
    subset = df[(df["metric"] == metric) & (df["phase"] == phase)]
    last = subset.sort_values("env_steps").groupby(["run_id", "seed"], as_index=False).last()
    return last


def aggregate_sweep(frames, param, metric="return", phase="eval"):
    """Mean, standard error and median of final metric values per sweep point

    ``frames`` maps a parameter value to the concatenated metric frame of
    every seed run at that value.
    """
    rows = []
    for value, df in frames.items():
        finals = final_values(df, metric, phase)["value"].astype(float)
        n = int(finals.size)
        rows.append({
            "param": param,
            "value": value,
            "metric": metric,
            "n_seeds": n,
            "mean": float(finals.mean()) if n else float("nan"),
            "stderr": float(finals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
            "median": float(finals.median()) if n else float("nan"),
        })
    return pd.DataFrame(rows, columns=["param", "value", "metric", "n_seeds", "mean", "stderr", "median"])
