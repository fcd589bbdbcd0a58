"""Deterministic CSV, JSON and SVG report writers."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

CSV_COLUMNS = ["kind", "n", "m", "r", "pU", "pV", "rho", "tv_lower", "tv_upper",
               "bound_statement", "bound_proof", "censored", "samples", "seed"]


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])


def jsonable(obj):
    """Convert numpy scalars/arrays, tuples and non-finite floats into plain JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def write_json(path, report: dict):
    with open(path, "w") as fh:
        json.dump(jsonable(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def histogram_svg(path, pmf, rho: float, title: str = ""):
    """Empirical pmf as bars with the ``Geo(rho)`` pmf overlaid."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    K = max(pmf.K, 1)
    k = np.arange(K + 1)
    geo = rho * (1.0 - rho) ** k
    with plt.rc_context({"svg.hashsalt": "hazret", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(k, pmf.padded(K), width=0.8, alpha=0.6, label="empirical")
        ax.plot(k, geo, "o-", ms=3, color="C3", label=f"Geo({rho:.4g})")
        ax.set_xlabel("visits before hazard")
        ax.set_ylabel("probability")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(Path(path), format="svg", metadata={"Date": None})
        plt.close(fig)
