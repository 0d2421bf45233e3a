"""Render harness CSVs into the three study figure kinds.

hist-overlay  : overlaid marginal histograms from a samples CSV, one curve
                per truncation level (or per timestep).
rate-loglog   : distance column against N on log-log axes with the fitted
                power-law slope annotated.
rate-semilog-N2 : log distance against N^2, the exponential-rate view, with
                the fitted slope annotated.

Rendering is deterministic: fixed style, fixed PNG metadata, no timestamps.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("hist-overlay", "rate-loglog", "rate-semilog-N2")
BINS = 50  # matches the harness histogram estimator

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
}
_PNG_METADATA = {"Software": "bip-plot"}


class PlotError(ValueError):
    """Input CSV missing, malformed, or lacking required columns."""


@dataclass
class PlotSpec:
    kind: str
    inputs: list
    out_path: str
    labels: dict = field(default_factory=dict)
    group_by: str = "N"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotError(f"unknown plot kind {self.kind!r}; pick from {KINDS}")
        if isinstance(self.inputs, str):
            self.inputs = [self.inputs]
        if not self.inputs:
            raise PlotError("at least one input CSV is required")
        if self.group_by not in ("N", "dt"):
            raise PlotError("group_by must be 'N' or 'dt'")


def _read_csv(path: str) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise PlotError(f"cannot read {path}: {e}") from None
    if not rows:
        raise PlotError(f"{path} has no data rows")
    return rows


def _require_columns(rows: list[dict], needed: set, path: str):
    have = set(rows[0].keys())
    missing = needed - have
    if missing:
        raise PlotError(f"{path} is missing columns {sorted(missing)}")


def _floats(rows, col):
    out = []
    for r in rows:
        v = r[col]
        if v == "" or v is None:
            raise PlotError(f"empty value in column {col!r}")
        out.append(float(v))
    return np.array(out)


def render(spec: PlotSpec) -> str:
    """Draw the figure and write it to ``spec.out_path``; returns the path."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        if spec.kind == "hist-overlay":
            _hist_overlay(spec, ax)
        else:
            _rate_plot(spec, ax)
        title = spec.labels.get("title")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(spec.out_path, format="png", metadata=_PNG_METADATA)
        plt.close(fig)
    return spec.out_path


def _hist_overlay(spec: PlotSpec, ax):
    values, groups = [], []
    for path in spec.inputs:
        rows = _read_csv(path)
        _require_columns(rows, {"value", spec.group_by}, path)
        values.append(_floats(rows, "value"))
        groups.append(np.array([r[spec.group_by] for r in rows]))
    values = np.concatenate(values)
    groups = np.concatenate(groups)
    if len(values) == 0:
        raise PlotError("no samples to plot")
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, BINS + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])

    def level_key(g):
        try:
            return float(g)
        except ValueError:
            return g

    for g in sorted(set(groups), key=level_key):
        sel = values[groups == g]
        hist, _ = np.histogram(sel, bins=edges, density=True)
        ax.plot(centers, hist, drawstyle="steps-mid", label=f"{spec.group_by}={g}")
    ax.set_xlabel(spec.labels.get("xlabel", "marginal value"))
    ax.set_ylabel(spec.labels.get("ylabel", "density"))
    ax.legend()


def _rate_plot(spec: PlotSpec, ax):
    rows = []
    for path in spec.inputs:
        got = _read_csv(path)
        _require_columns(got, {"N", "distance"}, path)
        rows.extend(got)
    n = _floats(rows, "N")
    d = _floats(rows, "distance")
    order = np.argsort(n)
    n, d = n[order], d[order]
    if np.any(d <= 0):
        raise PlotError("distances must be positive for rate plots")
    if spec.kind == "rate-loglog":
        slope, _ = np.polyfit(np.log(n), np.log(d), 1)
        ax.loglog(n, d, "o-")
        ax.set_xlabel(spec.labels.get("xlabel", "N"))
        note = f"fitted slope {slope:.2f}"
    else:
        x = n**2
        slope, _ = np.polyfit(x, np.log(d), 1)
        ax.semilogy(x, d, "o-")
        ax.set_xlabel(spec.labels.get("xlabel", "N^2"))
        note = f"fitted slope {slope:.3g} per N^2"
    ax.set_ylabel(spec.labels.get("ylabel", "distance"))
    ax.annotate(note, xy=(0.03, 0.05), xycoords="axes fraction")
