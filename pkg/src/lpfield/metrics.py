"""Evaluation: RMSE against a reference, NN-distance histograms, energy tables."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geom import PointCloud, nn_distances


def _pts(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def rmse(test, reference, symmetric: bool = False, workers: int = 1) -> float:
    """Root mean squared distance from each test point to its nearest reference point.

    The measure is one-sided (test -> reference). With ``symmetric`` the larger
    of the two directions is returned.
    """
    a, b = _pts(test), _pts(reference)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("rmse needs non-empty clouds")
    d, _ = cKDTree(b).query(a, workers=workers)
    val = float(np.sqrt(np.mean(d * d)))
    if symmetric:
        val = max(val, rmse(b, a, workers=workers))
    return val


@dataclass
class HistogramReport:
    edges: np.ndarray
    counts: np.ndarray
    mean: float
    median: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("bin_lo,bin_hi,count\n")
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            buf.write(f"{lo:.9g},{hi:.9g},{int(c)}\n")
        return buf.getvalue()


def nn_histogram(cloud, bins: int = 64) -> HistogramReport:
    """Histogram of each point's distance to its nearest other point.

    Bins span ``[0, 4 * median]``; larger distances land in the last bin.
    """
    pts = _pts(cloud)
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    d = nn_distances(pts)
    med = float(np.median(d))
    hi = 4.0 * med if med > 0 else float(d.max())
    if hi <= 0:
        hi = 1.0
    # the range must contain the mean; widen if a few outliers pull it past 4 medians
    hi = max(hi, float(d.mean()) * (1 + 1e-12))
    edges = np.linspace(0.0, hi, bins + 1)
    counts, _ = np.histogram(np.minimum(d, hi), bins=edges)
    return HistogramReport(edges, counts, float(d.mean()), med)


def energy_report(state, per_atom: bool = False) -> list[dict]:
    """End-of-iteration energies ``(iteration, l2, l1, total)``.

    With ``per_atom`` every value is divided by the dictionary size.
    """
    rows = state.iteration_totals() if hasattr(state, "iteration_totals") else state
    if not rows:
        raise ValueError("analysis ran no iterations")
    scale = 1.0 / state.dictionary.shape[1] if per_atom else 1.0
    return [{"iteration": r["iteration"], "l2": r["l2"] * scale, "l1": r["l1"] * scale,
             "total": r["total"] * scale} for r in rows]


def energy_csv(rows: list[dict]) -> str:
    out = ["iteration,l2,l1,total"]
    out += [f"{r['iteration']},{r['l2']:.17g},{r['l1']:.17g},{r['total']:.17g}" for r in rows]
    return "\n".join(out) + "\n"
