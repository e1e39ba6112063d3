"""Shape resampling from reconstructed LPFs with consensus consolidation."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .analysis import AnalysisState, analyze
from .config import AnalysisConfig
from .geom import PointCloud

log = logging.getLogger(__name__)


@dataclass
class Candidates:
    """Reconstructed LPF points in sweep order (LPF index, then pattern index)."""

    positions: np.ndarray
    source_lpf: np.ndarray
    pattern_index: np.ndarray
    centers: np.ndarray
    target_radius: float

    def __len__(self) -> int:
        return len(self.positions)


def reconstruct_candidates(state: AnalysisState) -> Candidates:
    """One point ``s + (u_i + v~_i) . (t1, t2, n)`` per valid pattern point per LPF."""
    local = state.pattern.offsets[None] + state.reconstructed()
    world = state.origins[:, None, :] + np.einsum("nmj,njk->nmk", local, state.axes)
    lpf_id, pat_id = np.nonzero(state.valid)
    return Candidates(world[lpf_id, pat_id], lpf_id, pat_id, state.centers, state.target_radius)


@dataclass
class Consolidation:
    points: np.ndarray
    source_lpf: np.ndarray
    zones: list


def consolidate_trace(cands: Candidates, tau_p: float) -> Consolidation:
    """Greedy consensus sweep; also returns each output's influence zone.

    For every candidate ``q`` not yet consumed, the influence zone gathers the
    unconsumed candidates within ``tau_p`` of ``q`` whose LPF target sphere
    contains ``q``, plus ``q`` itself. Their mean is emitted unless it conflicts with an earlier
    output, and the zone is consumed.
    """
    if not tau_p > 0:
        raise ValueError("tau_p must be positive")
    pos = cands.positions
    n = len(pos)
    if n == 0:
        return Consolidation(np.zeros((0, 3)), np.zeros(0, np.intp), [])
    centers, rad = cands.centers, cands.target_radius
    src = cands.source_lpf
    tree = cKDTree(pos)

    consumed = np.zeros(n, dtype=bool)
    out_pts, out_src, zones = [], [], []
    grid = defaultdict(list)
    inv = 1.0 / tau_p
    for i in range(n):
        if consumed[i]:
            continue
        # zones are gathered lazily; a global pair list can exhaust memory when
        # tau_p spans many pattern steps
        near = np.asarray(tree.query_ball_point(pos[i], tau_p, return_sorted=True), dtype=np.intp)
        near = near[~consumed[near]]
        # c joins when q lies inside c's target sphere; q always belongs to its own zone
        inside = np.linalg.norm(pos[i] - centers[src[near]], axis=1) <= rad
        zone = near[inside | (near == i)]
        consumed[zone] = True
        p = pos[zone].mean(axis=0)
        cell = np.floor(p * inv).astype(np.int64)
        if _conflicts(p, src[i], cell, grid, out_pts, out_src, centers, rad, tau_p):
            continue
        grid[tuple(cell)].append(len(out_pts))
        out_pts.append(p)
        out_src.append(src[i])
        zones.append(zone)
    return Consolidation(np.asarray(out_pts).reshape(-1, 3), np.asarray(out_src, dtype=np.intp), zones)


def _conflicts(p, lpf, cell, grid, out_pts, out_src, centers, rad, tau_p):
    cx, cy, cz = cell
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                for k in grid.get((cx + dx, cy + dy, cz + dz), ()):
                    o = out_pts[k]
                    if np.linalg.norm(o - p) > tau_p:
                        continue
                    if (np.linalg.norm(p - centers[out_src[k]]) <= rad
                            or np.linalg.norm(o - centers[lpf]) <= rad):
                        return True
    return False


def consolidate(cands: Candidates, tau_p: float) -> PointCloud:
    """Merge overlapping LPF reconstructions into one consensus point set."""
    return PointCloud(consolidate_trace(cands, tau_p).points)


def consolidation_radius(state: AnalysisState) -> float:
    """Merge radius: the probing scale, or a little under one pattern step if larger."""
    return max(state.tau_p, state.config.consolidation_factor * state.pattern.step)


def resample_state(state: AnalysisState, radius: float | None = None) -> PointCloud:
    tau = consolidation_radius(state) if radius is None else radius
    cands = reconstruct_candidates(state)
    out = consolidate(cands, tau)
    log.info("resampled %d candidates into %d points (radius=%g)", len(cands), len(out), tau)
    return out


def resample(cloud: PointCloud, config: AnalysisConfig) -> PointCloud:
    """Analyse ``cloud`` and resample it from the learned representation."""
    return resample_state(analyze(cloud, config))
