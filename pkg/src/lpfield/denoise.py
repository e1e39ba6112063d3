"""Point-set denoising by alternating LPF analysis and consensus projection."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .analysis import AnalysisState, analyze
from .config import DenoiseConfig
from .geom import PointCloud, estimate_tau_p

log = logging.getLogger(__name__)

_CHUNK = 400_000
# seeds must leave every point inside some pattern disk (radius r/2)
FOOTPRINT_COVERAGE = 0.45


def _nearest_pattern(offsets, local_xy):
    d, i = cKDTree(offsets[:, :2]).query(local_xy)
    return d, i


def propose_position(q, lpf, v_tilde, mode: str = "full") -> np.ndarray:
    """Projection of ``q`` through one LPF's reconstructed field.

    ``q`` is dropped onto the pattern plane and the pattern point ``u_i`` with
    the nearest in-plane position is looked up. Modes:

    * ``full``: the foot moved by the whole reconstructed vector ``v~_i``;
    * ``height``: the foot lifted by the normal part of ``v~_i`` only;
    * ``sample``: the reconstructed sample ``s + u_i + v~_i`` itself.
    """
    q = np.asarray(q, dtype=np.float64)
    v_tilde = np.asarray(v_tilde, dtype=np.float64).reshape(lpf.pattern.m, 3)
    loc = lpf.frame.to_local(q)
    _, i = _nearest_pattern(lpf.pattern.offsets, loc[None, :2])
    local = _candidate_local(loc[None], lpf.pattern.offsets[i], v_tilde[i], mode)[0]
    return lpf.frame.to_world(local)


def _candidate_local(loc, u, v_tilde, mode):
    if mode == "height":
        return np.column_stack([loc[:, 0], loc[:, 1], u[:, 2] + v_tilde[:, 2]])
    if mode == "full":
        return np.column_stack([loc[:, :2], u[:, 2:]]) + v_tilde
    if mode == "sample":
        return u + v_tilde
    raise ValueError(f"unknown proposal mode {mode!r}")


def weighted_consensus(q, candidates, tau_p: float) -> np.ndarray:
    """Gaussian-weighted mean of ``candidates`` with weights ``exp(-|c-q|^2 / (2 tau_p^2))``.

    No candidates means no proposal: ``q`` is returned unchanged.
    """
    q = np.asarray(q, dtype=np.float64)
    cands = np.asarray(candidates, dtype=np.float64).reshape(-1, 3)
    if len(cands) == 0:
        log.debug("no candidates for %s; left in place", q)
        return q.copy()
    d2 = np.sum((cands - q) ** 2, axis=1)
    # shifting by the minimum leaves the normalised weights unchanged
    w = np.exp(-(d2 - d2.min()) / (2.0 * tau_p * tau_p))
    return (w[:, None] * cands).sum(axis=0) / w.sum()


def blend(q, q_tilde, gamma: float) -> np.ndarray:
    """``(q + gamma q~) / (1 + gamma)``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return (np.asarray(q, dtype=np.float64) + gamma * np.asarray(q_tilde, dtype=np.float64)) / (1.0 + gamma)


def consensus_step(points, state: AnalysisState, tau_p: float, gamma: float, footprint: float | None = None,
                   mode: str = "height"):
    """One projection step for every point, vectorised over (LPF, target point) pairs.

    Returns ``(new_points, n_proposals)``. Points no LPF proposes for stay put.
    """
    pts = np.asarray(points, dtype=np.float64)
    offsets = state.pattern.offsets
    foot_max = state.pattern.step if footprint is None else footprint
    tree = cKDTree(offsets[:, :2])
    recon = state.reconstructed()
    counts = np.diff(state.target_ptr)
    n = len(pts)
    # Gaussian weights are accumulated relative to a per-point reference so
    # that distant candidates do not underflow to an all-zero sum
    all_q, all_c, all_d2 = [], [], []
    start = 0
    while start < state.n_lpf:
        stop, acc = start, 0
        while stop < state.n_lpf and (acc == 0 or acc + counts[stop] <= _CHUNK):
            acc += counts[stop]
            stop += 1
        lo, hi = state.target_ptr[start], state.target_ptr[stop]
        qi = state.target_idx[lo:hi]
        owner = np.repeat(np.arange(start, stop), counts[start:stop])
        loc = np.einsum("pkj,pj->pk", state.axes[owner], pts[qi] - state.origins[owner])
        dist, pid = tree.query(loc[:, :2])
        keep = (dist <= foot_max) & state.valid[owner, pid]
        qi, owner, loc, pid = qi[keep], owner[keep], loc[keep], pid[keep]
        cand_loc = _candidate_local(loc, offsets[pid], recon[owner, pid], mode)
        cand = state.origins[owner] + np.einsum("pj,pjk->pk", cand_loc, state.axes[owner])
        all_q.append(qi)
        all_c.append(cand)
        all_d2.append(np.sum((cand - pts[qi]) ** 2, axis=1))
        start = stop
    qi = np.concatenate(all_q) if all_q else np.zeros(0, np.intp)
    cand = np.concatenate(all_c) if all_c else np.zeros((0, 3))
    d2 = np.concatenate(all_d2) if all_d2 else np.zeros(0)
    ref = np.full(n, np.inf)
    np.minimum.at(ref, qi, d2)
    w = np.exp(-(d2 - ref[qi]) / (2.0 * tau_p * tau_p))
    wsum = np.bincount(qi, weights=w, minlength=n)
    num = np.column_stack([np.bincount(qi, weights=w * cand[:, k], minlength=n) for k in range(3)])
    has = wsum > 0
    out = pts.copy()
    q_tilde = num[has] / wsum[has, None]
    out[has] = blend(pts[has], q_tilde, gamma)
    return out, np.bincount(qi, minlength=n)


@dataclass
class DenoiseResult:
    cloud: PointCloud
    rounds: list = field(default_factory=list)
    state: AnalysisState | None = None


def _canonical_order(points):
    return np.lexsort((points[:, 2], points[:, 1], points[:, 0]))


def denoise_run(cloud: PointCloud, config: DenoiseConfig, reference: PointCloud | None = None) -> DenoiseResult:
    """Alternate analysis of the current points with a consensus projection.

    Points are processed in lexicographic order so the result does not depend
    on the input order. Each round logs the mean displacement and the data
    term (sum of squared distances to the nearest original point); with a
    ``reference`` the RMSE against it is logged as well.
    """
    from .metrics import rmse

    if len(cloud) == 0:
        raise ValueError("cannot denoise an empty point cloud")
    order = _canonical_order(cloud.points)
    s0 = cloud.points[order]
    acfg = config.analysis
    tau_p = acfg.tau_p if acfg.tau_p is not None else estimate_tau_p(PointCloud(s0))
    acfg = dataclasses.replace(acfg, tau_p=tau_p)
    if acfg.lpf_stride is None:
        # one LPF per sample point
        acfg = dataclasses.replace(acfg, lpf_stride=1)
    cover = min(acfg.coverage_factor, FOOTPRINT_COVERAGE)
    acfg = dataclasses.replace(acfg, coverage_factor=cover, rejection_factor=min(acfg.rejection_factor, cover))
    stop_tol = 0.01 * tau_p if config.stop_tol is None else config.stop_tol
    s0_tree = cKDTree(s0)
    cur = s0.copy()
    atoms, state, rounds = None, None, []
    for rnd in range(1, config.outer_rounds + 1):
        state = analyze(PointCloud(cur), acfg, warm_dictionary=atoms)
        atoms = state.dictionary
        new, nprop = consensus_step(cur, state, tau_p, config.gamma, mode=config.proposal)
        disp = float(np.linalg.norm(new - cur, axis=1).mean())
        cur = new
        data_term = float(np.sum(s0_tree.query(cur, workers=acfg.threads)[0] ** 2))
        rec = {"round": rnd, "mean_displacement": disp, "data_term": data_term,
               "unproposed": int(np.sum(nprop == 0)), "analysis_total": state.energy_log[-1]["total"]
               if state.energy_log else None}
        if reference is not None:
            rec["rmse"] = rmse(cur, reference, workers=acfg.threads)
        rounds.append(rec)
        log.info("denoise round %d: %s", rnd, rec)
        if disp < stop_tol:
            break
    out = np.empty_like(cur)
    out[order] = cur
    return DenoiseResult(PointCloud(out), rounds, state)


def denoise(cloud: PointCloud, config: DenoiseConfig) -> PointCloud:
    """Denoised copy of ``cloud``; point count and order are preserved."""
    return denoise_run(cloud, config).cloud
