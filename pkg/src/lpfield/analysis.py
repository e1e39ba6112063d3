"""Joint LPF analysis: dictionary learning, pose optimisation, re-probing.

All LPFs live in flat arrays inside :class:`AnalysisState`; per-LPF views are
available through :meth:`AnalysisState.lpf`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import AnalysisConfig
from .geom import PointCloud, estimate_tau_p, poisson_seed, stride_seed
from .lpf import (
    LocalFrame,
    LocalProbingField,
    PoseResult,
    RigidTransform,
    apply_update_batch,
    csr_subset,
    fit_rigid_batch,
    optimize_pose_batch,
    probe_batch,
    select_targets,
)
from .pattern import Pattern, make_pattern
from .sparse import learn_dictionary, objective_terms

log = logging.getLogger(__name__)

STAGES = ("dictionary", "pose", "reprobe")


@dataclass
class AnalysisState:
    config: AnalysisConfig
    pattern: Pattern
    tau_p: float
    lam: float
    centers: np.ndarray
    origins: np.ndarray
    axes: np.ndarray
    v: np.ndarray
    valid: np.ndarray
    target_ptr: np.ndarray
    target_idx: np.ndarray
    dictionary: np.ndarray
    codes: np.ndarray
    energy_log: list = field(default_factory=list)

    @property
    def n_lpf(self) -> int:
        return len(self.origins)

    @property
    def target_radius(self) -> float:
        return self.config.target_radius_factor * self.config.r

    @property
    def max_inplane(self) -> float:
        return max_inplane_for(self.config, self.pattern, self.tau_p)

    @property
    def signals(self) -> np.ndarray:
        return signals_of(self.v, self.valid)

    def reconstructed(self) -> np.ndarray:
        """Dictionary reconstruction ``D a_j`` of every LPF as ``(N, M, 3)``."""
        return (self.codes @ self.dictionary.T).reshape(self.n_lpf, self.pattern.m, 3)

    def energy(self) -> tuple[float, float, float]:
        l2, l1 = objective_terms(self.signals, self.dictionary, self.codes)
        l2, l1 = float(l2.sum()), float(l1.sum())
        return l2, l1, l2 + self.lam * l1

    def target(self, j: int) -> np.ndarray:
        return self.target_idx[self.target_ptr[j]:self.target_ptr[j + 1]]

    def lpf(self, j: int) -> LocalProbingField:
        return LocalProbingField(LocalFrame(self.origins[j], self.axes[j]), self.pattern, self.v[j].copy(),
                                 self.valid[j].copy(), self.target(j), self.centers[j])

    def iteration_totals(self) -> list[dict]:
        """End-of-iteration energy rows (after re-probing)."""
        return [rec for rec in self.energy_log if rec["stage"] == "reprobe"]


def max_inplane_for(config: AnalysisConfig, pattern: Pattern, tau_p: float) -> float:
    if config.invalid_factor is None:
        return np.inf
    return config.invalid_factor * max(pattern.tau_s, tau_p)


def signals_of(v, valid) -> np.ndarray:
    return np.where(valid[..., None], v, 0.0).reshape(len(v), -1)


def _record(state: AnalysisState, iteration: int, stage: str):
    l2, l1, total = state.energy()
    state.energy_log.append({"iteration": iteration, "stage": stage, "l2": l2, "l1": l1, "total": total})


def pose_step_batch(offsets, v, valid, v_tilde):
    """Rigid transforms aligning ``u + v`` with ``u + v_tilde`` for every LPF.

    Returns ``(R, t, ok)``; invalid pattern points are left out of the fits.
    """
    return fit_rigid_batch(offsets[None] + v, offsets[None] + v_tilde, valid)


def pose_step(lpf: LocalProbingField, v_tilde) -> RigidTransform:
    """Transform bringing the LPF's probed points onto its reconstruction."""
    m = lpf.pattern.m
    v_tilde = np.asarray(v_tilde, dtype=np.float64).reshape(m, 3)
    rot, trans, _ = pose_step_batch(lpf.pattern.offsets, lpf.v[None], lpf.valid[None], v_tilde[None])
    return RigidTransform(rot[0], trans[0])


def reprobe(lpf: LocalProbingField, cloud: PointCloud, max_inplane=None) -> LocalProbingField:
    """Probe again from the current pose, restricted to the original target."""
    from .lpf import make_lpf

    return make_lpf(lpf.frame, lpf.pattern, cloud, lpf.target, lpf.center, "aoap", max_inplane)


def _apply_pose_optimization(state: AnalysisState):
    recon = state.reconstructed()
    rot, trans, ok = pose_step_batch(state.pattern.offsets, state.v, state.valid, recon)
    o2, a2, v2 = apply_update_batch(state.origins, state.axes, state.v, state.valid, state.pattern.offsets,
                                    rot, trans)
    flat_recon = recon.reshape(state.n_lpf, -1)
    old = np.sum((signals_of(state.v, state.valid) - flat_recon) ** 2, axis=1)
    new = np.sum((signals_of(v2, state.valid) - flat_recon) ** 2, axis=1)
    # keep the old pose where round-off would make the step a loss
    accept = ok & (new <= old)
    state.origins[accept] = o2[accept]
    state.axes[accept] = a2[accept]
    state.v[accept] = v2[accept]
    return int(accept.sum())


def build_lpfs(cloud: PointCloud, config: AnalysisConfig, pattern: Pattern, tau_p: float, rng):
    """Seed, select target areas and pose-optimise the initial LPFs."""
    pts = cloud.points
    r = config.r
    cover = config.coverage_factor * r
    if config.lpf_stride is None:
        seeds = poisson_seed(cloud, config.rejection_factor * r, cover, rng)
    else:
        seeds = stride_seed(cloud, config.lpf_stride, cover, rng)
    tree = cKDTree(pts)
    ptr, idx = select_targets(pts, seeds.positions, config.target_radius_factor * r, tree)
    counts = np.diff(ptr)
    keep = np.flatnonzero(counts >= 3)
    if len(keep) < len(counts):
        log.info("dropping %d LPFs with fewer than 3 target points", len(counts) - len(keep))
        ptr, idx = csr_subset(ptr, idx, keep)
    centers = seeds.positions[keep]
    frames = seeds.frames[keep]
    n = len(centers)
    max_inplane = max_inplane_for(config, pattern, tau_p)
    # cyclic axis permutations of the random frame give orthogonal normals;
    # ICP from a single start can stall with the pattern edge-on to a surface
    starts = [frames, frames[:, [1, 2, 0]], frames[:, [2, 0, 1]]][:config.pose_starts]
    k = len(starts)
    sptr, sidx = csr_subset(ptr, idx, np.tile(np.arange(n), k))
    res = optimize_pose_batch(pts, np.tile(centers, (k, 1)), np.concatenate(starts), pattern.offsets, sptr, sidx,
                              "aoap", config.pose_iters, config.pose_tol, max_inplane, config.threads)
    best = res.energy.reshape(k, n).argmin(axis=0) * n + np.arange(n)
    res = PoseResult(res.origins[best], res.axes[best], res.v[best], res.valid[best], res.hits[best],
                     res.energy[best], [e[best] for e in res.trace], res.iterations)
    return centers, res, ptr, idx


def analyze(cloud: PointCloud, config: AnalysisConfig, warm_dictionary=None) -> AnalysisState:
    """Run the joint analysis and return the full state.

    Each outer iteration learns the dictionary (warm-started after the first
    one), aligns every LPF with its reconstruction, and re-probes the shape
    within the original target areas. Energies after each of the three steps
    are appended to ``energy_log``.
    """
    if len(cloud) == 0:
        raise ValueError("cannot analyse an empty point cloud")
    config.validate()
    seed_rng, dict_rng, pattern_rng, _ = config.streams()
    pattern = make_pattern(config.pattern, config.r, config.grid_n, config.m, pattern_rng)
    tau_p = config.tau_p if config.tau_p is not None else estimate_tau_p(cloud)
    lam = config.resolved_lambda
    centers, pose, ptr, idx = build_lpfs(cloud, config, pattern, tau_p, seed_rng)
    n = len(centers)
    if config.d > n:
        raise ValueError(f"dictionary size d={config.d} exceeds the number of LPFs N={n}")
    log.info("analysis: %d LPFs, M=%d, d=%d, lambda=%g, tau_p=%g, tau_s=%g",
             n, pattern.m, config.d, lam, tau_p, pattern.tau_s)
    state = AnalysisState(config, pattern, tau_p, lam, centers, pose.origins, pose.axes, pose.v, pose.valid,
                          ptr, idx, np.zeros((3 * pattern.m, config.d)), np.zeros((n, config.d)))
    atoms = None if warm_dictionary is None else np.array(warm_dictionary, dtype=np.float64)
    if atoms is not None and atoms.shape != state.dictionary.shape:
        log.warning("ignoring warm-start dictionary of shape %s", atoms.shape)
        atoms = None
    codes = None
    for it in range(1, config.outer_iters + 1):
        res = learn_dictionary(state.signals, config.d, lam, config.dict_iters, dict_rng, atoms, codes)
        state.dictionary, state.codes = res.dictionary, res.codes
        _record(state, it, "dictionary")
        _apply_pose_optimization(state)
        _record(state, it, "pose")
        state.v, state.valid, _ = probe_batch(cloud.points, state.origins, state.axes, pattern.offsets,
                                              ptr, idx, "aoap", state.max_inplane, config.threads)
        _record(state, it, "reprobe")
        atoms, codes = state.dictionary, state.codes
        log.info("iteration %d: total %.6g", it, state.energy_log[-1]["total"])
    return state
