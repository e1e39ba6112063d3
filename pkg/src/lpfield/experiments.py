"""Desk-scale reproductions of the resampling, denoising and analysis experiments.

Each function returns plain rows (dicts) so the scripts can print them and the
acceptance tests can check them against the published figures.
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np
from scipy.spatial import cKDTree

from .analysis import analyze
from .config import AnalysisConfig, DenoiseConfig
from .denoise import denoise_run
from .geom import nn_distances
from .metrics import rmse
from .resample import resample_state
from .synth import CUBE_HALF, synth_labeled, synth_shape

# published plane-resampling measurements: grid_n -> (M, mean NN distance)
PLANE_REFERENCE = {16: (193, 0.075), 32: (793, 0.0320), 64: (3205, 0.015)}
# published noisy RMSE levels for the sphere with its curve net
NOISE_LEVELS = (0.124, 0.25, 0.38)


def plane_resampling(n=50_000, grids=(16, 32, 64), r=1.0, seed=42, outer_iters=2) -> list[dict]:
    """Resample a random perfect plane with grid patterns of several sizes."""
    noisy, _ = synth_shape("plane", n, 0.0, np.random.default_rng(seed))
    rows = []
    for g in grids:
        t0 = time.perf_counter()
        cfg = AnalysisConfig(r=r, grid_n=g, d=16, outer_iters=outer_iters, seed=seed)
        state = analyze(noisy, cfg)
        out = resample_state(state)
        nn = nn_distances(out.points)
        rows.append({"grid_n": g, "M": state.pattern.m, "step": state.pattern.step, "n_out": len(out),
                     "mean_nn": float(nn.mean()), "tau_s": state.pattern.tau_s,
                     "frac_in_band": float(np.mean((nn >= 0.5 * state.pattern.tau_s) & (nn <= 2 * state.pattern.tau_s))),
                     "max_offplane": float(np.abs(out.points[:, 2]).max()),
                     "seconds": time.perf_counter() - t0})
    return rows


def calibrate_sigma(target_rmse, n, reference, seed=0) -> float:
    """Noise sigma whose noisy sample has ``target_rmse`` against ``reference``."""
    sigma = target_rmse / 1.1
    for _ in range(2):
        noisy, _ = synth_shape("sphere_curve_net", n, sigma, np.random.default_rng(seed))
        sigma *= target_rmse / rmse(noisy, reference)
    return sigma


def denoise_config(n: int) -> DenoiseConfig:
    """Settings used for the sphere and curve-net runs (about 1500 LPFs)."""
    stride = max(1, n // 1500)
    acfg = AnalysisConfig(r=2.0, grid_n=16, d=16, outer_iters=3, dict_iters=5, pose_iters=10, lpf_stride=stride)
    return DenoiseConfig(acfg, gamma=0.5, outer_rounds=10)


def denoising_table(n=100_000, levels=NOISE_LEVELS, seed=1, ref_n=2_000_000, config=None) -> list[dict]:
    """Denoise the sphere with curve net at the three published noise levels."""
    _, reference = synth_shape("sphere_curve_net", ref_n, 0.0, np.random.default_rng(seed + 1000))
    cfg = denoise_config(n) if config is None else config
    rows = []
    for level in levels:
        sigma = calibrate_sigma(level, n, reference, seed)
        noisy, _, labels = synth_labeled("sphere_curve_net", n, sigma, np.random.default_rng(seed))
        t0 = time.perf_counter()
        res = denoise_run(noisy, cfg)
        secs = time.perf_counter() - t0
        before, after = rmse(noisy, reference), rmse(res.cloud, reference)
        tree = cKDTree(reference.points)
        d_after = tree.query(res.cloud.points)[0]
        rows.append({"level": level, "sigma": sigma, "rmse_noisy": before, "rmse_denoised": after,
                     "ratio": after / before, "rounds": len(res.rounds), "seconds": secs,
                     "rmse_surface": float(np.sqrt(np.mean(d_after[labels == 0] ** 2))),
                     "rmse_curve": float(np.sqrt(np.mean(d_after[labels == 1] ** 2)))})
    return rows


def _face_of(points, tol):
    """Index 0..5 of the cube face each point lies on; -1 off the cube, -2 on an edge."""
    on = np.stack([np.abs(points[:, a] - s * CUBE_HALF) <= tol for a in range(3) for s in (-1.0, 1.0)], axis=1)
    face = np.where(on.any(axis=1), on.argmax(axis=1), -1)
    face[on.sum(axis=1) > 1] = -2
    return face


def cube_curve_codes(n=40_000, d=3, seed=42, r=1.0) -> dict:
    """Code magnitudes on flat cube faces against the LPFs sitting on the curve."""
    noisy, _, labels = synth_labeled("cube_with_curve", n, 0.0, np.random.default_rng(seed))
    state = analyze(noisy, AnalysisConfig(r=r, grid_n=16, d=d, seed=seed))
    pts = noisy.points
    mag = np.linalg.norm(state.codes, axis=1)
    face_pt = _face_of(pts, 1e-9)
    # an LPF belongs to the curve when its seed point is a curve sample
    seed_label = labels[cKDTree(pts).query(state.centers)[1]]
    flat, curve = [], []
    for j in range(state.n_lpf):
        tgt = state.target(j)
        faces = np.unique(face_pt[tgt])
        if seed_label[j] == 1:
            curve.append(j)
        elif not labels[tgt].any() and len(faces) == 1 and faces[0] >= 0:
            flat.append(j)
    flat, curve = np.array(flat, dtype=int), np.array(curve, dtype=int)
    top = float(mag.max())
    face_median = float(np.median(mag[flat])) if len(flat) else float("nan")
    return {"n_lpf": state.n_lpf, "n_flat": len(flat), "n_curve": len(curve), "max": top,
            "flat_max_rel": float(mag[flat].max() / top) if len(flat) and top > 0 else float("nan"),
            "flat_frac_small": float(np.mean(mag[flat] <= 0.05 * top)) if len(flat) else float("nan"),
            "face_median": face_median,
            "curve_frac_above": float(np.mean(mag[curve] > face_median)) if len(curve) else float("nan")}


def energy_curves(kind, n=20_000, seed=42, **cfg) -> dict:
    """Analysis energy log on a synthetic shape, with monotonicity checks."""
    noisy, _ = synth_shape(kind, n, 0.0, np.random.default_rng(seed))
    params = dict(r=1.0, grid_n=16, d=4, outer_iters=10, seed=seed)
    params.update(cfg)
    state = analyze(noisy, AnalysisConfig(**params))
    log = state.energy_log
    ends = [rec["total"] for rec in log if rec["stage"] == "reprobe"]
    dict_ok, pose_ok = True, True
    for k in range(0, len(log), 3):
        if k and log[k]["total"] > log[k - 1]["total"]:
            dict_ok = False
        if log[k + 1]["total"] > log[k]["total"]:
            pose_ok = False
    return {"kind": kind, "n_lpf": state.n_lpf, "totals": ends, "log": log,
            "first": ends[0], "last": ends[-1], "dictionary_monotone": dict_ok, "pose_monotone": pose_ok}


def with_overrides(cfg: DenoiseConfig, **analysis) -> DenoiseConfig:
    return dataclasses.replace(cfg, analysis=dataclasses.replace(cfg.analysis, **analysis))
