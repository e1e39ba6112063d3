"""Synthetic test shapes with known ground truth.

Every generator returns noise-free samples plus a per-point label
(0 = surface, 1 = curve). Shapes are sized after the figures they stand in
for: the cube is 5 units wide (diagonal ~8.7) and the sphere with its curve
net has a bounding-box diagonal of 47.29.
"""

from __future__ import annotations

import math

import numpy as np

from .geom import PointCloud

KINDS = ("plane", "cube", "cube_with_curve", "sphere_curve_net", "sinusoid")

CUBE_HALF = 2.5
SPHERE_RADIUS = 10.0
NET_RADIUS = 47.29 / (2.0 * math.sqrt(3.0))


def _plane(n, rng, extent=3.0):
    xy = rng.uniform(0.0, extent, size=(n, 2))
    return np.column_stack([xy, np.zeros(n)]), np.zeros(n, dtype=np.int8)


def _cube_surface(n, rng, half=CUBE_HALF):
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-half, half, size=(n, 2))
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    pts = np.empty((n, 3))
    for a in range(3):
        sel = axis == a
        others = [b for b in range(3) if b != a]
        pts[sel, a] = sign[sel] * half
        pts[sel, others[0]] = uv[sel, 0]
        pts[sel, others[1]] = uv[sel, 1]
    return pts


def curve_in_cube(x):
    """The wavy curve crossing the hollow cube, parametrised by x."""
    x = np.asarray(x, dtype=np.float64)
    y = 1.2 * np.sin(0.4 * np.pi * x)
    z = 0.6 * np.cos(0.4 * np.pi * x)
    return np.stack([x, y, z], axis=-1)


def _cube(n, rng):
    return _cube_surface(n, rng), np.zeros(n, dtype=np.int8)


def _cube_with_curve(n, rng, curve_fraction=0.15):
    nc = int(round(n * curve_fraction))
    ns = n - nc
    surf = _cube_surface(ns, rng)
    curve = curve_in_cube(rng.uniform(-CUBE_HALF, CUBE_HALF, size=nc))
    labels = np.concatenate([np.zeros(ns, np.int8), np.ones(nc, np.int8)])
    return np.vstack([surf, curve]), labels


def net_circles(theta):
    """Points on the three orthogonal circles of the curve net, one array per circle."""
    c, s = NET_RADIUS * np.cos(theta), NET_RADIUS * np.sin(theta)
    z = np.zeros_like(theta)
    return (np.stack([c, s, z], -1), np.stack([z, c, s], -1), np.stack([s, z, c], -1))


def _sphere_curve_net(n, rng, curve_fraction=0.2):
    nc = int(round(n * curve_fraction))
    ns = n - nc
    g = rng.normal(size=(ns, 3))
    sphere = SPHERE_RADIUS * g / np.linalg.norm(g, axis=1, keepdims=True)
    which = rng.integers(0, 3, size=nc)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=nc)
    circles = net_circles(theta)
    curve = np.empty((nc, 3))
    for k in range(3):
        curve[which == k] = circles[k][which == k]
    labels = np.concatenate([np.zeros(ns, np.int8), np.ones(nc, np.int8)])
    return np.vstack([sphere, curve]), labels


def sinusoid_height(x, amplitude=0.3, wavelength=2.0):
    return amplitude * np.sin(2.0 * np.pi * np.asarray(x) / wavelength)


def _sinusoid(n, rng, extent=6.0, amplitude=0.3, wavelength=2.0):
    xy = rng.uniform(0.0, extent, size=(n, 2))
    z = sinusoid_height(xy[:, 0], amplitude, wavelength)
    return np.column_stack([xy, z]), np.zeros(n, dtype=np.int8)


_GENERATORS = {
    "plane": _plane,
    "cube": _cube,
    "cube_with_curve": _cube_with_curve,
    "sphere_curve_net": _sphere_curve_net,
    "sinusoid": _sinusoid,
}


def synth_labeled(kind: str, n: int, noise_sigma: float = 0.0, rng=None, **params):
    """Like :func:`synth_shape` but also returns the surface/curve labels."""
    if kind not in _GENERATORS:
        raise ValueError(f"unknown shape kind {kind!r}; expected one of {', '.join(KINDS)}")
    if n <= 0:
        raise ValueError("n must be positive")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    rng = np.random.default_rng(rng)
    clean, labels = _GENERATORS[kind](n, rng, **params)
    noisy = clean + rng.normal(scale=noise_sigma, size=clean.shape) if noise_sigma > 0 else clean
    return PointCloud(noisy), PointCloud(clean), labels


def synth_shape(kind: str, n: int, noise_sigma: float = 0.0, rng=None, **params):
    """Sample ``n`` points of a synthetic shape.

    Returns ``(noisy, ground_truth)``; the noisy copy adds isotropic Gaussian
    noise of standard deviation ``noise_sigma`` to every point.
    """
    noisy, clean, _ = synth_labeled(kind, n, noise_sigma, rng, **params)
    return noisy, clean
