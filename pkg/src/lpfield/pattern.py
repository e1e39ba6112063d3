"""Planar sampling patterns."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Pattern:
    """M planar offsets (z = 0) around a seed.

    ``radius`` is the pattern scale r: grid patterns have step r / grid_n and
    fill the disk inscribed in the r x r square. ``tau_s`` is the nominal
    point spacing r / sqrt(M).
    """

    offsets: np.ndarray
    radius: float
    tau_s: float
    kind: str = "grid"
    grid_n: int = 0

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=np.float64).reshape(-1, 3)
        if len(off) == 0:
            raise ValueError("a pattern needs at least one offset")
        if np.any(off[:, 2] != 0.0):
            raise ValueError("pattern offsets must be planar (z = 0)")
        if np.any(np.linalg.norm(off, axis=1) > self.radius):
            raise ValueError("pattern offsets must lie within the pattern radius")
        off.setflags(write=False)
        object.__setattr__(self, "offsets", off)

    @property
    def m(self) -> int:
        return len(self.offsets)

    @property
    def step(self) -> float:
        """Distance between adjacent grid points; mean spacing in the disk for random patterns."""
        if self.kind == "grid":
            return self.radius / self.grid_n
        return 0.5 * self.radius * math.sqrt(math.pi / self.m)

    @property
    def extent(self) -> float:
        return float(np.linalg.norm(self.offsets, axis=1).max())

    def __eq__(self, other):
        if not isinstance(other, Pattern):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.grid_n == other.grid_n
            and self.radius == other.radius
            and self.tau_s == other.tau_s
            and np.array_equal(self.offsets, other.offsets)
        )


def spacing_for(r: float, m: int) -> float:
    if r <= 0 or m <= 0:
        raise ValueError("need r > 0 and m > 0")
    return r / math.sqrt(m)


def count_for(r: float, tau_s: float) -> int:
    """Number of pattern points giving spacing ``tau_s`` at scale ``r``."""
    return int(round(r * r / (tau_s * tau_s)))


def grid_pattern(grid_n: int, r: float) -> Pattern:
    """Regular grid of step ``r / grid_n`` clipped to the disk of diameter ``r``.

    The lattice is node-centred (it contains the origin) and the clipping disk
    is open, which gives M = 193, 793, 3205 for grid_n = 16, 32, 64.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    if r <= 0:
        raise ValueError("r must be positive")
    half = grid_n // 2
    k = np.arange(-half, half + 1)
    i, j = np.meshgrid(k, k, indexing="ij")
    i, j = i.ravel(), j.ravel()
    # integer test keeps the count independent of r
    keep = 4 * (i * i + j * j) < grid_n * grid_n
    if not keep.any():
        keep = (i == 0) & (j == 0)
    step = r / grid_n
    off = np.column_stack([i[keep] * step, j[keep] * step, np.zeros(keep.sum())])
    return Pattern(off, float(r), spacing_for(r, len(off)), "grid", grid_n)


def random_pattern(m: int, r: float, rng_seed=None) -> Pattern:
    """``m`` points uniform in the disk of radius ``r / 2``."""
    if m <= 0:
        raise ValueError("m must be positive")
    if r <= 0:
        raise ValueError("r must be positive")
    rng = np.random.default_rng(rng_seed)
    rad = 0.5 * r * np.sqrt(rng.uniform(size=m))
    ang = rng.uniform(0.0, 2.0 * np.pi, size=m)
    off = np.column_stack([rad * np.cos(ang), rad * np.sin(ang), np.zeros(m)])
    return Pattern(off, float(r), spacing_for(r, m), "random", 0)


def make_pattern(kind: str, r: float, grid_n: int = 16, m: int = 193, rng_seed=None) -> Pattern:
    if kind == "grid":
        return grid_pattern(grid_n, r)
    if kind == "random":
        return random_pattern(m, r, rng_seed)
    raise ValueError(f"unknown pattern kind {kind!r}")
