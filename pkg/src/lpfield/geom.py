"""Point cloud container, spatial queries and seed placement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation


class PointCloud:
    """An immutable set of 3D points.

    ``points`` is copied into a read-only float64 ``(n, 3)`` array. The
    bounding-box diagonal is computed once at construction.
    """

    __slots__ = ("_points", "_bbox_diagonal")

    def __init__(self, points):
        pts = np.array(points, dtype=np.float64, copy=True)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        self._points = pts
        if len(pts):
            self._bbox_diagonal = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
        else:
            self._bbox_diagonal = 0.0

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def bbox_diagonal(self) -> float:
        return self._bbox_diagonal

    def __len__(self) -> int:
        return len(self._points)

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)}, diagonal={self._bbox_diagonal:.6g})"

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points)


class SpatialIndex:
    """k-nearest and radius queries over a :class:`PointCloud`.

    Results are sorted by distance, ties broken by the lower point index.
    """

    def __init__(self, cloud: PointCloud):
        if len(cloud) == 0:
            raise ValueError("cannot index an empty point cloud")
        self.cloud = cloud
        self._tree = cKDTree(cloud.points)

    @property
    def tree(self) -> cKDTree:
        return self._tree

    def radius(self, center, r: float) -> np.ndarray:
        """Indices of all points with ``|p - center| <= r``, sorted by (distance, index)."""
        center = np.asarray(center, dtype=np.float64)
        idx = np.asarray(self._tree.query_ball_point(center, r), dtype=np.intp)
        # kd-tree pruning is approximate at the boundary; recheck exactly
        d = np.linalg.norm(self.cloud.points[idx] - center, axis=1)
        keep = d <= r
        idx, d = idx[keep], d[keep]
        order = np.lexsort((idx, d))
        return idx[order]

    def knn(self, center, k: int) -> tuple[np.ndarray, np.ndarray]:
        """The ``k`` nearest points as ``(distances, indices)``."""
        center = np.asarray(center, dtype=np.float64)
        n = len(self.cloud)
        k = min(k, n)
        # over-fetch so that ties at the k-th distance are resolved by index
        extra = min(n, k + 8)
        d, idx = self._tree.query(center, k=extra)
        d, idx = np.atleast_1d(d), np.atleast_1d(idx)
        d = np.linalg.norm(self.cloud.points[idx] - center, axis=1)
        if extra < n and d.max() <= np.sort(d)[k - 1]:
            d = np.linalg.norm(self.cloud.points - center, axis=1)
            idx = np.arange(n)
        order = np.lexsort((idx, d))[:k]
        return d[order], idx[order]


def build_index(cloud: PointCloud) -> SpatialIndex:
    return SpatialIndex(cloud)


def random_frames(n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` orthonormal right-handed frames drawn uniformly over SO(3).

    Returned as an ``(n, 3, 3)`` array whose rows are ``t1, t2, n``.
    """
    if n == 0:
        return np.zeros((0, 3, 3))
    mats = Rotation.random(n, random_state=rng).as_matrix()
    return np.ascontiguousarray(np.transpose(mats, (0, 2, 1)))


@dataclass
class SeedSet:
    positions: np.ndarray
    frames: np.ndarray
    coverage_radius: float
    point_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))

    def __len__(self) -> int:
        return len(self.positions)


def _greedy_cover(points, seed_idx, coverage_radius, tree) -> np.ndarray:
    covered = np.zeros(len(points), dtype=bool)
    if len(seed_idx):
        for nb in tree.query_ball_point(points[seed_idx], coverage_radius):
            covered[nb] = True
    extra = []
    for i in np.flatnonzero(~covered):
        if covered[i]:
            continue
        extra.append(i)
        covered[tree.query_ball_point(points[i], coverage_radius)] = True
    return np.concatenate([np.asarray(seed_idx, dtype=np.intp), np.asarray(extra, dtype=np.intp)])


def poisson_seed(
    cloud: PointCloud,
    rejection_radius: float,
    coverage_radius: float,
    rng: np.random.Generator | int | None = None,
) -> SeedSet:
    """Dart-throwing seeds over a random permutation of the input points.

    Seeds are kept at least ``rejection_radius`` apart; a greedy pass then
    adds a seed at any point farther than ``coverage_radius`` from all seeds.
    Each seed gets a uniformly random frame.
    """
    if not 0 < rejection_radius <= coverage_radius:
        raise ValueError("need 0 < rejection_radius <= coverage_radius")
    rng = np.random.default_rng(rng)
    pts = cloud.points
    tree = cKDTree(pts)
    order = rng.permutation(len(pts))
    rejected = np.zeros(len(pts), dtype=bool)
    chosen = []
    for i in order:
        if rejected[i]:
            continue
        chosen.append(i)
        rejected[tree.query_ball_point(pts[i], rejection_radius)] = True
    idx = _greedy_cover(pts, np.asarray(chosen, dtype=np.intp), coverage_radius, tree)
    return SeedSet(pts[idx].copy(), random_frames(len(idx), rng), coverage_radius, idx)


def stride_seed(
    cloud: PointCloud,
    stride: int,
    coverage_radius: float,
    rng: np.random.Generator | int | None = None,
) -> SeedSet:
    """One seed per ``stride``-th input point, completed to cover the cloud."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rng = np.random.default_rng(rng)
    pts = cloud.points
    base = np.arange(0, len(pts), stride, dtype=np.intp)
    idx = _greedy_cover(pts, base, coverage_radius, cKDTree(pts))
    return SeedSet(pts[idx].copy(), random_frames(len(idx), rng), coverage_radius, idx)


def nn_distances(points: np.ndarray) -> np.ndarray:
    """Distance from every point to its nearest other point."""
    d, _ = cKDTree(points).query(points, k=2)
    return d[:, 1]


def estimate_tau_p(cloud: PointCloud) -> float:
    """Probing accuracy, taken as the median nearest-neighbour distance."""
    if len(cloud) < 2:
        raise ValueError("need at least two points to estimate tau_p")
    tau = float(np.median(nn_distances(cloud.points)))
    if tau <= 0.0:
        if np.all(cloud.points == cloud.points[0]):
            raise ValueError("all points coincide; tau_p is undefined")
        # more than half the points are duplicated
        d = nn_distances(np.unique(cloud.points, axis=0))
        tau = float(np.median(d))
    return tau
