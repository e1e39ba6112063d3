"""Local probing fields: probing operators, rigid fits and pose optimisation.

Coordinates
-----------
A frame is stored as an origin ``s`` and a 3x3 ``axes`` array whose rows are
``t1, t2, n``. Local coordinates of a world point ``w`` are
``axes @ (w - s)``. Field vectors ``v_i`` are kept in local coordinates, so
the world position of a probed point is ``s + (u_i + v_i) @ axes``.

A :class:`RigidTransform` ``(R, t)`` acts on local coordinates as
``x -> R^-1 x - t``. Applying it to an LPF moves the frame so that world
positions of probed points are unchanged while their local coordinates
become ``R^-1 (u_i + v_i) - t``.

The batch functions below work on all LPFs at once; the single-LPF helpers
are thin wrappers used by the tests and by interactive code.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .geom import PointCloud, SpatialIndex
from .pattern import Pattern

TARGET_RADIUS_FACTOR = 1.1
# pairs (lpf, target point) handled per kd-tree; bounds peak memory
_CHUNK_PAIRS = 400_000
_TIE_K = 4


class DegenerateFitWarning(UserWarning):
    """Rigid fit on a point set with rank < 2; identity returned."""


@dataclass
class LocalFrame:
    origin: np.ndarray
    axes: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.axes = np.asarray(self.axes, dtype=np.float64).reshape(3, 3)

    @property
    def t1(self):
        return self.axes[0]

    @property
    def t2(self):
        return self.axes[1]

    @property
    def n(self):
        return self.axes[2]

    def to_local(self, points):
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.axes.T

    def to_world(self, local):
        return self.origin + np.asarray(local, dtype=np.float64) @ self.axes

    def orthonormality_error(self) -> float:
        a = self.axes
        err = np.abs(a @ a.T - np.eye(3)).max()
        return float(max(err, np.abs(np.cross(a[0], a[1]) - a[2]).max()))

    @classmethod
    def identity(cls, origin=(0.0, 0.0, 0.0)):
        return cls(origin, np.eye(3))


@dataclass
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def apply(self, x):
        """``R^-1 x - t`` for row vectors ``x``."""
        return np.asarray(x, dtype=np.float64) @ self.rotation - self.translation

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3)) and not self.translation.any())


@dataclass
class LocalProbingField:
    frame: LocalFrame
    pattern: Pattern
    v: np.ndarray
    valid: np.ndarray
    target: np.ndarray
    center: np.ndarray
    hits: np.ndarray | None = None
    energy_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.intp)
        self.target.setflags(write=False)
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)

    @property
    def energy(self) -> float:
        return float(np.sum(self.v[self.valid] ** 2))

    def world_points(self) -> np.ndarray:
        """World position ``s + u_i + v_i`` of every pattern point."""
        return self.frame.to_world(self.pattern.offsets + self.v)

    def signal(self) -> np.ndarray:
        return np.where(self.valid[:, None], self.v, 0.0).ravel()


# ---------------------------------------------------------------------------
# batch probing


def _chunks(counts, limit=_CHUNK_PAIRS):
    start, acc = 0, 0
    for j, c in enumerate(counts):
        if acc and acc + c > limit:
            yield start, j
            start, acc = j, 0
        acc += c
    if start < len(counts):
        yield start, len(counts)


def probe_batch(points, origins, axes, offsets, indptr, indices, method="aoap", max_inplane=np.inf, workers=1):
    """Probe every LPF against its own target points.

    Returns ``(v, valid, hits)`` with shapes ``(N, M, 3)``, ``(N, M)`` and
    ``(N, M)``; ``hits`` holds the cloud index of each probed point. Entries
    whose probed point lies farther than ``max_inplane`` from the pattern
    point, measured in the pattern plane, are invalid and zero-filled.
    """
    n_lpf, m = len(origins), len(offsets)
    counts = np.diff(indptr)
    if np.any(counts == 0):
        raise ValueError("every LPF needs a non-empty target area")
    v = np.zeros((n_lpf, m, 3))
    valid = np.zeros((n_lpf, m), dtype=bool)
    hits = np.zeros((n_lpf, m), dtype=np.intp)
    u2 = offsets[:, :2]
    p_ext = float(np.linalg.norm(offsets, axis=1).max())
    for a, b in _chunks(counts):
        nb = b - a
        lo, hi = indptr[a], indptr[b]
        gidx = indices[lo:hi]
        owner = np.repeat(np.arange(nb), counts[a:b])
        rel = points[gidx] - origins[a:b][owner]
        loc = np.einsum("pkj,pj->pk", axes[a:b][owner], rel)
        if method == "aoap":
            data_xy = loc[:, :2]
            q_xy = np.broadcast_to(u2, (nb, m, 2)).reshape(-1, 2)
            reach = float(np.linalg.norm(data_xy, axis=1).max()) + p_ext
        elif method == "nearest":
            data_xy = loc
            q_xy = np.broadcast_to(offsets, (nb, m, 3)).reshape(-1, 3)
            reach = float(np.linalg.norm(loc, axis=1).max()) + p_ext
        else:
            raise ValueError(f"unknown probing method {method!r}")
        # the LPF id becomes an extra coordinate spaced far beyond any
        # within-LPF distance, so one tree answers every LPF exactly
        sep = 2.0 * reach + 1.0
        data = np.column_stack([data_xy, owner * sep])
        q_owner = np.repeat(np.arange(nb), m)
        queries = np.column_stack([q_xy, q_owner * sep])
        k = min(_TIE_K, len(data))
        dist, nn = cKDTree(data).query(queries, k=k, workers=workers)
        dist, nn = dist.reshape(len(queries), k), nn.reshape(len(queries), k)
        nn_safe = np.minimum(nn, len(data) - 1)
        tie = (dist == dist[:, :1]) & (owner[nn_safe] == q_owner[:, None]) & (nn < len(data))
        big = np.iinfo(np.intp).max
        if method == "aoap":
            hk = np.where(tie, np.abs(loc[nn_safe, 2]), np.inf)
            tie &= hk == hk.min(axis=1, keepdims=True)
        gk = np.where(tie, gidx[nn_safe], big)
        pick = nn_safe[np.arange(len(queries)), gk.argmin(axis=1)]
        probed = loc[pick].reshape(nb, m, 3)
        vv = probed - offsets
        inplane = np.hypot(vv[..., 0], vv[..., 1])
        ok = inplane <= max_inplane
        v[a:b] = np.where(ok[..., None], vv, 0.0)
        valid[a:b] = ok
        hits[a:b] = gidx[pick].reshape(nb, m)
    return v, valid, hits


# ---------------------------------------------------------------------------
# rigid fits


def fit_rigid_batch(source, dest, weights=None, rank_tol=1e-12):
    """Weighted least-squares rigid fits for many point-set pairs at once.

    For each pair finds ``(R, t)`` minimising
    ``sum_i w_i |R^-1 source_i - t - dest_i|^2``. Returns ``(R, t, ok)``;
    pairs with fewer than three weighted points or a rank < 2 cross
    covariance get the identity and ``ok = False``.
    """
    source = np.asarray(source, dtype=np.float64)
    dest = np.asarray(dest, dtype=np.float64)
    n = source.shape[0]
    w = np.ones(source.shape[:2]) if weights is None else np.asarray(weights, dtype=np.float64)
    wsum = w.sum(axis=1)
    safe = np.where(wsum > 0, wsum, 1.0)
    cs = np.einsum("nm,nmi->ni", w, source) / safe[:, None]
    cd = np.einsum("nm,nmi->ni", w, dest) / safe[:, None]
    s0 = source - cs[:, None, :]
    d0 = dest - cd[:, None, :]
    h = np.einsum("nm,nmi,nmj->nij", w, s0, d0)
    u, sv, vt = np.linalg.svd(h)
    vmat = np.transpose(vt, (0, 2, 1))
    ut = np.transpose(u, (0, 2, 1))
    det = np.linalg.det(vmat @ ut)
    corr = np.ones((n, 3))
    corr[:, 2] = np.where(det < 0, -1.0, 1.0)
    q = vmat @ (corr[:, :, None] * ut)
    shift = cd - np.einsum("nij,nj->ni", q, cs)
    npts = (w > 0).sum(axis=1)
    scale = np.maximum(sv[:, 0], np.finfo(float).tiny)
    ok = (npts >= 3) & (sv[:, 1] > rank_tol * scale) & (sv[:, 0] > 0)
    rot = np.transpose(q, (0, 2, 1)).copy()
    trans = -shift
    rot[~ok] = np.eye(3)
    trans[~ok] = 0.0
    return rot, trans, ok


def fit_rigid(source, dest, weights=None) -> RigidTransform:
    """Rigid transform minimising ``sum |R^-1 source_i - t - dest_i|^2``.

    Solved in closed form from the SVD of the cross-covariance with a
    reflection correction. A degenerate configuration (fewer than three
    points, or all points collinear) gives the identity and a
    :class:`DegenerateFitWarning`.
    """
    source = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    dest = np.asarray(dest, dtype=np.float64).reshape(-1, 3)
    if source.shape != dest.shape:
        raise ValueError("source and dest must have the same shape")
    w = None if weights is None else np.asarray(weights, dtype=np.float64)[None]
    rot, trans, ok = fit_rigid_batch(source[None], dest[None], w)
    if not ok[0]:
        warnings.warn("degenerate rigid fit; returning identity", DegenerateFitWarning, stacklevel=2)
    return RigidTransform(rot[0], trans[0])


def orthonormalize(axes):
    """Nearest rotation (rows t1, t2, n) to each 3x3 matrix."""
    u, _, vt = np.linalg.svd(axes)
    return u @ vt


def apply_update_batch(origins, axes, v, valid, offsets, rot, trans):
    """Move frames by ``(R, t)`` keeping world positions of probed points fixed.

    Returns new ``(origins, axes, v)``; invalid entries of ``v`` stay zero.
    """
    q = np.transpose(rot, (0, 2, 1))
    new_axes = orthonormalize(q @ axes)
    new_origins = origins + np.einsum("nji,nj->ni", new_axes, trans)
    x = offsets[None] + v
    x_new = np.einsum("nij,nmj->nmi", q, x) - trans[:, None, :]
    v_new = np.where(valid[..., None], x_new - offsets[None], 0.0)
    return new_origins, new_axes, v_new


def lpf_energy(v, valid):
    return np.einsum("nm,nmk,nmk->n", valid.astype(np.float64), v, v)


@dataclass
class PoseResult:
    origins: np.ndarray
    axes: np.ndarray
    v: np.ndarray
    valid: np.ndarray
    hits: np.ndarray
    energy: np.ndarray
    trace: list
    iterations: int


def optimize_pose_batch(points, origins, axes, offsets, indptr, indices, method="aoap",
                        max_iter=20, tol=1e-4, max_inplane=np.inf, workers=1) -> PoseResult:
    """Alternate probing and rigid fitting to shrink ``sum |v_i|^2`` per LPF.

    An LPF stops at the first iteration whose relative decrease is below
    ``tol``. A step that would raise the energy after re-probing is rejected
    and stops that LPF, so every per-LPF energy sequence is non-increasing.
    """
    v, valid, hits = probe_batch(points, origins, axes, offsets, indptr, indices, method, max_inplane, workers)
    energy = lpf_energy(v, valid)
    trace = [energy.copy()]
    active = np.ones(len(origins), dtype=bool)
    it = 0
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            it -= 1
            break
        rot, trans, _ = fit_rigid_batch(offsets[None] + v[idx], np.broadcast_to(offsets, v[idx].shape), valid[idx])
        o2, a2, _ = apply_update_batch(origins[idx], axes[idx], v[idx], valid[idx], offsets, rot, trans)
        sub_ptr, sub_ind = csr_subset(indptr, indices, idx)
        v2, valid2, hits2 = probe_batch(points, o2, a2, offsets, sub_ptr, sub_ind, method, max_inplane, workers)
        e2 = lpf_energy(v2, valid2)
        e_old = energy[idx]
        accept = e2 <= e_old
        acc = idx[accept]
        origins, axes, v, valid, hits = origins.copy(), axes.copy(), v.copy(), valid.copy(), hits.copy()
        origins[acc], axes[acc], v[acc], valid[acc], hits[acc] = (
            o2[accept], a2[accept], v2[accept], valid2[accept], hits2[accept])
        energy = energy.copy()
        energy[acc] = e2[accept]
        done = ~accept | (e_old - e2 <= tol * e_old)
        active[idx[done]] = False
        trace.append(energy.copy())
    return PoseResult(origins, axes, v, valid, hits, energy, trace, it)


def csr_subset(indptr, indices, rows):
    counts = np.diff(indptr)[rows]
    ptr = np.zeros(len(rows) + 1, dtype=np.intp)
    np.cumsum(counts, out=ptr[1:])
    if len(rows) == 0:
        return ptr, indices[:0]
    starts = indptr[rows]
    pos = np.repeat(starts - ptr[:-1], counts) + np.arange(ptr[-1])
    return ptr, indices[pos]


def csr_from_lists(lists):
    counts = np.array([len(x) for x in lists], dtype=np.intp)
    ptr = np.zeros(len(lists) + 1, dtype=np.intp)
    np.cumsum(counts, out=ptr[1:])
    ind = np.concatenate([np.asarray(x, dtype=np.intp) for x in lists]) if lists else np.zeros(0, np.intp)
    return ptr, ind


def select_targets(points, centers, radius, tree=None):
    """CSR lists of the cloud points within ``radius`` of each center (closed ball)."""
    tree = cKDTree(points) if tree is None else tree
    lists = []
    for c, nb in zip(centers, tree.query_ball_point(centers, radius)):
        nb = np.asarray(nb, dtype=np.intp)
        nb = nb[np.linalg.norm(points[nb] - c, axis=1) <= radius]
        lists.append(np.sort(nb))
    return csr_from_lists(lists)


# ---------------------------------------------------------------------------
# single-LPF interface


def select_target(cloud: PointCloud, index: SpatialIndex, seed, r: float,
                  factor: float = TARGET_RADIUS_FACTOR) -> np.ndarray:
    """Cloud points inside the closed ball of radius ``factor * r`` around ``seed``."""
    if r <= 0:
        raise ValueError("r must be positive")
    return np.sort(index.radius(seed, factor * r))


def _probe_one(frame, pattern, cloud, target, method, max_inplane):
    target = np.asarray(target, dtype=np.intp)
    if len(target) == 0:
        raise ValueError("empty target area")
    if max_inplane is None:
        max_inplane = np.inf
    ptr = np.array([0, len(target)], dtype=np.intp)
    v, valid, hits = probe_batch(cloud.points, frame.origin[None], frame.axes[None], pattern.offsets,
                                 ptr, target, method, max_inplane)
    return v[0], valid[0], hits[0]


def probe_aoap(frame: LocalFrame, pattern: Pattern, cloud: PointCloud, target, max_inplane=None):
    """As-orthogonal-as-possible probing.

    Each pattern point takes the target point whose projection on the pattern
    plane is closest; ties go to the smaller out-of-plane offset, then the
    lower point index. Returns ``(v, valid)``.
    """
    v, valid, _ = _probe_one(frame, pattern, cloud, target, "aoap", max_inplane)
    return v, valid


def probe_nearest(frame: LocalFrame, pattern: Pattern, cloud: PointCloud, target, max_inplane=None):
    """Nearest-point probing (ties go to the lower point index)."""
    v, valid, _ = _probe_one(frame, pattern, cloud, target, "nearest", max_inplane)
    return v, valid


def make_lpf(frame: LocalFrame, pattern: Pattern, cloud: PointCloud, target, center=None,
             method="aoap", max_inplane=None) -> LocalProbingField:
    v, valid, hits = _probe_one(frame, pattern, cloud, target, method, max_inplane)
    center = frame.origin if center is None else center
    return LocalProbingField(frame, pattern, v, valid, target, center, hits, [float(np.sum(v[valid] ** 2))])


def apply_pose_update(lpf: LocalProbingField, transform: RigidTransform) -> LocalProbingField:
    o, a, v = apply_update_batch(lpf.frame.origin[None], lpf.frame.axes[None], lpf.v[None], lpf.valid[None],
                                 lpf.pattern.offsets, transform.rotation[None], transform.translation[None])
    return replace(lpf, frame=LocalFrame(o[0], a[0]), v=v[0], energy_trace=list(lpf.energy_trace))


def optimize_pose(lpf: LocalProbingField, cloud: PointCloud, target=None, probe="aoap",
                  max_iter: int = 20, tol: float = 1e-4, max_inplane=None) -> LocalProbingField:
    """ICP-style pose optimisation of a single LPF; see :func:`optimize_pose_batch`."""
    target = lpf.target if target is None else np.asarray(target, dtype=np.intp)
    if len(target) == 0:
        raise ValueError("empty target area")
    if max_inplane is None:
        max_inplane = np.inf
    ptr = np.array([0, len(target)], dtype=np.intp)
    res = optimize_pose_batch(cloud.points, lpf.frame.origin[None], lpf.frame.axes[None], lpf.pattern.offsets,
                              ptr, target, probe, max_iter, tol, max_inplane)
    return replace(lpf, frame=LocalFrame(res.origins[0], res.axes[0]), v=res.v[0], valid=res.valid[0],
                   hits=res.hits[0], energy_trace=[float(e[0]) for e in res.trace])
