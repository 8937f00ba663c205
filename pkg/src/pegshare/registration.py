"""Spatial (ICP) and temporal (DTW) registration of demonstration trajectories.

Each demonstration of the same task differs in start point, end point and
completion time, so before any averaging the demos are rigidly aligned onto a
reference demo and warped onto its timeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateGeometryError
from .trajectory import Trajectory, quat_mean_direction

ORTHO_TOL = 1e-9


@dataclass
class RigidTransform:
    """Proper rigid transform x -> R @ x + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        if self.R.shape != (3, 3) or self.t.shape != (3,):
            raise ConfigError("rigid transform shapes must be (3,3) and (3,)")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, pts):
        return np.asarray(pts, dtype=float) @ self.R.T + self.t

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self ∘ other)(x) = self(other(x))."""
        return RigidTransform(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.t)

    def is_proper(self, tol=ORTHO_TOL) -> bool:
        return (np.abs(self.R.T @ self.R - np.eye(3)).max() <= tol
                and abs(np.linalg.det(self.R) - 1.0) <= tol)


@dataclass
class WarpPath:
    """Monotone continuous index alignment between two sequences."""

    pairs: np.ndarray  # (k, 2) int, columns (i, j)

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=int)
        if self.pairs.ndim != 2 or self.pairs.shape[1] != 2 or len(self.pairs) == 0:
            raise ConfigError("warp path must be a nonempty (k, 2) index array")
        steps = np.diff(self.pairs, axis=0)
        if np.any(steps < 0) or np.any(steps > 1) or np.any(steps.sum(axis=1) == 0):
            raise ConfigError("warp path steps must increment i, j, or both by 1")
        if self.pairs[0, 0] != 0 or self.pairs[0, 1] != 0:
            raise ConfigError("warp path must start at (0, 0)")


@dataclass
class IcpConfig:
    max_iter: int = 100
    tol: float = 1e-9  # meters of RMSE improvement


@dataclass
class RegisteredDemoSet:
    """Demos of one arm aligned to the medoid reference and resampled to it."""

    reference_index: int
    demos: list
    transforms: list
    warp_costs: list

    def __post_init__(self):
        lens = {len(d) for d in self.demos}
        if len(lens) != 1:
            raise ConfigError("registered demos must share a sample count")


def kabsch_rotation(P, Q) -> RigidTransform:
    """Least-squares proper rigid fit R @ P[i] + t ≈ Q[i] via SVD.

    The sign of the last singular direction is flipped when the raw solution
    is a reflection.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[1] != 3:
        raise ConfigError("point sets must be equal-shape (n, 3)")
    if len(P) < 3:
        raise DegenerateGeometryError("need at least 3 point pairs")
    cp = P.mean(axis=0)
    cq = Q.mean(axis=0)
    H = (P - cp).T @ (Q - cq)
    if np.linalg.matrix_rank(H, tol=1e-12) < 2:
        raise DegenerateGeometryError("cross-covariance rank < 2 (collinear points)")
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    t = cq - R @ cp
    return RigidTransform(R, t)


def _icp_refine(src, tgt, init: RigidTransform, cfg: IcpConfig):
    current = init
    moved = init.apply(src)
    history = []
    prev_rmse = None
    for _ in range(cfg.max_iter):
        d2 = ((moved[:, None, :] - tgt[None, :, :]) ** 2).sum(axis=2)
        nn = np.argmin(d2, axis=1)
        step = kabsch_rotation(moved, tgt[nn])
        current = step.compose(current)
        moved = step.apply(moved)
        rmse = float(np.sqrt(((moved - tgt[nn]) ** 2).sum(axis=1).mean()))
        history.append(rmse)
        if prev_rmse is not None and prev_rmse - rmse < cfg.tol:
            break
        prev_rmse = rmse
    return current, history


def _principal_axes(pts):
    c = pts.mean(axis=0)
    cov = (pts - c).T @ (pts - c) / len(pts)
    _, vecs = np.linalg.eigh(cov)
    V = vecs[:, ::-1]  # descending variance
    if np.linalg.det(V) < 0:
        V[:, 2] = -V[:, 2]
    return c, V


def icp_align(source: Trajectory, target: Trajectory, cfg: IcpConfig | None = None):
    """Iteratively align source positions onto target positions.

    Correspondence is nearest neighbor in 3D position. Centroid subtraction
    provides the baseline initial alignment; because nearest-neighbor ICP has
    a narrow convergence basin under large rotations, principal-axis
    alignments (all four proper sign combinations) are also tried and the
    refinement with the lowest final RMSE wins (ties by candidate order).
    The returned residual history is monotone non-increasing.
    """
    cfg = cfg or IcpConfig()
    if cfg.max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    src = np.asarray(source.p, dtype=float)
    tgt = np.asarray(target.p, dtype=float)
    if len(src) == 0 or len(tgt) == 0:
        raise ConfigError("icp inputs must be nonempty")

    cs, Vs = _principal_axes(src)
    ct, Vt = _principal_axes(tgt)
    inits = [RigidTransform(np.eye(3), ct - cs)]
    for sx, sy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        S = np.diag([sx, sy, sx * sy])
        R0 = Vt @ S @ Vs.T
        inits.append(RigidTransform(R0, ct - R0 @ cs))

    best = None
    for init in inits:
        tf, history = _icp_refine(src, tgt, init, cfg)
        if best is None or history[-1] < best[1][-1]:
            best = (tf, history)
    return {"transform": best[0], "residual_history": best[1]}


def dtw_align(a, b):
    """Dynamic time warping with the symmetric unit-step pattern.

    a, b: (n, d) or (n,) series. Cost is the minimal cumulative Euclidean
    distance over all monotone continuous paths; ties in the traceback
    prefer the diagonal step.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float).T).T
    b = np.atleast_2d(np.asarray(b, dtype=float).T).T
    if len(a) == 0 or len(b) == 0:
        raise ConfigError("dtw inputs must be nonempty")
    n, m = len(a), len(b)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))

    INF = np.inf
    D = np.full((n + 1, m + 1), INF)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        row = D[i]
        above = D[i - 1]
        di = d[i - 1]
        for j in range(1, m + 1):
            best = above[j - 1]
            if above[j] < best:
                best = above[j]
            if row[j - 1] < best:
                best = row[j - 1]
            row[j] = di[j - 1] + best

    # traceback, diagonal preferred on ties
    i, j = n, m
    pairs = [(n - 1, m - 1)]
    while i > 1 or j > 1:
        diag, up, left = D[i - 1, j - 1], D[i - 1, j], D[i, j - 1]
        if i > 1 and j > 1 and diag <= up and diag <= left:
            i, j = i - 1, j - 1
        elif i > 1 and (j == 1 or up <= left):
            i -= 1
        else:
            j -= 1
        pairs.append((i - 1, j - 1))
    pairs.reverse()
    return {"path": WarpPath(np.array(pairs)), "cost": float(D[n, m])}


def warp_to_reference(traj: Trajectory, ref_len: int, path: WarpPath,
                      ref_t=None) -> Trajectory:
    """Resample traj onto the reference timeline given a (traj, ref) warp path.

    Where several source samples map to one reference index, positions are
    averaged and the quaternion nearest the mean direction is kept (with its
    grip flag). Timestamps are copied from the reference grid.
    """
    pairs = path.pairs
    if pairs[-1, 0] != len(traj) - 1 or pairs[-1, 1] != ref_len - 1:
        raise ConfigError("warp path does not match trajectory/reference lengths")
    if ref_t is None:
        ref_t = np.linspace(traj.t[0], traj.t[-1], ref_len)
    ref_t = np.asarray(ref_t, dtype=float)

    p_out = np.zeros((ref_len, 3))
    q_out = np.zeros((ref_len, 4))
    g_out = np.zeros(ref_len, dtype=bool)
    for j in range(ref_len):
        src = pairs[pairs[:, 1] == j, 0]
        p_out[j] = traj.p[src].mean(axis=0)
        if len(src) == 1:
            k = src[0]
        else:
            mean_q = quat_mean_direction(traj.q[src])
            k = src[int(np.argmax(np.abs(traj.q[src] @ mean_q)))]
        q_out[j] = traj.q[k]
        g_out[j] = traj.grip[k]
    return Trajectory(t=ref_t, p=p_out, q=q_out, grip=g_out, arm=traj.arm)


def register_demos(demos, cfg: IcpConfig | None = None) -> RegisteredDemoSet:
    """Register same-arm demos onto the DTW-cost medoid reference.

    The reference minimizes the summed DTW cost to all other demos (ties by
    lowest index). Every other demo is ICP-aligned to the reference and then
    DTW-warped onto its timeline.
    """
    if len(demos) == 0:
        raise ConfigError("need at least one demo")
    arms = {d.arm for d in demos}
    if len(arms) != 1:
        raise ConfigError("register_demos expects demos of a single arm")
    n = len(demos)
    if n == 1:
        return RegisteredDemoSet(0, [demos[0]],
                                 [RigidTransform.identity()], [0.0])

    costs = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            c = dtw_align(demos[i].p, demos[j].p)["cost"]
            costs[i, j] = costs[j, i] = c
    ref_idx = int(np.argmin(costs.sum(axis=1)))
    ref = demos[ref_idx]

    out_demos, transforms, warp_costs = [], [], []
    for i, demo in enumerate(demos):
        if i == ref_idx:
            out_demos.append(demo)
            transforms.append(RigidTransform.identity())
            warp_costs.append(0.0)
            continue
        icp = icp_align(demo, ref, cfg)
        tf = icp["transform"]
        aligned = demo.replace(p=tf.apply(demo.p))
        dtw = dtw_align(aligned.p, ref.p)
        warped = warp_to_reference(aligned, len(ref), dtw["path"], ref_t=ref.t)
        out_demos.append(warped)
        transforms.append(tf)
        warp_costs.append(dtw["cost"])
    return RegisteredDemoSet(ref_idx, out_demos, transforms, warp_costs)
