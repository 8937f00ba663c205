"""Tool trajectory container and quaternion helpers.

A trajectory is the common currency of registration, regression, primitive
fitting and logging: a time-stamped sequence of tool samples (position,
orientation quaternion, gripper flag) for one arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

QUAT_TOL = 1e-9


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ConfigError("zero quaternion")
    return q / n


def quat_identity():
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_rotate(q, v):
    """Rotate vector(s) v by unit quaternion q = (w, x, y, z)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w, u = q[0], q[1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_from_matrix(R):
    """Unit quaternion (w, x, y, z) of a proper rotation matrix."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return quat_normalize(q)


def quat_mean_direction(qs):
    """Sign-aligned normalized mean of a set of unit quaternions."""
    qs = np.asarray(qs, dtype=float)
    ref = qs[0]
    signs = np.where(qs @ ref < 0, -1.0, 1.0)
    m = (qs * signs[:, None]).sum(axis=0)
    return quat_normalize(m)


@dataclass
class Trajectory:
    """Time-stamped tool samples for one arm.

    t: (n,) seconds, strictly increasing; p: (n, 3) meters;
    q: (n, 4) unit quaternions (w, x, y, z); grip: (n,) bool (closed=True).
    """

    t: np.ndarray
    p: np.ndarray
    q: np.ndarray
    grip: np.ndarray
    arm: str = "right"

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.grip = np.asarray(self.grip, dtype=bool)
        n = len(self.t)
        if n < 2:
            raise ConfigError("trajectory needs at least 2 samples")
        if self.p.shape != (n, 3) or self.q.shape != (n, 4) or self.grip.shape != (n,):
            raise ConfigError("trajectory field shapes disagree")
        if not np.all(np.diff(self.t) > 0):
            raise ConfigError("timestamps must be strictly increasing")
        norms = np.linalg.norm(self.q, axis=1)
        if np.any(np.abs(norms - 1.0) > QUAT_TOL):
            raise ConfigError("quaternions must be unit length")
        if self.arm not in ("left", "right"):
            raise ConfigError("arm must be 'left' or 'right'")

    def __len__(self):
        return len(self.t)

    def replace(self, **kw) -> "Trajectory":
        data = {"t": self.t, "p": self.p, "q": self.q,
                "grip": self.grip, "arm": self.arm}
        data.update(kw)
        return Trajectory(**data)


def straight_line_trajectory(p0, p1, n=50, duration=1.0, arm="right"):
    """Convenience constructor used by tests and fallback references."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    u = np.linspace(0.0, 1.0, n)
    p = p0[None, :] + u[:, None] * (p1 - p0)[None, :]
    q = np.tile(quat_identity(), (n, 1))
    return Trajectory(t=u * duration, p=p, q=q, grip=np.zeros(n, dtype=bool), arm=arm)
