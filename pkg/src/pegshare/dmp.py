"""Dynamic movement primitives for goal-adapted trajectory reproduction.

A critically damped goal attractor plus a phase-driven forcing term of
normalized Gaussian kernels. Weights are learned from one demonstration by
locally weighted regression; rollouts integrate the system with fixed-step
RK4 toward arbitrary new start/goal pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateAmplitudeError
from .trajectory import Trajectory, quat_identity

AMPLITUDE_EPS = 1e-4  # meters


@dataclass
class DmpParams:
    alpha_z: float = 25.0
    beta_z: float = 6.25
    alpha_x: float = 8.0
    duration: float = 1.0  # temporal scaling, seconds
    n_kernels: int = 50
    centers: np.ndarray = None
    widths: np.ndarray = None

    def __post_init__(self):
        if min(self.alpha_z, self.beta_z, self.alpha_x, self.duration) <= 0:
            raise ConfigError("DMP scale factors and duration must be > 0")
        if self.n_kernels < 1:
            raise ConfigError("need at least one kernel")
        if self.centers is None:
            # centers at the phase values of uniformly spaced times, so the
            # kernels cover time uniformly despite exponential phase decay
            u = np.linspace(0.0, 1.0, self.n_kernels)
            self.centers = np.exp(-self.alpha_x * u)
        self.centers = np.asarray(self.centers, dtype=float)
        if self.widths is None:
            gaps = np.diff(self.centers)
            h = 1.0 / (2.0 * gaps ** 2)
            self.widths = np.append(h, h[-1]) if len(h) else np.array([1.0])
        self.widths = np.asarray(self.widths, dtype=float)
        if np.any(self.widths <= 0):
            raise ConfigError("kernel widths must be > 0")
        if np.any(np.diff(self.centers) >= 0):
            raise ConfigError("centers must be sorted descending in phase")

    def with_duration(self, duration: float) -> "DmpParams":
        return DmpParams(self.alpha_z, self.beta_z, self.alpha_x, duration,
                         self.n_kernels, self.centers.copy(), self.widths.copy())

    @property
    def stiffness(self) -> float:
        return self.alpha_z * self.beta_z / self.duration

    @property
    def damping(self) -> float:
        return self.alpha_z


def phase_at(t, params: DmpParams):
    """Closed-form phase of the first-order canonical system."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ConfigError("time must be nonnegative")
    return np.exp(-params.alpha_x * t / params.duration)


def basis(s, params: DmpParams):
    """Gaussian kernel activations at phase s, each in (0, 1].

    Floored at the smallest positive normal float so positivity survives
    exponent underflow for narrow kernels far from s.
    """
    return np.maximum(np.exp(-params.widths * (s - params.centers) ** 2),
                      np.finfo(float).tiny)


@dataclass
class DmpModel:
    params: DmpParams
    weights: np.ndarray     # (N, d)
    x0: np.ndarray          # (d,)
    goal: np.ndarray        # (d,)
    degenerate: np.ndarray  # (d,) bool: |g - x0| below amplitude epsilon

    @property
    def n_dims(self) -> int:
        return self.weights.shape[1]

    @property
    def amplitude(self) -> np.ndarray:
        return self.goal - self.x0


def forcing(model: DmpModel, s: float):
    """Normalized weighted kernel sum times the phase, per dimension."""
    psi = basis(s, model.params)
    return (model.weights.T @ psi) * s / psi.sum()


def fit_weights(demo, params: DmpParams, degenerate_ok: bool = False) -> DmpModel:
    """Learn forcing weights from one demonstration.

    demo: Trajectory or (t, positions) tuple. Velocities and accelerations
    come from central finite differences; weights solve the closed-form
    locally weighted least squares per kernel. Dimensions whose amplitude
    |g - x0| is below 1e-4 m raise unless degenerate_ok, in which case they
    are flagged and rolled out as a pure spring-damper.
    """
    if isinstance(demo, Trajectory):
        t, pos = demo.t, demo.p
    else:
        t, pos = demo
    t = np.asarray(t, dtype=float)
    pos = np.atleast_2d(np.asarray(pos, dtype=float).T).T
    if len(t) < 3:
        raise ConfigError("need at least 3 samples to fit a DMP")

    duration = float(t[-1] - t[0])
    params = params.with_duration(duration)
    x0 = pos[0].copy()
    goal = pos[-1].copy()
    amp = goal - x0
    degenerate = np.abs(amp) < AMPLITUDE_EPS
    if np.any(degenerate) and not degenerate_ok:
        raise DegenerateAmplitudeError(
            "goal equals start (within 1e-4 m) in dimensions %s"
            % np.flatnonzero(degenerate).tolist())

    vel = np.gradient(pos, t, axis=0, edge_order=2)
    acc = np.gradient(vel, t, axis=0, edge_order=2)
    g = params.duration
    s = phase_at(t - t[0], params)

    weights = np.zeros((params.n_kernels, pos.shape[1]))
    psi = np.exp(-params.widths[None, :] * (s[:, None] - params.centers[None, :]) ** 2)
    for dim in range(pos.shape[1]):
        if degenerate[dim]:
            continue
        f_tgt = (g ** 2 * acc[:, dim]
                 - params.alpha_z * (params.beta_z * (goal[dim] - pos[:, dim])
                                     - g * vel[:, dim])) / amp[dim]
        num = (psi * (s * f_tgt)[:, None]).sum(axis=0)
        den = (psi * (s ** 2)[:, None]).sum(axis=0)
        weights[:, dim] = num / den
    return DmpModel(params=params, weights=weights, x0=x0, goal=goal,
                    degenerate=degenerate)


def rollout(model: DmpModel, x0, goal, duration: float, dt: float = 1e-3,
            horizon: float | None = None) -> Trajectory:
    """Integrate the DMP toward a new start/goal pair with fixed-step RK4.

    The temporal scaling is recomputed as the rollout duration. Integration
    runs to `horizon` (default: duration) so settling beyond the nominal
    motion time can be observed; the final state is appended.
    """
    if dt <= 0 or duration < dt:
        raise ConfigError("need dt > 0 and duration >= dt")
    if horizon is None:
        horizon = duration
    if horizon < duration:
        raise ConfigError("horizon must be >= duration")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    goal = np.atleast_1d(np.asarray(goal, dtype=float))
    params = model.params.with_duration(duration)
    scale = goal - x0
    scale = np.where(model.degenerate, 0.0, scale)
    g = params.duration
    az, bz, ax = params.alpha_z, params.beta_z, params.alpha_x
    W = model.weights

    def deriv(x, v, s):
        psi = np.exp(-params.widths * (s - params.centers) ** 2)
        F = (W.T @ psi) * s / psi.sum()
        acc = (az * (bz * (goal - x) - g * v) + scale * F) / g
        sdot = -ax * s / g
        return v, acc, sdot

    n_steps = int(np.floor(horizon / dt + 1e-9))
    times = [0.0]
    xs = [x0.copy()]
    x = x0.copy()
    v = np.zeros_like(x0)
    s = 1.0
    t = 0.0
    for k in range(n_steps):
        h = dt if k < n_steps - 1 else horizon - t
        if h <= 0:
            break
        k1 = deriv(x, v, s)
        k2 = deriv(x + 0.5 * h * k1[0], v + 0.5 * h * k1[1], s + 0.5 * h * k1[2])
        k3 = deriv(x + 0.5 * h * k2[0], v + 0.5 * h * k2[1], s + 0.5 * h * k2[2])
        k4 = deriv(x + h * k3[0], v + h * k3[1], s + h * k3[2])
        x = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        s = s + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        t += h
        times.append(t)
        xs.append(x.copy())

    pos = np.asarray(xs)
    if pos.shape[1] < 3:
        pos = np.pad(pos, ((0, 0), (0, 3 - pos.shape[1])))
    n = len(times)
    return Trajectory(t=np.asarray(times), p=pos,
                      q=np.tile(quat_identity(), (n, 1)),
                      grip=np.zeros(n, dtype=bool), arm="right")
