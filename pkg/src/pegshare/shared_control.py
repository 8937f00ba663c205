"""Role-adaptive blending of human and autonomous motion increments.

The context probabilities set a weight alpha between full manual authority
(alpha = 1) and full autonomy (alpha = 0); position increments are blended
as tau * [alpha * human + (1 - alpha) * robot], with orientation and grip
always passed through from the human command.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InsufficientDataError


@dataclass
class BlendConfig:
    tau: float = 0.5            # motion scaling factor
    lam: float = 0.5            # context-switch threshold
    v_max: float = 0.05         # robot speed cap, m/s

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if not (0.0 < self.lam < 1.0):
            raise ConfigError("lambda must be in (0, 1)")
        if self.v_max < 0:
            raise ConfigError("v_max must be >= 0")


@dataclass
class RoleState:
    prev_context: int = 0
    alpha: float = 1.0  # manual until the first classification


class ControlMode(enum.Enum):
    MANUAL = "manual"
    AUTONOMOUS = "autonomous"
    ADAPTIVE_SHARED = "adaptive_shared"


@dataclass
class Command:
    dp: np.ndarray        # (3,) meters
    orientation: np.ndarray  # quaternion (w, x, y, z)
    grip: bool

    def __post_init__(self):
        self.dp = np.asarray(self.dp, dtype=float)
        self.orientation = np.asarray(self.orientation, dtype=float)


def compute_alpha(probs, state: RoleState, lam: float = 0.5):
    """Role-adaptation weight from the current context probabilities.

    c(t) is the argmax (ties to the lowest index). The margin is read from
    the current frame: P(c = c(t)) - P(c = c(t-1)). A margin at or above
    lambda means the recognized context is trusted (alpha saturates to 1
    for local/bimanual contexts, 0 for transit); below lambda the operation
    is in transition and alpha tracks the previous context's probability.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (3,) or abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
        raise ConfigError("probs must be a 3-simplex vector")
    if not (0.0 < lam < 1.0):
        raise ConfigError("lambda must be in (0, 1)")
    c_t = int(np.argmax(probs))
    dpc = probs[c_t] - probs[state.prev_context]
    if dpc < lam:
        if c_t in (1, 2):
            alpha = float(probs[state.prev_context])
        else:
            alpha = 1.0 - float(probs[state.prev_context])
    else:
        alpha = 1.0 if c_t in (1, 2) else 0.0
    return alpha, RoleState(prev_context=c_t, alpha=alpha)


def blend(dp_human, dp_robot, alpha: float, tau: float):
    """Convex combination of increments, scaled by the motion factor."""
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError("alpha must be in [0, 1]")
    if tau <= 0:
        raise ConfigError("tau must be > 0")
    dp_human = np.asarray(dp_human, dtype=float)
    dp_robot = np.asarray(dp_robot, dtype=float)
    return tau * (alpha * dp_human + (1.0 - alpha) * dp_robot)


def robot_increment(reference, pose, progress: int, cfg: BlendConfig, dt: float):
    """Step along the learned reference toward its next point.

    progress never decreases; the increment points at the reference point
    after the nearest one and is capped at v_max * dt.
    """
    reference = np.asarray(reference, dtype=float)
    if reference.ndim != 2 or len(reference) < 2:
        raise InsufficientDataError("reference needs at least 2 points")
    pose = np.asarray(pose, dtype=float)
    d = np.linalg.norm(reference - pose, axis=1)
    progress2 = max(int(progress), int(np.argmin(d)))
    target = reference[min(progress2 + 1, len(reference) - 1)]
    delta = target - pose
    cap = cfg.v_max * dt
    norm = np.linalg.norm(delta)
    if norm > cap:
        delta = delta * (cap / norm) if norm > 0 else delta
    if progress2 >= len(reference) - 1 and np.linalg.norm(reference[-1] - pose) == 0:
        delta = np.zeros(3)
    return delta, progress2


def mode_of(alpha: float) -> ControlMode:
    if not (0.0 <= alpha <= 1.0):
        raise ConfigError("alpha must be in [0, 1]")
    if alpha == 1.0:
        return ControlMode.MANUAL
    if alpha == 0.0:
        return ControlMode.AUTONOMOUS
    return ControlMode.ADAPTIVE_SHARED


def compose_command(human: Command, dp_robot, alpha: float, cfg: BlendConfig,
                    dt: float) -> Command:
    """Blend positions, cap at v_max * dt, pass orientation and grip through."""
    dp = blend(human.dp, dp_robot, alpha, cfg.tau)
    cap = cfg.v_max * dt
    norm = np.linalg.norm(dp)
    if norm > cap and norm > 0:
        dp = dp * (cap / norm)
    return Command(dp=dp, orientation=human.orientation.copy(), grip=human.grip)
