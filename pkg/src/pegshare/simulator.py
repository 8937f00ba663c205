"""Deterministic kinematic peg-transfer environment.

Implements the bimanual transfer protocol (right tool grasps the peg at
site 1, hands it to the left tool, which places it on site 2, re-grasps and
places on site 3, then the right tool returns it to site 1), a scripted
human stand-in with a limited master workspace and clutching, a top-down
grayscale renderer for the context classifier, the frame-level context
oracle, episode execution in three control modes, and the evaluation
metrics.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .cnn import forward as cnn_forward
from .errors import ConfigError, InsufficientDataError
from .dmp import rollout as dmp_rollout
from .shared_control import (BlendConfig, Command, RoleState, compose_command,
                             compute_alpha, mode_of, robot_increment)
from .trajectory import Trajectory, quat_identity, quat_rotate

EPISODE_TIMEOUT = 120.0  # seconds


class TaskPhase(enum.Enum):
    R_APPROACH_1 = 0
    R_GRASP = 1
    R_TO_HANDOFF = 2
    HANDOFF = 3
    L_TO_2 = 4
    L_PLACE_2 = 5
    L_GRASP_2 = 6
    L_TO_3 = 7
    L_PLACE_3 = 8
    R_GRASP_3 = 9
    R_TO_1 = 10
    R_PLACE_1 = 11
    DONE = 12

    @property
    def next(self) -> "TaskPhase":
        if self is TaskPhase.DONE:
            return self
        return TaskPhase(self.value + 1)


TRANSIT_PHASES = frozenset({TaskPhase.R_APPROACH_1, TaskPhase.R_TO_HANDOFF,
                            TaskPhase.L_TO_2, TaskPhase.L_TO_3,
                            TaskPhase.R_TO_1})
GRASP_PLACE_PHASES = frozenset({TaskPhase.R_GRASP, TaskPhase.L_PLACE_2,
                                TaskPhase.L_GRASP_2, TaskPhase.L_PLACE_3,
                                TaskPhase.R_GRASP_3, TaskPhase.R_PLACE_1})
HANDOFF_PHASES = frozenset({TaskPhase.R_TO_HANDOFF, TaskPhase.HANDOFF})

# arm steering the task per phase
ACTIVE_ARM = {
    TaskPhase.R_APPROACH_1: "right", TaskPhase.R_GRASP: "right",
    TaskPhase.R_TO_HANDOFF: "right", TaskPhase.HANDOFF: "left",
    TaskPhase.L_TO_2: "left", TaskPhase.L_PLACE_2: "left",
    TaskPhase.L_GRASP_2: "left", TaskPhase.L_TO_3: "left",
    TaskPhase.L_PLACE_3: "left", TaskPhase.R_GRASP_3: "right",
    TaskPhase.R_TO_1: "right", TaskPhase.R_PLACE_1: "right",
    TaskPhase.DONE: "right",
}

PLACE_SITE = {TaskPhase.L_PLACE_2: 2, TaskPhase.L_PLACE_3: 3,
              TaskPhase.R_PLACE_1: 1}


@dataclass
class RenderStyle:
    background: float = 0.0
    site_intensity: float = 0.35
    site_radius: float = 0.004
    tool_intensity_left: float = 0.6
    tool_intensity_right: float = 0.8
    tool_length: float = 0.012
    tool_width: float = 0.003
    peg_intensity: float = 1.0
    peg_radius: float = 0.003
    gamma: float = 1.0


def perturbed_style() -> RenderStyle:
    """Stand-in for the physical-platform imaging domain."""
    return RenderStyle(background=0.08, site_intensity=0.5, site_radius=0.005,
                       tool_intensity_left=0.5, tool_intensity_right=0.9,
                       tool_length=0.014, tool_width=0.004,
                       peg_intensity=0.85, peg_radius=0.0035, gamma=1.3)


@dataclass
class SimConfig:
    sites: np.ndarray = None        # (3, 3) meters on the board plane
    grasp_radius: float = 0.003
    place_radius: float = 0.003
    dt: float = 0.01
    v_max: float = 0.05
    image_size: int = 64
    view_half_width: float = 0.08
    handoff_point: np.ndarray = None
    handoff_radius: float = 0.006
    home_left: np.ndarray = None
    home_right: np.ndarray = None
    style: RenderStyle = None

    def __post_init__(self):
        if self.sites is None:
            side = 0.06
            h = side * np.sqrt(3) / 2
            self.sites = np.array([[-side / 2, -h / 3, 0.0],
                                   [side / 2, -h / 3, 0.0],
                                   [0.0, 2 * h / 3, 0.0]])
        self.sites = np.asarray(self.sites, dtype=float)
        if self.sites.shape != (3, 3):
            raise ConfigError("three 3D board sites required")
        for i in range(3):
            for j in range(i + 1, 3):
                if np.linalg.norm(self.sites[i] - self.sites[j]) < 1e-9:
                    raise ConfigError("board sites must be distinct")
        if self.grasp_radius <= 0 or self.place_radius <= 0:
            raise ConfigError("radii must be > 0")
        if self.dt <= 0 or self.v_max <= 0:
            raise ConfigError("dt and v_max must be > 0")
        if self.handoff_point is None:
            self.handoff_point = np.array([0.0, 0.0, 0.015])
        self.handoff_point = np.asarray(self.handoff_point, dtype=float)
        if self.home_left is None:
            self.home_left = np.array([-0.05, 0.04, 0.02])
        if self.home_right is None:
            self.home_right = np.array([0.05, 0.04, 0.02])
        self.home_left = np.asarray(self.home_left, dtype=float)
        self.home_right = np.asarray(self.home_right, dtype=float)
        if self.style is None:
            self.style = RenderStyle()

    def site(self, idx: int):
        return self.sites[idx - 1]


@dataclass
class ToolState:
    p: np.ndarray
    q: np.ndarray
    grip: bool  # True = closed


@dataclass
class PegState:
    p: np.ndarray
    held_by: str | None = None   # None | "left" | "right"
    site: int | None = None      # None | 1 | 2 | 3


@dataclass
class SimState:
    tools: dict           # "left"/"right" -> ToolState
    peg: PegState
    phase: TaskPhase
    clock: float = 0.0


def sim_init(cfg: SimConfig, seed: int = 0) -> SimState:
    """Fixed home poses, peg seated at site 1, protocol at its first phase."""
    del seed  # the initial state is deterministic; seeding drives agents
    tools = {
        "left": ToolState(p=cfg.home_left.copy(), q=quat_identity(), grip=False),
        "right": ToolState(p=cfg.home_right.copy(), q=quat_identity(), grip=False),
    }
    peg = PegState(p=cfg.site(1).copy(), held_by=None, site=1)
    return SimState(tools=tools, peg=peg, phase=TaskPhase.R_APPROACH_1)


def phase_goal(state: SimState, cfg: SimConfig):
    """(active arm, 3D target position) of the current phase."""
    ph = state.phase
    arm = ACTIVE_ARM[ph]
    if ph in (TaskPhase.R_APPROACH_1, TaskPhase.R_GRASP, TaskPhase.HANDOFF,
              TaskPhase.L_GRASP_2, TaskPhase.R_GRASP_3):
        target = state.peg.p
    elif ph is TaskPhase.R_TO_HANDOFF:
        target = cfg.handoff_point
    elif ph in (TaskPhase.L_TO_2, TaskPhase.L_PLACE_2):
        target = cfg.site(2)
    elif ph in (TaskPhase.L_TO_3, TaskPhase.L_PLACE_3):
        target = cfg.site(3)
    elif ph in (TaskPhase.R_TO_1, TaskPhase.R_PLACE_1):
        target = cfg.site(1)
    else:
        target = cfg.site(1)
    return arm, np.asarray(target, dtype=float).copy()


def _phase_condition_met(state: SimState, cfg: SimConfig) -> bool:
    ph = state.phase
    tools = state.tools
    peg = state.peg
    if ph is TaskPhase.R_APPROACH_1:
        return np.linalg.norm(tools["right"].p - peg.p) <= cfg.grasp_radius
    if ph is TaskPhase.R_GRASP:
        return peg.held_by == "right"
    if ph is TaskPhase.R_TO_HANDOFF:
        return (peg.held_by == "right"
                and np.linalg.norm(tools["right"].p - cfg.handoff_point)
                <= cfg.handoff_radius)
    if ph is TaskPhase.HANDOFF:
        return peg.held_by == "left"
    if ph is TaskPhase.L_TO_2:
        return np.linalg.norm(tools["left"].p - cfg.site(2)) <= cfg.place_radius
    if ph is TaskPhase.L_PLACE_2:
        return peg.site == 2
    if ph is TaskPhase.L_GRASP_2:
        return peg.held_by == "left"
    if ph is TaskPhase.L_TO_3:
        return np.linalg.norm(tools["left"].p - cfg.site(3)) <= cfg.place_radius
    if ph is TaskPhase.L_PLACE_3:
        return peg.site == 3
    if ph is TaskPhase.R_GRASP_3:
        return peg.held_by == "right"
    if ph is TaskPhase.R_TO_1:
        return np.linalg.norm(tools["right"].p - cfg.site(1)) <= cfg.place_radius
    if ph is TaskPhase.R_PLACE_1:
        return peg.site == 1
    return False


def sim_step(state: SimState, cmd_left: Command, cmd_right: Command,
             cfg: SimConfig, dt: float | None = None):
    """Advance one tick. Commands are assumed already speed-capped.

    Grip closing within grasp range attaches a free peg; the holder opening
    transfers to the other closed tool in range, seats the peg during its
    place phase, or drops it in place. The phase advances when its protocol
    condition holds.
    """
    dt = cfg.dt if dt is None else dt
    events = []
    cmds = {"left": cmd_left, "right": cmd_right}
    for arm in ("left", "right"):
        tool = state.tools[arm]
        tool.p = tool.p + cmds[arm].dp
        tool.q = cmds[arm].orientation.copy()

    peg = state.peg
    for arm in ("left", "right"):
        tool = state.tools[arm]
        new_grip = bool(cmds[arm].grip)
        if tool.grip and not new_grip and peg.held_by == arm:
            # holder opens: transfer, seat, or drop
            other = "left" if arm == "right" else "right"
            other_tool = state.tools[other]
            if (cmds[other].grip
                    and np.linalg.norm(other_tool.p - peg.p) <= cfg.grasp_radius):
                peg.held_by = other
                events.append(("handoff", state.clock))
            else:
                peg.held_by = None
                site = PLACE_SITE.get(state.phase)
                if site is not None and np.linalg.norm(
                        peg.p - cfg.site(site)) <= cfg.place_radius:
                    peg.site = site
                    peg.p = cfg.site(site).copy()
                    events.append(("placed", state.clock))
        tool.grip = new_grip

    if peg.held_by is None:
        for arm in ("left", "right"):
            tool = state.tools[arm]
            if tool.grip and np.linalg.norm(tool.p - peg.p) <= cfg.grasp_radius:
                peg.held_by = arm
                peg.site = None
                events.append(("grasped", state.clock))
                break
    if peg.held_by is not None:
        peg.p = state.tools[peg.held_by].p.copy()

    if state.phase is not TaskPhase.DONE and _phase_condition_met(state, cfg):
        state.phase = state.phase.next
        events.append(("phase", state.clock, state.phase.name))
    state.clock += dt
    return state, events


def task_context(state: SimState, cfg: SimConfig) -> int:
    """Frame-level oracle label: 0 transit, 1 bimanual, 2 local operation."""
    tips = state.tools
    if state.phase in HANDOFF_PHASES:
        if np.linalg.norm(tips["left"].p - tips["right"].p) <= 2 * cfg.grasp_radius:
            return 1
    if state.phase in GRASP_PLACE_PHASES:
        arm, target = phase_goal(state, cfg)
        if np.linalg.norm(tips[arm].p - target) <= 3 * cfg.grasp_radius:
            return 2
    return 0


_GRID_CACHE = {}


def _pixel_grid(res: int, half_width: float):
    key = (res, half_width)
    if key not in _GRID_CACHE:
        coords = (np.arange(res) + 0.5) / res * (2 * half_width) - half_width
        gx, gy = np.meshgrid(coords, -coords)  # image y grows downward
        _GRID_CACHE[key] = (gx, gy)
    return _GRID_CACHE[key]


def world_to_pixel(cfg: SimConfig, point):
    """Continuous pixel coordinates (col, row) of a world point."""
    point = np.asarray(point, dtype=float)
    hw = cfg.view_half_width
    res = cfg.image_size
    u = (point[0] + hw) / (2 * hw) * res - 0.5
    v = (-point[1] + hw) / (2 * hw) * res - 0.5
    return np.array([u, v])


def render_observation(state: SimState, cfg: SimConfig,
                       style: RenderStyle | None = None) -> np.ndarray:
    """Top-down anti-aliased grayscale raster of the scene in [0, 1]."""
    style = style or cfg.style
    res = cfg.image_size
    gx, gy = _pixel_grid(res, cfg.view_half_width)
    aa = 2 * cfg.view_half_width / res  # one pixel in world units
    img = np.full((res, res), style.background)

    def disc(center, radius, intensity):
        d = np.hypot(gx - center[0], gy - center[1])
        cover = np.clip((radius - d) / aa + 0.5, 0.0, 1.0)
        np.maximum(img, intensity * cover, out=img)

    def bar(center, direction, length, width, intensity):
        ux, uy = direction
        dx, dy = gx - center[0], gy - center[1]
        along = np.abs(dx * ux + dy * uy)
        across = np.abs(-dx * uy + dy * ux)
        cov = (np.clip((length / 2 - along) / aa + 0.5, 0, 1)
               * np.clip((width / 2 - across) / aa + 0.5, 0, 1))
        np.maximum(img, intensity * cov, out=img)

    for i in range(1, 4):
        disc(cfg.site(i), style.site_radius, style.site_intensity)
    for arm, intensity in (("left", style.tool_intensity_left),
                           ("right", style.tool_intensity_right)):
        tool = state.tools[arm]
        d3 = quat_rotate(tool.q, np.array([1.0, 0.0, 0.0]))
        n = np.hypot(d3[0], d3[1])
        direction = (d3[0] / n, d3[1] / n) if n > 1e-9 else (1.0, 0.0)
        bar(tool.p, direction, style.tool_length, style.tool_width, intensity)
    disc(state.peg.p, style.peg_radius, style.peg_intensity)
    if style.gamma != 1.0:
        img = img ** style.gamma
    return np.clip(img, 0.0, 1.0)


@dataclass
class HumanAgentConfig:
    gain: float = 2.0             # 1/s
    noise: float = 2e-4           # m per step
    reaction_delay: int = 2       # steps
    workspace_half_width: float = 0.025  # m, master side
    clutch_time: float = 0.5      # s
    seed: int = 0

    def __post_init__(self):
        if self.gain <= 0 or self.workspace_half_width <= 0:
            raise ConfigError("gain and workspace half-width must be > 0")


class ScriptedHuman:
    """Deterministic stand-in for the teleoperating human.

    Tracks a virtual master per arm inside a limited cube; exceeding it
    triggers a clutch (disengage, recenter, re-engage). The commanded
    effort follows the current authority weight: the operator relaxes when
    the robot leads.
    """

    def __init__(self, agent: HumanAgentConfig, cfg: SimConfig,
                 blend_cfg: BlendConfig, rng=None):
        self.agent = agent
        self.cfg = cfg
        self.blend = blend_cfg
        self.rng = rng if rng is not None else np.random.default_rng(agent.seed)
        self.master = {"left": np.zeros(3), "right": np.zeros(3)}
        self.clutch_left = {"left": 0.0, "right": 0.0}  # remaining recenter time
        self.delay_queue = {"left": [], "right": []}
        self.was_engaged = True

    def _subtargets(self, state: SimState):
        cfg = self.cfg
        ph = state.phase
        peg = state.peg.p
        targets = {"left": self.cfg.home_left, "right": self.cfg.home_right}
        grips = {"left": state.tools["left"].grip,
                 "right": state.tools["right"].grip}

        def near(arm, point, r):
            return np.linalg.norm(state.tools[arm].p - point) <= r

        if ph in (TaskPhase.R_APPROACH_1, TaskPhase.R_GRASP):
            targets["right"] = peg
            grips["right"] = ph is TaskPhase.R_GRASP and near(
                "right", peg, cfg.grasp_radius)
        elif ph is TaskPhase.R_TO_HANDOFF:
            targets["right"] = cfg.handoff_point
            offset = np.array([0.0, 0.004, 0.0])
            targets["left"] = cfg.handoff_point + offset
            grips["right"] = True
        elif ph is TaskPhase.HANDOFF:
            targets["left"] = peg
            targets["right"] = cfg.handoff_point  # hold station for transfer
            grips["right"] = not (state.tools["left"].grip
                                  and near("left", peg, cfg.grasp_radius))
            grips["left"] = near("left", peg, cfg.grasp_radius) \
                or state.tools["left"].grip
        elif ph is TaskPhase.L_TO_2:
            targets["left"] = cfg.site(2)
            grips["left"] = True
        elif ph is TaskPhase.L_PLACE_2:
            targets["left"] = cfg.site(2)
            grips["left"] = not near("left", cfg.site(2), cfg.place_radius)
        elif ph is TaskPhase.L_GRASP_2:
            targets["left"] = peg
            grips["left"] = near("left", peg, cfg.grasp_radius)
        elif ph is TaskPhase.L_TO_3:
            targets["left"] = cfg.site(3)
            grips["left"] = True
        elif ph is TaskPhase.L_PLACE_3:
            targets["left"] = cfg.site(3)
            grips["left"] = not near("left", cfg.site(3), cfg.place_radius)
        elif ph is TaskPhase.R_GRASP_3:
            targets["right"] = peg
            grips["right"] = near("right", peg, cfg.grasp_radius)
            grips["left"] = False
        elif ph is TaskPhase.R_TO_1:
            targets["right"] = cfg.site(1)
            grips["right"] = True
        elif ph is TaskPhase.R_PLACE_1:
            targets["right"] = cfg.site(1)
            grips["right"] = not near("right", cfg.site(1), cfg.place_radius)
        return targets, grips

    def step(self, state: SimState, alpha: float, dt: float):
        """Commands for both arms, plus engagement and clutch-event flags.

        Returned dp values are master-side increments (slave effect after
        the motion-scaling factor tau).
        """
        agent = self.agent
        targets, grips = self._subtargets(state)
        out = {}
        clutch_event = False
        for arm in ("left", "right"):
            desired_slave = agent.gain * (targets[arm] - state.tools[arm].p) * dt
            if agent.noise > 0:
                desired_slave = desired_slave + self.rng.normal(
                    0.0, agent.noise, 3)
            # relax as the robot takes authority
            desired_slave = alpha * desired_slave
            master_dp = desired_slave / self.blend.tau
            # reaction delay
            q = self.delay_queue[arm]
            q.append(master_dp)
            master_dp = q.pop(0) if len(q) > agent.reaction_delay else np.zeros(3)

            if self.clutch_left[arm] > 0.0:
                # recentering: no command, master returns toward 0
                frac = min(dt / self.clutch_left[arm], 1.0)
                self.master[arm] = self.master[arm] * (1.0 - frac)
                self.clutch_left[arm] -= dt
                if self.clutch_left[arm] <= 1e-12:
                    self.clutch_left[arm] = 0.0
                    self.master[arm] = np.zeros(3)
                    clutch_event = True
                master_dp = np.zeros(3)
            else:
                self.master[arm] = self.master[arm] + master_dp
                if np.any(np.abs(self.master[arm])
                          > agent.workspace_half_width):
                    self.clutch_left[arm] = agent.clutch_time
                    master_dp = np.zeros(3)
            out[arm] = Command(dp=master_dp, orientation=quat_identity(),
                               grip=grips[arm])
        engaged = all(v == 0.0 for v in self.clutch_left.values())
        return out["left"], out["right"], engaged, clutch_event


@dataclass
class StepRecord:
    clock: float
    master_p: dict         # arm -> (3,) virtual master position
    engaged: bool
    dp_human: dict         # arm -> (3,) master-side command after delay/clutch
    dp_robot: dict         # arm -> (3,) autonomous increment
    alpha: float
    probs: np.ndarray | None  # context probabilities (shared mode)
    context: int
    mode: str
    tool_p: dict
    tool_grip: dict
    peg_p: np.ndarray
    peg_held_by: str | None
    peg_site: int | None
    phase: str


@dataclass
class EpisodeLog:
    steps: list
    events: list
    seed: int
    mode: str
    success: bool
    cfg_dt: float
    tau: float


@dataclass
class Metrics:
    M: float  # master path length, meters
    T: float  # completion time, seconds
    A: float  # average robot tool speed, mm/s
    C: int    # clutch count


class PhaseReferences:
    """Per-phase autonomous references, regenerated at each phase entry.

    Transit phases may carry a learned movement primitive; any phase
    without one falls back to a straight-line reference to the phase goal.
    """

    def __init__(self, dmp_models: dict | None = None, points: int = 120,
                 speed_fraction: float = 0.8):
        self.dmp_models = dmp_models or {}
        self.points = points
        self.speed_fraction = speed_fraction

    def reference_for(self, state: SimState, cfg: SimConfig):
        arm, target = phase_goal(state, cfg)
        start = state.tools[arm].p.copy()
        model = self.dmp_models.get(state.phase.name)
        dist = float(np.linalg.norm(target - start))
        duration = max(dist / max(self.speed_fraction * cfg.v_max, 1e-6), 0.3)
        if model is not None and dist > 1e-6:
            traj = dmp_rollout(model, start, target, duration=duration,
                               dt=duration / self.points)
            return traj.p
        u = np.linspace(0.0, 1.0, self.points)
        return start[None, :] + u[:, None] * (target - start)[None, :]


def run_episode(mode: str, models: dict, cfg: SimConfig,
                agent_cfg: HumanAgentConfig, blend_cfg: BlendConfig,
                seed: int = 0, timeout: float = EPISODE_TIMEOUT) -> EpisodeLog:
    """Fixed-step episode loop in manual / autonomous / shared mode.

    models: {"classifier": Classifier (shared), "references":
    PhaseReferences (shared and autonomous)}. Manual forces alpha = 1;
    autonomous forces alpha = 0 in transit phases; shared derives alpha
    from the classifier via the role-adaptation law each frame.
    """
    if mode not in ("manual", "autonomous", "shared"):
        raise ConfigError("mode must be manual, autonomous, or shared")
    classifier = models.get("classifier")
    references = models.get("references")
    if mode == "shared" and classifier is None:
        raise ConfigError("shared mode requires a classifier")
    if mode in ("shared", "autonomous") and references is None:
        raise ConfigError("%s mode requires phase references" % mode)

    state = sim_init(cfg, seed)
    rng = np.random.default_rng(seed)
    agent = ScriptedHuman(agent_cfg, cfg, blend_cfg, rng=rng)
    role = RoleState()
    steps = []
    events = []
    current_phase = state.phase
    reference = references.reference_for(state, cfg) if references else None
    progress = 0

    while state.clock < timeout and state.phase is not TaskPhase.DONE:
        if state.phase is not current_phase:
            current_phase = state.phase
            if references is not None:
                reference = references.reference_for(state, cfg)
                progress = 0
        context = task_context(state, cfg)
        if mode == "manual":
            alpha = 1.0
            probs = None
        elif mode == "autonomous":
            alpha = 0.0 if state.phase in TRANSIT_PHASES else 1.0
            probs = None
        else:
            img = render_observation(state, cfg)
            probs = cnn_forward(classifier, img).p
            alpha, role = compute_alpha(probs, role, blend_cfg.lam)

        cmd_l, cmd_r, engaged, clutch_event = agent.step(state, alpha, cfg.dt)
        if clutch_event:
            events.append(("clutch", state.clock))

        dp_robot = {"left": np.zeros(3), "right": np.zeros(3)}
        if reference is not None and alpha < 1.0:
            active, _ = phase_goal(state, cfg)
            dp, progress = robot_increment(reference,
                                           state.tools[active].p,
                                           progress, blend_cfg, cfg.dt)
            dp_robot[active] = dp

        composed = {}
        for arm, cmd in (("left", cmd_l), ("right", cmd_r)):
            composed[arm] = compose_command(cmd, dp_robot[arm], alpha,
                                            blend_cfg, cfg.dt)

        steps.append(StepRecord(
            clock=state.clock,
            master_p={k: v.copy() for k, v in agent.master.items()},
            engaged=engaged,
            dp_human={"left": cmd_l.dp.copy(), "right": cmd_r.dp.copy()},
            dp_robot={k: v.copy() for k, v in dp_robot.items()},
            alpha=alpha,
            probs=None if probs is None else np.asarray(probs, dtype=float),
            context=context,
            mode=mode_of(alpha).value,
            tool_p={k: v.p.copy() for k, v in state.tools.items()},
            tool_grip={k: v.grip for k, v in state.tools.items()},
            peg_p=state.peg.p.copy(),
            peg_held_by=state.peg.held_by,
            peg_site=state.peg.site,
            phase=state.phase.name,
        ))
        state, ev = sim_step(state, composed["left"], composed["right"], cfg)
        events.extend(ev)

    return EpisodeLog(steps=steps, events=events, seed=seed, mode=mode,
                      success=state.phase is TaskPhase.DONE,
                      cfg_dt=cfg.dt, tau=blend_cfg.tau)


def compute_metrics(log: EpisodeLog) -> Metrics:
    """Master path length, completion time, mean tool speed, clutch count."""
    if not log.steps:
        raise InsufficientDataError("empty episode log")
    M = 0.0
    robot_path = 0.0
    prev_tools = None
    C = 0
    prev_engaged = True
    for rec in log.steps:
        if rec.engaged:
            M += float(np.linalg.norm(rec.dp_human["left"])
                       + np.linalg.norm(rec.dp_human["right"]))
        if prev_tools is not None:
            for arm in ("left", "right"):
                robot_path += float(np.linalg.norm(
                    np.asarray(rec.tool_p[arm]) - prev_tools[arm]))
        prev_tools = {k: np.asarray(v) for k, v in rec.tool_p.items()}
        if rec.engaged and not prev_engaged:
            C += 1
        prev_engaged = rec.engaged
    T = log.steps[-1].clock + log.cfg_dt
    A = 1000.0 * robot_path / T if T > 0 else 0.0
    return Metrics(M=M, T=T, A=A, C=C)


def log_to_trajectories(log: EpisodeLog):
    """Per-arm tool trajectories extracted from an episode log."""
    out = {}
    for arm in ("left", "right"):
        t = np.array([rec.clock for rec in log.steps])
        p = np.array([rec.tool_p[arm] for rec in log.steps])
        grip = np.array([rec.tool_grip[arm] for rec in log.steps])
        q = np.tile(quat_identity(), (len(t), 1))
        out[arm] = Trajectory(t=t, p=p, q=q, grip=grip, arm=arm)
    return out


def generate_demo_logs(n: int, cfg: SimConfig, agent_cfg: HumanAgentConfig,
                       blend_cfg: BlendConfig, seed: int = 0):
    """n scripted manual episodes with perturbed seeds."""
    if n < 1:
        raise ConfigError("need n >= 1 demos")
    logs = []
    for i in range(n):
        log = run_episode("manual", {}, cfg, agent_cfg, blend_cfg,
                          seed=seed + 1000 * i)
        logs.append(log)
    return logs


def phase_segments(log: EpisodeLog, phase_name: str, max_samples: int = 80):
    """Active-arm tool trajectory over the first span of a phase in a log."""
    arm = ACTIVE_ARM[TaskPhase[phase_name]]
    idx = [i for i, rec in enumerate(log.steps) if rec.phase == phase_name]
    if len(idx) < 4:
        return None
    start, stop = idx[0], idx[-1]
    t = np.array([log.steps[i].clock for i in range(start, stop + 1)])
    p = np.array([log.steps[i].tool_p[arm] for i in range(start, stop + 1)])
    if len(t) > max_samples:
        keep = np.linspace(0, len(t) - 1, max_samples).round().astype(int)
        t, p = t[keep], p[keep]
    q = np.tile(quat_identity(), (len(t), 1))
    return Trajectory(t=t - t[0], p=p, q=q,
                      grip=np.zeros(len(t), dtype=bool), arm=arm)


def fit_phase_dmps(logs, phases=None, n_kernels: int = 50,
                   grid_n: int = 60) -> dict:
    """Learned per-phase movement primitives from demonstration logs.

    Each phase's active-arm segments are registered across demos, averaged
    by a per-dimension GP over normalized time, and summarized as one
    movement primitive fit on the GP mean.
    """
    from .dmp import DmpParams, fit_weights
    from .gpr import fit_desired_trajectory
    from .registration import register_demos

    if phases is None:
        phases = sorted(ph.name for ph in TRANSIT_PHASES)
    out = {}
    for name in phases:
        segs = [s for s in (phase_segments(log, name) for log in logs)
                if s is not None]
        if not segs:
            continue
        arm = segs[0].arm
        dset = register_demos(segs)
        desired = fit_desired_trajectory({arm: dset}, grid_n)
        duration = float(np.median([s.t[-1] for s in segs]))
        if duration <= 0:
            continue
        params = DmpParams(duration=duration, n_kernels=n_kernels)
        t = desired.grid * duration
        out[name] = fit_weights((t, desired.arms[arm].mean), params,
                                degenerate_ok=True)
    return out


def labeled_frames_from_log(log: EpisodeLog, cfg: SimConfig,
                            style: RenderStyle | None = None, stride: int = 5):
    """Re-render every stride-th logged state with its oracle label."""
    images, labels = [], []
    for rec in log.steps[::stride]:
        state = SimState(
            tools={arm: ToolState(p=np.asarray(rec.tool_p[arm]),
                                  q=quat_identity(),
                                  grip=rec.tool_grip[arm])
                   for arm in ("left", "right")},
            peg=PegState(p=np.asarray(rec.peg_p), held_by=rec.peg_held_by,
                         site=rec.peg_site),
            phase=TaskPhase[rec.phase],
            clock=rec.clock,
        )
        images.append(render_observation(state, cfg, style))
        labels.append(task_context(state, cfg))
    return np.array(images), np.array(labels)
