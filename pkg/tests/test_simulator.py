import numpy as np
import pytest

from pegshare.cnn import Classifier, ClassifierArch, ConvSpec
from pegshare.errors import ConfigError, InsufficientDataError
from pegshare.shared_control import BlendConfig, Command, RoleState, compute_alpha
from pegshare.simulator import (HumanAgentConfig, PegState, PhaseReferences,
                                ScriptedHuman, SimConfig, SimState, StepRecord,
                                TaskPhase, ToolState, EpisodeLog,
                                compute_metrics, generate_demo_logs,
                                labeled_frames_from_log, phase_goal,
                                render_observation, run_episode, sim_init,
                                sim_step, task_context)
from pegshare.trajectory import quat_identity


def zero_cmd(grip=False):
    return Command(dp=np.zeros(3), orientation=quat_identity(), grip=grip)


def small_clf():
    arch = ClassifierArch(input_size=64,
                          conv_layers=(ConvSpec(4, 2), ConvSpec(8, 2)),
                          fc_layers=(16, 3))
    return Classifier(arch, seed=0)


class TestSimInit:
    def test_protocol_start(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        assert state.peg.site == 1
        assert state.peg.held_by is None
        assert np.allclose(state.peg.p, cfg.site(1))
        assert state.phase is TaskPhase.R_APPROACH_1
        assert state.clock == 0.0

    def test_deterministic(self):
        cfg = SimConfig()
        a, b = sim_init(cfg, seed=3), sim_init(cfg, seed=3)
        for arm in ("left", "right"):
            assert np.array_equal(a.tools[arm].p, b.tools[arm].p)
        assert np.array_equal(a.peg.p, b.peg.p)

    def test_coincident_sites(self):
        sites = np.zeros((3, 3))
        with pytest.raises(ConfigError):
            SimConfig(sites=sites)

    def test_site_triangle_default(self):
        cfg = SimConfig()
        d01 = np.linalg.norm(cfg.site(1) - cfg.site(2))
        d12 = np.linalg.norm(cfg.site(2) - cfg.site(3))
        d20 = np.linalg.norm(cfg.site(3) - cfg.site(1))
        assert d01 == pytest.approx(0.06)
        assert d12 == pytest.approx(0.06)
        assert d20 == pytest.approx(0.06)


class TestSimStep:
    def test_noop(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        p_before = {k: v.p.copy() for k, v in state.tools.items()}
        state, events = sim_step(state, zero_cmd(), zero_cmd(), cfg)
        for arm in ("left", "right"):
            assert np.array_equal(state.tools[arm].p, p_before[arm])
        assert state.clock == pytest.approx(cfg.dt)
        assert events == []

    def test_attach_on_close(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        state.tools["right"].p = cfg.site(1) + np.array([0.002, 0, 0])
        state.phase = TaskPhase.R_GRASP
        state, events = sim_step(state, zero_cmd(), zero_cmd(grip=True), cfg)
        assert state.peg.held_by == "right"
        assert state.peg.site is None
        assert ("grasped", 0.0) in events

    def test_place_advances_phase(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        state.phase = TaskPhase.L_PLACE_2
        state.tools["left"].p = cfg.site(2) + np.array([0.001, 0, 0])
        state.tools["left"].grip = True
        state.peg = PegState(p=state.tools["left"].p.copy(), held_by="left")
        state, events = sim_step(state, zero_cmd(grip=False), zero_cmd(), cfg)
        assert state.peg.site == 2
        assert state.peg.held_by is None
        assert state.phase is TaskPhase.L_GRASP_2

    def test_held_peg_tracks_tool(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        state.tools["right"].p = cfg.site(1).copy()
        state.tools["right"].grip = True
        state.peg.held_by = "right"
        state.peg.site = None
        cmd = Command(dp=np.array([0.0004, 0, 0]), orientation=quat_identity(),
                      grip=True)
        state, _ = sim_step(state, zero_cmd(), cmd, cfg)
        assert np.array_equal(state.peg.p, state.tools["right"].p)

    def test_done_absorbing(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        state.phase = TaskPhase.DONE
        state, _ = sim_step(state, zero_cmd(), zero_cmd(), cfg)
        assert state.phase is TaskPhase.DONE


class TestTaskContext:
    def test_handoff_close_tips(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        state.phase = TaskPhase.HANDOFF
        state.tools["right"].p = cfg.handoff_point.copy()
        state.tools["left"].p = cfg.handoff_point + np.array([0.001, 0, 0])
        assert task_context(state, cfg) == 1

    def test_transit_far(self):
        cfg = SimConfig()
        state = sim_init(cfg)  # tools at home, 100 mm scale from peg
        assert task_context(state, cfg) == 0

    def test_place_at_target(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        state.phase = TaskPhase.L_PLACE_2
        state.tools["left"].p = cfg.site(2).copy()
        assert task_context(state, cfg) == 2

    def test_grasp_boundary(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        state.phase = TaskPhase.R_GRASP
        state.tools["right"].p = state.peg.p + np.array(
            [3 * cfg.grasp_radius, 0, 0])
        assert task_context(state, cfg) == 2
        state.tools["right"].p = state.peg.p + np.array(
            [3 * cfg.grasp_radius + 1e-6, 0, 0])
        assert task_context(state, cfg) == 0

    def test_totality(self):
        cfg = SimConfig()
        rng = np.random.default_rng(0)
        for _ in range(50):
            state = sim_init(cfg)
            state.phase = TaskPhase(int(rng.integers(0, 13)))
            for arm in ("left", "right"):
                state.tools[arm].p = rng.uniform(-0.08, 0.08, 3)
            assert task_context(state, cfg) in (0, 1, 2)


class TestRender:
    def test_deterministic(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        a = render_observation(state, cfg)
        b = render_observation(state, cfg)
        assert np.array_equal(a, b)

    def test_range_and_background(self):
        cfg = SimConfig()
        img = render_observation(sim_init(cfg), cfg)
        assert img.min() >= 0.0 and img.max() <= 1.0
        # a corner pixel is plain background
        assert img[0, 0] == 0.0

    def test_peg_moves_local_change(self):
        cfg = SimConfig()
        s1 = sim_init(cfg)
        s2 = sim_init(cfg)
        s2.peg = PegState(p=cfg.site(2).copy(), held_by=None, site=2)
        d = np.abs(render_observation(s1, cfg) - render_observation(s2, cfg))
        changed = np.argwhere(d > 1e-12)
        # changes confined to the two peg disc regions
        from pegshare.simulator import world_to_pixel
        px1 = world_to_pixel(cfg, cfg.site(1))
        px2 = world_to_pixel(cfg, cfg.site(2))
        r_px = (0.004 + 0.002) / (2 * cfg.view_half_width) * cfg.image_size
        for row, col in changed:
            d1 = np.hypot(col - px1[0], row - px1[1])
            d2 = np.hypot(col - px2[0], row - px2[1])
            assert min(d1, d2) <= r_px + 1.5

    def test_shapes(self):
        cfg = SimConfig(image_size=32)
        img = render_observation(sim_init(cfg), cfg)
        assert img.shape == (32, 32)


class TestScriptedHuman:
    def test_zero_error_zero_command(self):
        cfg = SimConfig()
        agent = HumanAgentConfig(noise=0.0, reaction_delay=0)
        human = ScriptedHuman(agent, cfg, BlendConfig())
        state = sim_init(cfg)
        state.tools["right"].p = state.peg.p.copy()   # at the subtarget
        state.tools["left"].p = cfg.home_left.copy()
        cmd_l, cmd_r, engaged, _ = human.step(state, alpha=1.0, dt=cfg.dt)
        assert np.allclose(cmd_r.dp, 0.0)
        assert np.allclose(cmd_l.dp, 0.0)
        assert engaged

    def test_unbounded_workspace_no_clutch(self):
        cfg = SimConfig()
        agent = HumanAgentConfig(workspace_half_width=np.inf)
        log = run_episode("manual", {}, cfg, agent, BlendConfig(), seed=0)
        assert log.success
        assert not any(e[0] == "clutch" for e in log.events)

    def test_small_workspace_forces_clutch(self):
        # 200 mm traverse at tau = 0.5 -> 400 mm master travel > 2w
        cfg = SimConfig(home_right=np.array([0.17, -0.0173, 0.0]))
        agent = HumanAgentConfig(workspace_half_width=0.02)
        log = run_episode("manual", {}, cfg, agent, BlendConfig(), seed=0,
                          timeout=60.0)
        assert sum(1 for e in log.events if e[0] == "clutch") >= 1


class TestRunEpisode:
    def test_manual_success(self):
        log = run_episode("manual", {}, SimConfig(), HumanAgentConfig(),
                          BlendConfig(), seed=0)
        assert log.success
        phases = [TaskPhase[r.phase].value for r in log.steps]
        assert all(b >= a for a, b in zip(phases, phases[1:]))

    def test_peg_conservation(self):
        log = run_episode("manual", {}, SimConfig(), HumanAgentConfig(),
                          BlendConfig(), seed=1)
        for rec in log.steps:
            seated = rec.peg_site is not None
            held = rec.peg_held_by is not None
            assert not (seated and held)

    def test_deterministic(self):
        a = run_episode("manual", {}, SimConfig(), HumanAgentConfig(),
                        BlendConfig(), seed=2)
        b = run_episode("manual", {}, SimConfig(), HumanAgentConfig(),
                        BlendConfig(), seed=2)
        assert len(a.steps) == len(b.steps)
        for ra, rb in zip(a.steps, b.steps):
            assert np.array_equal(ra.tool_p["left"], rb.tool_p["left"])
            assert np.array_equal(ra.tool_p["right"], rb.tool_p["right"])
            assert ra.alpha == rb.alpha

    def test_autonomous_transit_alpha_zero(self):
        log = run_episode("autonomous", {"references": PhaseReferences()},
                          SimConfig(), HumanAgentConfig(), BlendConfig(), seed=0)
        assert log.success
        transit_names = {"R_APPROACH_1", "R_TO_HANDOFF", "L_TO_2", "L_TO_3",
                         "R_TO_1"}
        for rec in log.steps:
            if rec.phase in transit_names:
                assert rec.alpha == 0.0
            else:
                assert rec.alpha == 1.0

    def test_shared_alpha_replay(self):
        models = {"classifier": small_clf(), "references": PhaseReferences()}
        log = run_episode("shared", models, SimConfig(), HumanAgentConfig(),
                          BlendConfig(), seed=0)
        role = RoleState()
        for rec in log.steps:
            alpha, role = compute_alpha(rec.probs, role, 0.5)
            assert rec.alpha == alpha

    def test_shared_requires_classifier(self):
        with pytest.raises(ConfigError):
            run_episode("shared", {"references": PhaseReferences()},
                        SimConfig(), HumanAgentConfig(), BlendConfig())

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            run_episode("teleop", {}, SimConfig(), HumanAgentConfig(),
                        BlendConfig())

    def test_timeout_marks_failure(self):
        log = run_episode("manual", {}, SimConfig(), HumanAgentConfig(),
                          BlendConfig(), seed=0, timeout=0.5)
        assert not log.success
        assert log.steps[-1].clock < 0.5 + 1e-9


def _stationary_log(n=1000, dt=0.01):
    steps = []
    for i in range(n):
        steps.append(StepRecord(
            clock=i * dt,
            master_p={"left": np.zeros(3), "right": np.zeros(3)},
            engaged=True,
            dp_human={"left": np.zeros(3), "right": np.zeros(3)},
            dp_robot={"left": np.zeros(3), "right": np.zeros(3)},
            alpha=1.0, probs=None, context=0, mode="manual",
            tool_p={"left": np.zeros(3), "right": np.zeros(3)},
            tool_grip={"left": False, "right": False},
            peg_p=np.zeros(3), peg_held_by=None, peg_site=1,
            phase="R_APPROACH_1"))
    return EpisodeLog(steps=steps, events=[], seed=0, mode="manual",
                      success=False, cfg_dt=dt, tau=0.5)


class TestMetrics:
    def test_stationary(self):
        m = compute_metrics(_stationary_log(n=1000, dt=0.01))
        assert m.M == 0.0
        assert m.C == 0
        assert m.A == 0.0
        assert m.T == pytest.approx(10.0)

    def test_master_path_hand_sum(self):
        log = _stationary_log(n=100)
        for rec in log.steps:
            rec.dp_human["left"] = np.array([0.001, 0.0, 0.0])
        m = compute_metrics(log)
        assert m.M == pytest.approx(0.1)

    def test_one_clutch_cycle(self):
        log = _stationary_log(n=100)
        for rec in log.steps[40:60]:
            rec.engaged = False
        m = compute_metrics(log)
        assert m.C == 1

    def test_empty_log(self):
        log = _stationary_log(n=1)
        log.steps = []
        with pytest.raises(InsufficientDataError):
            compute_metrics(log)


class TestDemos:
    def test_deterministic_and_all_contexts(self):
        cfg = SimConfig()
        a = generate_demo_logs(2, cfg, HumanAgentConfig(), BlendConfig(), seed=5)
        b = generate_demo_logs(2, cfg, HumanAgentConfig(), BlendConfig(), seed=5)
        assert all(x.success for x in a)
        for la, lb in zip(a, b):
            assert len(la.steps) == len(lb.steps)
            assert np.array_equal(la.steps[-1].tool_p["left"],
                                  lb.steps[-1].tool_p["left"])
        _, labels = labeled_frames_from_log(a[0], cfg, stride=1)
        assert set(np.unique(labels)) == {0, 1, 2}

    def test_n_validation(self):
        with pytest.raises(ConfigError):
            generate_demo_logs(0, SimConfig(), HumanAgentConfig(), BlendConfig())


class TestPhaseReferences:
    def test_straight_line_fallback(self):
        cfg = SimConfig()
        state = sim_init(cfg)
        refs = PhaseReferences(points=50)
        ref = refs.reference_for(state, cfg)
        arm, target = phase_goal(state, cfg)
        assert arm == "right"
        assert np.allclose(ref[0], cfg.home_right)
        assert np.allclose(ref[-1], target)
        assert ref.shape == (50, 3)
