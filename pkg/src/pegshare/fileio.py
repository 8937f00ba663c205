"""On-disk formats: pipeline config, demo records, models, frames, logs.

All formats are deterministic (sorted keys, explicit seeds) so equal
inputs yield byte-identical files. Small numeric blocks are stored as
exact JSON floats; large blocks (image frames, classifier parameters,
primitive weights) as base64 little-endian float32.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cnn import TrainConfig
from .dmp import DmpModel, DmpParams
from .errors import ConfigError, InsufficientDataError
from .gpr import ArmDesired, DesiredTrajectory
from .registration import RegisteredDemoSet, RigidTransform
from .shared_control import BlendConfig
from .simulator import (EpisodeLog, HumanAgentConfig, SimConfig, StepRecord,
                        Metrics)
from .trajectory import Trajectory, quat_identity


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _b64_f32(arr) -> str:
    return base64.b64encode(
        np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def _unb64_f32(s, shape):
    return np.frombuffer(base64.b64decode(s), dtype="<f4").reshape(
        shape).astype(float)


# ---------------------------------------------------------------------------
# pipeline configuration


@dataclass
class PipelineConfig:
    paths: dict = field(default_factory=lambda: {
        "data_dir": "data", "model_dir": "models", "results_dir": "results"})
    sim: SimConfig = field(default_factory=SimConfig)
    agent: HumanAgentConfig = field(default_factory=HumanAgentConfig)
    blend: BlendConfig = field(default_factory=BlendConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dmp: dict = field(default_factory=lambda: {"n_kernels": 50, "grid_n": 60})
    seeds: dict = field(default_factory=lambda: {
        "demo": 0, "train": 0, "episode": 0})


def config_to_dict(cfg: PipelineConfig) -> dict:
    sim = cfg.sim
    return {
        "paths": dict(cfg.paths),
        "sim": {
            "sites": sim.sites.tolist(),
            "grasp_radius": sim.grasp_radius,
            "place_radius": sim.place_radius,
            "dt": sim.dt,
            "v_max": sim.v_max,
            "image_size": sim.image_size,
            "view_half_width": sim.view_half_width,
            "handoff_point": sim.handoff_point.tolist(),
            "handoff_radius": sim.handoff_radius,
            "home_left": sim.home_left.tolist(),
            "home_right": sim.home_right.tolist(),
        },
        "agent": {
            "gain": cfg.agent.gain,
            "noise": cfg.agent.noise,
            "reaction_delay": cfg.agent.reaction_delay,
            "workspace_half_width": cfg.agent.workspace_half_width,
            "clutch_time": cfg.agent.clutch_time,
            "seed": cfg.agent.seed,
        },
        "blend": {"tau": cfg.blend.tau, "lam": cfg.blend.lam,
                  "v_max": cfg.blend.v_max},
        "train": {
            "lr": cfg.train.lr, "batch": cfg.train.batch,
            "max_epochs": cfg.train.max_epochs,
            "patience": cfg.train.patience, "split": cfg.train.split,
            "seed": cfg.train.seed,
        },
        "dmp": dict(cfg.dmp),
        "seeds": dict(cfg.seeds),
    }


def config_from_dict(d: dict) -> PipelineConfig:
    try:
        sim_d = dict(d.get("sim", {}))
        for key in ("sites", "handoff_point", "home_left", "home_right"):
            if key in sim_d:
                sim_d[key] = np.asarray(sim_d[key], dtype=float)
        return PipelineConfig(
            paths=dict(d.get("paths", PipelineConfig().paths)),
            sim=SimConfig(**sim_d),
            agent=HumanAgentConfig(**d.get("agent", {})),
            blend=BlendConfig(**d.get("blend", {})),
            train=TrainConfig(**d.get("train", {})),
            dmp=dict(d.get("dmp", {"n_kernels": 50, "grid_n": 60})),
            seeds=dict(d.get("seeds", PipelineConfig().seeds)),
        )
    except TypeError as exc:
        raise ConfigError(f"unknown config field: {exc}") from exc


def save_config(cfg: PipelineConfig, path):
    Path(path).write_text(_dumps(config_to_dict(cfg)))


def load_config(path) -> PipelineConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# demonstration records: one JSON object per line


def save_demo(trajs: dict, path):
    """trajs: {"left": Trajectory, "right": Trajectory} on a shared clock."""
    left, right = trajs["left"], trajs["right"]
    if len(left) != len(right) or not np.array_equal(left.t, right.t):
        raise ConfigError("demo arms must share timestamps")
    lines = []
    for i in range(len(left)):
        rec = {"t": float(left.t[i])}
        for arm, traj in (("left", left), ("right", right)):
            rec[arm] = {"p": traj.p[i].tolist(), "q": traj.q[i].tolist(),
                        "grip": bool(traj.grip[i])}
        lines.append(json.dumps(rec, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def load_demo(path) -> dict:
    recs = [json.loads(line) for line in
            Path(path).read_text().splitlines() if line.strip()]
    if len(recs) < 2:
        raise InsufficientDataError("demo needs at least 2 records")
    t = np.array([r["t"] for r in recs])
    out = {}
    for arm in ("left", "right"):
        p = np.array([r[arm]["p"] for r in recs])
        q = np.array([r[arm]["q"] for r in recs])
        grip = np.array([r[arm]["grip"] for r in recs], dtype=bool)
        out[arm] = Trajectory(t=t.copy(), p=p, q=q, grip=grip, arm=arm)
    return out


# ---------------------------------------------------------------------------
# registered demo sets and the desired (GP mean) trajectory


def save_registered(sets: dict, path):
    """sets: arm name -> RegisteredDemoSet."""
    doc = {"type": "registered", "version": 1, "arms": {}}
    for arm, dset in sets.items():
        doc["arms"][arm] = {
            "reference_index": dset.reference_index,
            "t": dset.demos[0].t.tolist(),
            "demos": [d.p.tolist() for d in dset.demos],
            "transforms": [{"R": tr.R.tolist(), "t": tr.t.tolist()}
                           for tr in dset.transforms],
            "warp_costs": list(map(float, dset.warp_costs)),
        }
    Path(path).write_text(_dumps(doc))


def load_registered(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("type") != "registered":
        raise ConfigError("not a registered-demos file")
    out = {}
    for arm, d in doc["arms"].items():
        t = np.asarray(d["t"], dtype=float)
        demos = []
        for p in d["demos"]:
            p = np.asarray(p, dtype=float)
            demos.append(Trajectory(
                t=t.copy(), p=p, q=np.tile(quat_identity(), (len(t), 1)),
                grip=np.zeros(len(t), dtype=bool), arm=arm))
        transforms = [RigidTransform(R=np.asarray(tr["R"], dtype=float),
                                     t=np.asarray(tr["t"], dtype=float))
                      for tr in d["transforms"]]
        out[arm] = RegisteredDemoSet(reference_index=d["reference_index"],
                                     demos=demos, transforms=transforms,
                                     warp_costs=list(d["warp_costs"]))
    return out


def save_desired(desired: DesiredTrajectory, path):
    doc = {"type": "desired", "version": 1,
           "grid": desired.grid.tolist(),
           "arms": {arm: {"mean": a.mean.tolist(),
                          "variance": a.variance.tolist()}
                    for arm, a in desired.arms.items()}}
    Path(path).write_text(_dumps(doc))


def load_desired(path) -> DesiredTrajectory:
    doc = json.loads(Path(path).read_text())
    if doc.get("type") != "desired":
        raise ConfigError("not a desired-trajectory file")
    arms = {arm: ArmDesired(mean=np.asarray(a["mean"], dtype=float),
                            variance=np.asarray(a["variance"], dtype=float))
            for arm, a in doc["arms"].items()}
    return DesiredTrajectory(grid=np.asarray(doc["grid"], dtype=float),
                             arms=arms)


# ---------------------------------------------------------------------------
# per-phase movement primitive sets


def save_dmps(models: dict, path):
    """models: phase name -> DmpModel."""
    doc = {"type": "dmp-set", "version": 1, "phases": {}}
    for name, m in models.items():
        doc["phases"][name] = {
            "alpha_z": m.params.alpha_z, "beta_z": m.params.beta_z,
            "alpha_x": m.params.alpha_x, "duration": m.params.duration,
            "n_kernels": m.params.n_kernels,
            "x0": m.x0.tolist(), "goal": m.goal.tolist(),
            "degenerate": m.degenerate.tolist(),
            "weights_b64": _b64_f32(m.weights),
            "weights_shape": list(m.weights.shape),
        }
    Path(path).write_text(_dumps(doc))


def load_dmps(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("type") != "dmp-set":
        raise ConfigError("not a movement-primitive file")
    out = {}
    for name, d in doc["phases"].items():
        params = DmpParams(alpha_z=d["alpha_z"], beta_z=d["beta_z"],
                           alpha_x=d["alpha_x"], duration=d["duration"],
                           n_kernels=d["n_kernels"])
        out[name] = DmpModel(
            params=params,
            weights=_unb64_f32(d["weights_b64"], tuple(d["weights_shape"])),
            x0=np.asarray(d["x0"], dtype=float),
            goal=np.asarray(d["goal"], dtype=float),
            degenerate=np.asarray(d["degenerate"], dtype=bool))
    return out


# ---------------------------------------------------------------------------
# labeled frame blocks: JSON header line + raw float32 images + uint8 labels


def save_frames(images, labels, path):
    images = np.ascontiguousarray(images, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if images.ndim != 3 or len(images) != len(labels):
        raise ConfigError("need (n, s, s) images and matching labels")
    header = json.dumps({"type": "frames", "version": 1,
                         "count": int(len(images)),
                         "size": int(images.shape[1])},
                        sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(header.encode() + b"\n")
        fh.write(images.tobytes())
        fh.write(labels.tobytes())


def load_frames(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        if header.get("type") != "frames":
            raise ConfigError("not a frames file")
        n, s = header["count"], header["size"]
        images = np.frombuffer(fh.read(n * s * s * 4),
                               dtype="<f4").reshape(n, s, s).astype(float)
        labels = np.frombuffer(fh.read(n), dtype=np.uint8).astype(int)
    return images, labels


# ---------------------------------------------------------------------------
# episode logs


def _step_to_dict(rec: StepRecord) -> dict:
    return {
        "clock": rec.clock,
        "master_p": {k: v.tolist() for k, v in rec.master_p.items()},
        "engaged": rec.engaged,
        "dp_human": {k: v.tolist() for k, v in rec.dp_human.items()},
        "dp_robot": {k: v.tolist() for k, v in rec.dp_robot.items()},
        "alpha": rec.alpha,
        "probs": None if rec.probs is None else rec.probs.tolist(),
        "context": rec.context,
        "mode": rec.mode,
        "tool_p": {k: v.tolist() for k, v in rec.tool_p.items()},
        "tool_grip": dict(rec.tool_grip),
        "peg_p": rec.peg_p.tolist(),
        "peg_held_by": rec.peg_held_by,
        "peg_site": rec.peg_site,
        "phase": rec.phase,
    }


def _step_from_dict(d: dict) -> StepRecord:
    arr = lambda m: {k: np.asarray(v, dtype=float) for k, v in m.items()}
    return StepRecord(
        clock=d["clock"], master_p=arr(d["master_p"]), engaged=d["engaged"],
        dp_human=arr(d["dp_human"]), dp_robot=arr(d["dp_robot"]),
        alpha=d["alpha"],
        probs=None if d["probs"] is None else np.asarray(d["probs"]),
        context=d["context"], mode=d["mode"], tool_p=arr(d["tool_p"]),
        tool_grip=dict(d["tool_grip"]),
        peg_p=np.asarray(d["peg_p"], dtype=float),
        peg_held_by=d["peg_held_by"], peg_site=d["peg_site"],
        phase=d["phase"])


def log_to_dict(log: EpisodeLog) -> dict:
    return {"type": "episode-log", "version": 1, "seed": log.seed,
            "mode": log.mode, "success": log.success, "cfg_dt": log.cfg_dt,
            "tau": log.tau, "events": [list(e) for e in log.events],
            "steps": [_step_to_dict(r) for r in log.steps]}


def log_from_dict(doc: dict) -> EpisodeLog:
    if doc.get("type") != "episode-log":
        raise ConfigError("not an episode-log file")
    return EpisodeLog(steps=[_step_from_dict(d) for d in doc["steps"]],
                      events=[tuple(e) for e in doc["events"]],
                      seed=doc["seed"], mode=doc["mode"],
                      success=doc["success"], cfg_dt=doc["cfg_dt"],
                      tau=doc["tau"])


def save_log(log: EpisodeLog, path):
    Path(path).write_text(_dumps(log_to_dict(log)))


def load_log(path) -> EpisodeLog:
    return log_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# metric sample files


def save_metric_samples(samples: dict, path):
    """samples: {"M": [...], "T": [...], "A": [...], "C": [...]}."""
    doc = {"type": "metric-samples", "version": 1,
           "samples": {k: list(map(float, v)) for k, v in samples.items()}}
    Path(path).write_text(_dumps(doc))


def load_metric_samples(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("type") != "metric-samples":
        raise ConfigError("not a metric-samples file")
    return {k: np.asarray(v, dtype=float)
            for k, v in doc["samples"].items()}


def metrics_to_dict(m: Metrics) -> dict:
    return {"M": m.M, "T": m.T, "A": m.A, "C": m.C}
