"""Live session bridge: one interactive episode per socket connection.

The server owns the simulation; clients stream Input messages (master-side
increments, clutch, grip) and receive a State message every tick. All
messages are JSON objects with a strictly increasing per-direction
sequence number. The first server message is a handshake carrying the tick
rate and mode.
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .cnn import forward as cnn_forward
from .fileio import metrics_to_dict, save_log
from .shared_control import (Command, RoleState, compose_command,
                             compute_alpha, mode_of, robot_increment)
from .simulator import (TRANSIT_PHASES, EpisodeLog, StepRecord, TaskPhase,
                        compute_metrics, phase_goal, render_observation,
                        sim_init, sim_step, task_context)
from .trajectory import quat_identity

PROTOCOL_VERSION = 1


class Session:
    """State machine for one connected client."""

    def __init__(self, cfg, mode, classifier, references, tick_rate):
        self.cfg = cfg
        self.mode = mode
        self.classifier = classifier
        self.references = references
        self.tick_rate = tick_rate
        self.seq = 0               # server -> client
        self.last_client_seq = -1
        self.running = False
        self.dropped = 0
        self.reset()

    def reset(self):
        self.state = sim_init(self.cfg.sim)
        self.role = RoleState()
        self.steps = []
        self.events = []
        self.current_phase = self.state.phase
        self.progress = 0
        self.reference = (self.references.reference_for(self.state, self.cfg.sim)
                          if self.references else None)
        self.latest_dp = {"left": np.zeros(3), "right": np.zeros(3)}
        self.grip_edges = []       # queued grip dicts, one applied per tick
        self.grip = {"left": False, "right": False}
        self.clutch = False
        self.master_p = {"left": np.zeros(3), "right": np.zeros(3)}
        self.was_engaged = True

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def apply_input(self, msg):
        for arm in ("left", "right"):
            dp = msg.get("dp", {}).get(arm)
            if dp is not None:
                self.latest_dp[arm] = np.asarray(dp, dtype=float)  # latest wins
        if "grip" in msg:
            grip = {arm: bool(msg["grip"].get(arm, self.grip[arm]))
                    for arm in ("left", "right")}
            if grip != (self.grip_edges[-1] if self.grip_edges else self.grip):
                self.grip_edges.append(grip)   # edges are never coalesced
        if "clutch" in msg:
            self.clutch = bool(msg["clutch"])

    def tick(self):
        cfg, state = self.cfg, self.state
        if state.phase is not self.current_phase:
            self.current_phase = state.phase
            if self.references is not None:
                self.reference = self.references.reference_for(state, cfg.sim)
                self.progress = 0

        context = task_context(state, cfg.sim)
        probs = None
        if self.mode == "manual":
            alpha = 1.0
        elif self.mode == "autonomous":
            alpha = 0.0 if state.phase in TRANSIT_PHASES else 1.0
        else:
            img = render_observation(state, cfg.sim)
            probs = cnn_forward(self.classifier, img).p
            alpha, self.role = compute_alpha(probs, self.role, cfg.blend.lam)

        engaged = not self.clutch
        if self.grip_edges:
            self.grip = self.grip_edges.pop(0)
        dp_human = {arm: (np.zeros(3) if not engaged else self.latest_dp[arm])
                    for arm in ("left", "right")}
        self.latest_dp = {"left": np.zeros(3), "right": np.zeros(3)}
        for arm in ("left", "right"):
            self.master_p[arm] = self.master_p[arm] + dp_human[arm]

        dp_robot = {"left": np.zeros(3), "right": np.zeros(3)}
        if self.reference is not None and alpha < 1.0:
            active, _ = phase_goal(state, cfg.sim)
            dp, self.progress = robot_increment(
                self.reference, state.tools[active].p, self.progress,
                cfg.blend, cfg.sim.dt)
            dp_robot[active] = dp

        composed = {}
        for arm in ("left", "right"):
            human = Command(dp=dp_human[arm], orientation=quat_identity(),
                            grip=self.grip[arm])
            composed[arm] = compose_command(human, dp_robot[arm], alpha,
                                            cfg.blend, cfg.sim.dt)

        self.steps.append(StepRecord(
            clock=state.clock,
            master_p={k: v.copy() for k, v in self.master_p.items()},
            engaged=engaged,
            dp_human={k: v.copy() for k, v in dp_human.items()},
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
        self.state, ev = sim_step(state, composed["left"], composed["right"],
                                  cfg.sim)
        self.events.extend(ev)
        return alpha, probs, context, engaged

    def to_log(self) -> EpisodeLog:
        return EpisodeLog(steps=self.steps, events=self.events, seed=0,
                          mode=self.mode,
                          success=self.state.phase is TaskPhase.DONE,
                          cfg_dt=self.cfg.sim.dt, tau=self.cfg.blend.tau)

    def state_message(self, alpha, probs, context, engaged) -> dict:
        state = self.state
        metrics = (metrics_to_dict(compute_metrics(self.to_log()))
                   if self.steps else {"M": 0.0, "T": 0.0, "A": 0.0, "C": 0})
        return {
            "type": "state",
            "seq": self.next_seq(),
            "clock": state.clock,
            "running": self.running,
            "tools": {arm: {"p": t.p.tolist(), "q": t.q.tolist(),
                            "grip": t.grip}
                      for arm, t in state.tools.items()},
            "peg": {"p": state.peg.p.tolist(),
                    "held_by": state.peg.held_by, "site": state.peg.site},
            "alpha": alpha,
            "probs": None if probs is None else list(map(float, probs)),
            "context": context,
            "engaged": engaged,
            "mode": mode_of(alpha).value if alpha is not None else self.mode,
            "phase": state.phase.name,
            "success": state.phase is TaskPhase.DONE,
            "metrics": metrics,
        }


def build_app(cfg, mode: str = "shared", classifier=None, references=None,
              results_dir=None, tick_rate: float = 50.0) -> FastAPI:
    if mode == "shared" and classifier is None:
        raise ValueError("shared mode requires a classifier")
    if mode in ("shared", "autonomous") and references is None:
        raise ValueError(f"{mode} mode requires phase references")
    app = FastAPI()

    @app.websocket("/session")
    async def session_endpoint(ws: WebSocket):
        await ws.accept()
        session = Session(cfg, mode, classifier, references, tick_rate)
        await ws.send_text(json.dumps({
            "type": "hello", "seq": 0, "protocol": PROTOCOL_VERSION,
            "tick_rate": tick_rate, "dt": cfg.sim.dt, "mode": mode,
        }, sort_keys=True))

        async def send(payload):
            await ws.send_text(json.dumps(payload, sort_keys=True))

        async def error(message):
            await send({"type": "error", "seq": session.next_seq(),
                        "message": message})

        async def handle(raw):
            try:
                msg = json.loads(raw)
                kind = msg["type"]
            except (json.JSONDecodeError, TypeError, KeyError):
                await error("malformed message")
                return
            seq = msg.get("seq")
            if not isinstance(seq, int) or seq <= session.last_client_seq:
                session.dropped += 1
                await error("stale or missing sequence number")
                return
            session.last_client_seq = seq
            if kind == "input":
                if not session.running:
                    await error("session not running")
                    return
                session.apply_input(msg)
            elif kind == "control":
                action = msg.get("action")
                if action == "start":
                    session.running = True
                elif action == "pause":
                    session.running = False
                elif action == "reset":
                    session.reset()
                    session.running = False
                elif action == "mode":
                    new_mode = msg.get("mode")
                    if new_mode == "shared" and session.classifier is None:
                        await error("no classifier loaded")
                        return
                    if new_mode in ("manual", "autonomous", "shared"):
                        session.mode = new_mode
                    else:
                        await error("unknown mode")
                        return
                else:
                    await error("unknown control action")
                    return
                await send({"type": "ack", "seq": session.next_seq(),
                            "of": seq})
            else:
                await error(f"unknown message type: {kind}")

        recv_task = asyncio.create_task(ws.receive_text())
        done_sent = False
        try:
            while True:
                timeout = 1.0 / tick_rate
                finished, _ = await asyncio.wait({recv_task}, timeout=timeout)
                if finished:
                    raw = recv_task.result()
                    await handle(raw)
                    recv_task = asyncio.create_task(ws.receive_text())
                    continue
                if session.running:
                    alpha, probs, context, engaged = session.tick()
                    await send(session.state_message(alpha, probs, context,
                                                     engaged))
                    if (session.state.phase is TaskPhase.DONE
                            and not done_sent):
                        done_sent = True
                        session.running = False
                        log = session.to_log()
                        if results_dir is not None:
                            path = Path(results_dir)
                            path.mkdir(parents=True, exist_ok=True)
                            save_log(log, path / "session_log.json")
                        await send({
                            "type": "done", "seq": session.next_seq(),
                            "success": log.success,
                            "metrics": metrics_to_dict(compute_metrics(log)),
                        })
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            recv_task.cancel()

    return app
