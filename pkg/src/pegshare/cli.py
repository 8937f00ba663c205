"""Pipeline command-line entry point.

Subcommands cover the full workflow: config generation, demonstration
collection, registration, desired-trajectory fitting, movement-primitive
fitting, classifier training and fine-tuning, episode execution, metrics,
paired statistics, and the live session server.

Exit codes: 0 success, 1 usage error, 2 data/model error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .cnn import (Classifier, ClassifierArch, finetune as cnn_finetune,
                  evaluate, load_classifier, save_classifier,
                  train as cnn_train)
from .errors import PegshareError
from .gpr import fit_desired_trajectory
from .registration import register_demos
from .simulator import (PhaseReferences, compute_metrics, fit_phase_dmps,
                        generate_demo_logs, labeled_frames_from_log,
                        log_to_trajectories, perturbed_style, run_episode)
from .stats import stats_compare


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pegshare",
        description="Context-aware shared-control peg-transfer pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write a full-default config file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("demo-gen", help="generate scripted demonstrations")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, default=36)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--frame-style", choices=["desk", "transfer"],
                   default="desk")
    p.add_argument("--frame-stride", type=int, default=5)

    p = sub.add_parser("register", help="align demonstrations per arm")
    p.add_argument("--config", required=True)
    p.add_argument("--demos", required=True, help="directory of demo .jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--max-samples", type=int, default=150,
                   help="downsample demos before alignment")

    p = sub.add_parser("gpr-fit", help="fit the desired mean trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--registered", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-n", type=int, default=None)

    p = sub.add_parser("dmp-fit", help="fit per-phase movement primitives")
    p.add_argument("--config", required=True)
    p.add_argument("--logs", required=True, help="directory of episode logs")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the context classifier")
    p.add_argument("--config", required=True)
    p.add_argument("--frames", required=True, nargs="+")
    p.add_argument("--out", required=True)

    p = sub.add_parser("finetune", help="transfer-adapt the classifier")
    p.add_argument("--config", required=True)
    p.add_argument("--frames", required=True, nargs="+")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--freeze", type=int, default=2)

    p = sub.add_parser("episode", help="run one scripted episode")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["manual", "auto", "autonomous",
                                      "shared"], required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier")
    p.add_argument("--dmps")

    p = sub.add_parser("metrics", help="metrics from episode logs")
    p.add_argument("--logs", required=True, nargs="+")
    p.add_argument("--out")

    p = sub.add_parser("compare", help="paired statistics on metric files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out")

    p = sub.add_parser("serve", help="run the live session bridge")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["manual", "auto", "autonomous",
                                      "shared"], default="shared")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--classifier")
    p.add_argument("--dmps")
    return parser


def _norm_mode(mode: str) -> str:
    return "autonomous" if mode == "auto" else mode


def _load_models(args, cfg):
    models = {}
    if getattr(args, "classifier", None):
        models["classifier"] = load_classifier(args.classifier)
    dmps = fileio.load_dmps(args.dmps) if getattr(args, "dmps", None) else None
    mode = _norm_mode(args.mode)
    if mode in ("autonomous", "shared"):
        models["references"] = PhaseReferences(dmp_models=dmps)
    return models


def _cmd_init_config(args) -> int:
    fileio.save_config(fileio.PipelineConfig(), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_demo_gen(args) -> int:
    cfg = fileio.load_config(args.config)
    seed = cfg.seeds["demo"] if args.seed is None else args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logs = generate_demo_logs(args.n, cfg.sim, cfg.agent, cfg.blend, seed=seed)
    style = perturbed_style() if args.frame_style == "transfer" else None
    for i, log in enumerate(logs):
        fileio.save_demo(log_to_trajectories(log), out / f"demo_{i:03d}.jsonl")
        fileio.save_log(log, out / f"log_{i:03d}.json")
        images, labels = labeled_frames_from_log(log, cfg.sim, style,
                                                 stride=args.frame_stride)
        fileio.save_frames(images, labels, out / f"frames_{i:03d}.bin")
    print(f"wrote {len(logs)} demos to {out}")
    return 0


def _downsample(traj, max_samples):
    if len(traj) <= max_samples:
        return traj
    keep = np.linspace(0, len(traj) - 1, max_samples).round().astype(int)
    from .trajectory import Trajectory
    return Trajectory(t=traj.t[keep], p=traj.p[keep], q=traj.q[keep],
                      grip=traj.grip[keep], arm=traj.arm)


def _cmd_register(args) -> int:
    cfg = fileio.load_config(args.config)
    del cfg
    paths = sorted(Path(args.demos).glob("demo_*.jsonl"))
    if not paths:
        raise PegshareError(f"no demo files in {args.demos}")
    demos = [fileio.load_demo(p) for p in paths]
    sets = {arm: register_demos([_downsample(d[arm], args.max_samples)
                                 for d in demos])
            for arm in ("left", "right")}
    fileio.save_registered(sets, args.out)
    print(f"registered {len(demos)} demos per arm -> {args.out}")
    return 0


def _cmd_gpr_fit(args) -> int:
    cfg = fileio.load_config(args.config)
    grid_n = args.grid_n if args.grid_n else cfg.dmp.get("grid_n", 60)
    sets = fileio.load_registered(args.registered)
    desired = fit_desired_trajectory(sets, grid_n)
    fileio.save_desired(desired, args.out)
    print(f"fit desired trajectory on a {grid_n}-point grid -> {args.out}")
    return 0


def _cmd_dmp_fit(args) -> int:
    cfg = fileio.load_config(args.config)
    paths = sorted(Path(args.logs).glob("log_*.json"))
    if not paths:
        raise PegshareError(f"no episode logs in {args.logs}")
    logs = [fileio.load_log(p) for p in paths]
    models = fit_phase_dmps(logs, n_kernels=cfg.dmp.get("n_kernels", 50),
                            grid_n=cfg.dmp.get("grid_n", 60))
    fileio.save_dmps(models, args.out)
    print(f"fit {len(models)} phase primitives -> {args.out}")
    return 0


def _load_frame_files(paths):
    images, labels = [], []
    for p in paths:
        x, y = fileio.load_frames(p)
        images.append(x)
        labels.append(y)
    return np.concatenate(images), np.concatenate(labels)


def _cmd_train(args) -> int:
    cfg = fileio.load_config(args.config)
    images, labels = _load_frame_files(args.frames)
    arch = ClassifierArch(input_size=images.shape[1])
    clf = Classifier(arch, seed=cfg.train.seed)
    out = cnn_train(clf, images, labels, cfg.train)
    save_classifier(out["clf"], args.out)
    loss, acc = evaluate(out["clf"], images, labels)
    print(f"trained on {len(images)} frames, "
          f"full-set accuracy {acc:.3f} -> {args.out}")
    return 0


def _cmd_finetune(args) -> int:
    cfg = fileio.load_config(args.config)
    images, labels = _load_frame_files(args.frames)
    clf = load_classifier(args.model)
    out = cnn_finetune(clf, images, labels, freeze=args.freeze, cfg=cfg.train)
    save_classifier(out["clf"], args.out)
    loss, acc = evaluate(out["clf"], images, labels)
    print(f"fine-tuned with {args.freeze} frozen layers, "
          f"full-set accuracy {acc:.3f} -> {args.out}")
    return 0


def _cmd_episode(args) -> int:
    cfg = fileio.load_config(args.config)
    mode = _norm_mode(args.mode)
    seed = cfg.seeds["episode"] if args.seed is None else args.seed
    models = _load_models(args, cfg)
    log = run_episode(mode, models, cfg.sim, cfg.agent, cfg.blend, seed=seed)
    fileio.save_log(log, args.out)
    m = compute_metrics(log)
    print(json.dumps({"success": log.success,
                      **fileio.metrics_to_dict(m)}, sort_keys=True))
    return 0


def _cmd_metrics(args) -> int:
    samples = {"M": [], "T": [], "A": [], "C": []}
    for p in args.logs:
        m = compute_metrics(fileio.load_log(p))
        for key, value in fileio.metrics_to_dict(m).items():
            samples[key].append(value)
    print(json.dumps({"n": len(args.logs), "samples": samples},
                     sort_keys=True))
    if args.out:
        fileio.save_metric_samples(samples, args.out)
    return 0


def _cmd_compare(args) -> int:
    a = fileio.load_metric_samples(args.a)
    b = fileio.load_metric_samples(args.b)
    report = {}
    for key in sorted(set(a) & set(b)):
        report[key] = stats_compare(a[key], b[key])
    print(json.dumps(report, sort_keys=True, indent=2))
    if args.out:
        Path(args.out).write_text(
            json.dumps(report, sort_keys=True, indent=2) + "\n")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import build_app

    cfg = fileio.load_config(args.config)
    mode = _norm_mode(args.mode)
    classifier = load_classifier(args.classifier) if args.classifier else None
    dmps = fileio.load_dmps(args.dmps) if args.dmps else None
    references = (PhaseReferences(dmp_models=dmps)
                  if mode in ("autonomous", "shared") else None)
    app = build_app(cfg, mode=mode, classifier=classifier,
                    references=references)
    uvicorn.run(app, host="127.0.0.1", port=args.port)
    return 0


_COMMANDS = {
    "init-config": _cmd_init_config,
    "demo-gen": _cmd_demo_gen,
    "register": _cmd_register,
    "gpr-fit": _cmd_gpr_fit,
    "dmp-fit": _cmd_dmp_fit,
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "episode": _cmd_episode,
    "metrics": _cmd_metrics,
    "compare": _cmd_compare,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; --help exits 0
        return 0 if exc.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except PegshareError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
