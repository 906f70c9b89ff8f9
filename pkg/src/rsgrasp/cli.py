"""Command-line entry point: calibrate, grasp, evaluate, report.

Set ``RSGRASP_LOG`` (DEBUG, INFO, WARNING, ...) to change log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import zlib
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .calibration import CalibrationError, CalibrationModel, calibrate_finger, write_dataset_csv
from .config import ConfigError, RunParams, Scene, load_params, load_scene
from .harness import (
    ReportError,
    emit_report,
    load_results,
    render_plotdata,
    render_table,
    run_comparison,
    write_atomic,
)
from .mechanics import MechanicsError
from .optimizer import OptimizedGrasp, OptimizerError, Proprioception, interactive_grasp
from .scene import SceneError, perturb_pose
from .sensor import SensorDomainError

log = logging.getLogger("rsgrasp")

METRIC_ROWS = (
    ("fn_rmse", "F_n RMSE"),
    ("fn_r2", "F_n R2"),
    ("tz_rmse", "T_z RMSE"),
    ("tz_r2", "T_z R2"),
    ("success_rate", "T_z sign success rate"),
)
MODEL_FILE = "finger{}.json"
DATASET_FILE = "dataset_finger{}.csv"


class UsageError(Exception):
    pass


def finger_seed(seed: int, finger: int) -> int:
    """Independent calibration stream per finger, derived from the run seed."""
    return int(np.random.SeedSequence([int(seed), int(finger)]).generate_state(1)[0])


def _models_dir(args) -> Path:
    return Path(args.models) if args.models else Path(args.out) / "models"


def _load_models(directory: Path) -> list:
    models = []
    for k in (1, 2, 3):
        path = directory / MODEL_FILE.format(k)
        if not path.is_file():
            raise UsageError(
                f"no calibrated model at {path}; run `rsgrasp calibrate --out {directory.parent}` first "
                "or point --models at a directory holding finger1.json..finger3.json"
            )
        try:
            models.append(CalibrationModel.from_json(path.read_text(encoding="utf-8")))
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read calibrated model {path}: {exc}") from exc
    return models


def _hand(scene: Scene, params: RunParams, models: Optional[list]) -> Proprioception:
    return Proprioception(scene.fingers.build(), models, params.calibration.dead_band,
                          samples=params.scans_per_reading)


def _manifest(args, scene: Scene, params: RunParams, seed: int, **extra) -> str:
    doc = {
        "command": args.command,
        "scene": scene.source,
        "params": params.source,
        "seed": seed,
        "output": str(args.out),
    }
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def metrics_table(models: Sequence[CalibrationModel]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric"] + [f"finger_{k + 1}" for k in range(len(models))])
    for key, label in METRIC_ROWS:
        writer.writerow([label] + [f"{m.metrics[key]:.4f}" for m in models])
    return buf.getvalue()


def cmd_calibrate(args, scene: Scene, params: RunParams, seed: int) -> int:
    fingers = scene.fingers.build()
    files = {}
    models = []
    for k, finger in enumerate(fingers, start=1):
        model, data = calibrate_finger(scene.objects, finger, params.calibration, finger_seed(seed, k))
        log.info("finger %d: F_n R2 %.4f, sign success %.4f", k, model.metrics["fn_r2"], model.metrics["success_rate"])
        models.append(model)
        files[MODEL_FILE.format(k)] = model.to_json()
        files[DATASET_FILE.format(k)] = write_dataset_csv(data)
    files["metrics.csv"] = metrics_table(models)
    files["manifest.json"] = _manifest(args, scene, params, seed,
                                       finger_seeds=[finger_seed(seed, k) for k in (1, 2, 3)])
    out = _models_dir(args)
    write_atomic(files, out)
    print(files["metrics.csv"], end="")
    print(f"wrote {len(files)} files to {out}")
    return 0


def grasp_summary(name: str, result: OptimizedGrasp) -> str:
    lines = [f"object: {name}"]
    lines.append("configuration: " + " -> ".join(m.capitalize() for m in result.modes))
    if result.shape_class:
        lines.append(f"sensed shape class: {result.shape_class}")
    lines.append(f"torque iterations: {result.torque_iterations} "
                 f"({'converged' if result.torque_converged else 'not converged'})")
    if result.released is not None:
        lines.append(f"released finger: {result.released + 1}")
    if result.state is not None:
        for i, fn, tz in zip(result.state.fingers, result.state.normal_forces, result.state.torques):
            lines.append(f"  finger {i + 1}: F_n {fn:7.3f} N   T_z {tz:+.4f} N*m")
        lines.append(f"normal-force imbalance: {result.state.imbalance:.4f} N")
    lines.append(f"margin before: {result.margin_before:.3f} N")
    lines.append(f"margin after:  {result.margin_after:.3f} N")
    lines.append(f"converged: {result.converged}")
    return "\n".join(lines) + "\n"


def cmd_grasp(args, scene: Scene, params: RunParams, seed: int) -> int:
    obj = scene.object(args.object)
    hand = _hand(scene, params, _load_models(_models_dir(args)))
    pose_seq, sense_seq = np.random.SeedSequence([seed, zlib.crc32(obj.name.encode("utf-8"))]).spawn(2)
    if args.noise:
        obj = perturb_pose(obj, scene.pose_noise, np.random.default_rng(pose_seq))
    result = interactive_grasp(obj, params.optimizer, hand, np.random.default_rng(sense_seq), scene.geometry)
    doc = result.to_dict()
    doc.update({"object": obj.name, "pose": [obj.x, obj.y, obj.theta], "seed": seed})
    name = f"grasp_{obj.name}.json"
    write_atomic({name: json.dumps(doc, indent=2, sort_keys=True) + "\n"}, args.out)
    print(grasp_summary(obj.name, result), end="")
    print(f"wrote {Path(args.out) / name}")
    return 0


def cmd_evaluate(args, scene: Scene, params: RunParams, seed: int) -> int:
    objects = scene.select(args.objects)
    hand = _hand(scene, params, _load_models(_models_dir(args)))
    n_trials = args.trials or params.n_trials
    comparison = run_comparison(objects, n_trials, params.optimizer, params.disturbance, hand, seed,
                                scene.pose_noise, scene.geometry, workers=args.workers or params.workers)
    meta = {"scene": scene.source, "params": params.source, "objects": [o.name for o in objects]}
    emit_report(comparison, args.out, meta)
    print(render_table(comparison.rows), end="")
    print(f"wrote results.json, table.csv, plotdata.csv to {args.out}")
    return 0


def cmd_report(args, scene: Optional[Scene], params: Optional[RunParams], seed: Optional[int]) -> int:
    source = Path(args.results) if args.results else Path(args.out) / "results.json"
    comparison = load_results(source)
    write_atomic({"table.csv": render_table(comparison.rows),
                  "plotdata.csv": render_plotdata(comparison.trials)}, args.out)
    print(render_table(comparison.rows), end="")
    print(f"seed {comparison.seed}; re-rendered table.csv, plotdata.csv in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scene", help="scene JSON (default: bundled scene)")
    common.add_argument("--params", help="parameter JSON (default: bundled params)")
    common.add_argument("--seed", type=int, help="master seed (default: from params)")
    common.add_argument("--out", default="rsgrasp-out", help="output directory (default: %(default)s)")

    parser = argparse.ArgumentParser(prog="rsgrasp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="generate data and fit the three finger models")
    p.add_argument("--models", help="model directory (default: OUT/models)")

    p = sub.add_parser("grasp", parents=[common], help="run one interactive grasp episode")
    p.add_argument("object", help="object name from the scene")
    p.add_argument("--models", help="model directory (default: OUT/models)")
    p.add_argument("--noise", action="store_true", help="perturb the object pose with the scene's pose noise")

    p = sub.add_parser("evaluate", parents=[common], help="conventional vs interactive comparison")
    p.add_argument("--models", help="model directory (default: OUT/models)")
    p.add_argument("--objects", nargs="+", metavar="NAME", help="restrict to these scene objects")
    p.add_argument("--trials", type=int, help="trials per object (default: from params)")
    p.add_argument("--workers", type=int, help="worker processes (default: from params)")

    p = sub.add_parser("report", parents=[common], help="re-render table.csv and plotdata.csv from results.json")
    p.add_argument("--results", help="results.json to read (default: OUT/results.json)")
    return parser


COMMANDS = {"calibrate": cmd_calibrate, "grasp": cmd_grasp, "evaluate": cmd_evaluate, "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("RSGRASP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args, None, None, None)
        scene = load_scene(args.scene)
        params = load_params(args.params)
        seed = params.seed if args.seed is None else args.seed
        if getattr(args, "trials", None) is not None and args.trials < 1:
            raise UsageError("--trials must be at least 1")
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise UsageError("--workers must be at least 1")
        return COMMANDS[args.command](args, scene, params, seed)
    except (UsageError, ConfigError, ReportError) as exc:
        print(f"rsgrasp: error: {exc}", file=sys.stderr)
        return 2
    except (CalibrationError, MechanicsError, OptimizerError, SceneError, SensorDomainError) as exc:
        print(f"rsgrasp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
