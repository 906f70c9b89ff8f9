"""Scene and parameter files.

Both are JSON. The checked-in defaults live in ``rsgrasp/data`` and are
used whenever no path is given. Angles are written in degrees in the files
and converted to radians here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional

from .calibration import CalibrationSettings, PressSpec
from .harness import DisturbanceSpec
from .optimizer import OptimizationParams
from .scene import GripperGeometry, ObjectShape, PoseNoiseSpec
from .sensor import FingerResponseModel

DEFAULT_SCENE = "scene.json"
DEFAULT_PARAMS = "params.json"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FingerSpec:
    seeds: tuple = (11, 12, 13)
    spread: float = 0.25
    gain: float = 40.0
    saturation: float = 30.0
    noise: float = 0.15
    normal_stiffness: float = 2000.0
    torsional_stiffness: float = 0.5
    shear_stiffness: float = 500.0
    pad_width: float = 0.02

    def build(self) -> list:
        extra = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("seeds", "spread")}
        return [FingerResponseModel.synthetic(int(s), spread=self.spread, **extra) for s in self.seeds]


@dataclass(frozen=True)
class Scene:
    objects: tuple
    pose_noise: PoseNoiseSpec = PoseNoiseSpec()
    geometry: GripperGeometry = GripperGeometry()
    fingers: FingerSpec = FingerSpec()
    source: str = "<default>"

    def select(self, names) -> tuple:
        """Objects whose names are in ``names``, in scene order."""
        if not names:
            return self.objects
        known = {o.name for o in self.objects}
        missing = [n for n in names if n not in known]
        if missing:
            raise ConfigError(f"unknown object(s) {', '.join(missing)}; scene has {', '.join(sorted(known))}")
        return tuple(o for o in self.objects if o.name in set(names))

    def object(self, name: str) -> ObjectShape:
        return self.select([name])[0]


@dataclass(frozen=True)
class RunParams:
    seed: int = 0
    optimizer: OptimizationParams = OptimizationParams()
    scans_per_reading: int = 4
    disturbance: DisturbanceSpec = DisturbanceSpec()
    calibration: CalibrationSettings = field(default_factory=CalibrationSettings)
    n_trials: int = 20
    workers: int = 1
    source: str = "<default>"


def _read(path: Optional[str], default: str) -> tuple:
    if path is None:
        text = resources.files("rsgrasp.data").joinpath(default).read_text(encoding="utf-8")
        return json.loads(text), f"<default {default}>"
    p = Path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8")), str(p)
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p} is not valid JSON: {exc}") from exc


def _build(cls, raw, where: str, **converted):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known - set(converted)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")
    kwargs = {k: v for k, v in raw.items() if k in known}
    kwargs.update({k: v for k, v in converted.items() if v is not None})
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _degrees(raw: dict, key: str, target: str) -> dict:
    raw = dict(raw or {})
    if key in raw:
        raw[target] = math.radians(float(raw.pop(key)))
    return raw


def scene_from_dict(doc: dict, source: str = "<dict>") -> Scene:
    if not isinstance(doc, dict) or not doc.get("objects"):
        raise ConfigError(f"{source}: scene needs a non-empty 'objects' list")
    objects = []
    for k, raw in enumerate(doc["objects"]):
        obj = _build(ObjectShape, raw, f"{source}: objects[{k}]")
        if not obj.name:
            raise ConfigError(f"{source}: objects[{k}] needs a name")
        objects.append(obj)
    names = [o.name for o in objects]
    if len(set(names)) != len(names):
        raise ConfigError(f"{source}: object names must be unique")
    fingers_raw = dict(doc.get("fingers") or {})
    if "seeds" in fingers_raw:
        fingers_raw["seeds"] = tuple(int(s) for s in fingers_raw["seeds"])
        if len(fingers_raw["seeds"]) != 3:
            raise ConfigError(f"{source}: fingers.seeds needs exactly 3 entries")
    return Scene(
        objects=tuple(objects),
        pose_noise=_build(PoseNoiseSpec, _degrees(doc.get("pose_noise"), "rotation_max_deg", "rotation_max"),
                          f"{source}: pose_noise"),
        geometry=_build(GripperGeometry, doc.get("geometry"), f"{source}: geometry"),
        fingers=_build(FingerSpec, fingers_raw, f"{source}: fingers"),
        source=source,
    )


def params_from_dict(doc: dict, source: str = "<dict>") -> RunParams:
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: expected a JSON object")
    unknown = set(doc) - {"seed", "optimizer", "disturbance", "calibration", "harness"}
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(sorted(unknown))}")
    opt = _degrees(doc.get("optimizer"), "step_deg", "step")
    scans = int(opt.pop("scans_per_reading", 4))
    if scans < 1:
        raise ConfigError(f"{source}: optimizer.scans_per_reading must be at least 1")
    cal = dict(doc.get("calibration") or {})
    press = _build(PressSpec, cal.pop("press", None), f"{source}: calibration.press")
    harness = dict(doc.get("harness") or {})
    unknown = set(harness) - {"n_trials", "workers"}
    if unknown:
        raise ConfigError(f"{source}: harness: unknown key(s) {', '.join(sorted(unknown))}")
    n_trials = int(harness.get("n_trials", 20))
    workers = int(harness.get("workers", 1))
    if n_trials < 1 or workers < 1:
        raise ConfigError(f"{source}: harness.n_trials and harness.workers must be at least 1")
    dist = dict(doc.get("disturbance") or {})
    if "amplitudes" in dist:
        dist["amplitudes"] = tuple(dist["amplitudes"])
    return RunParams(
        seed=int(doc.get("seed", 0)),
        optimizer=_build(OptimizationParams, opt, f"{source}: optimizer"),
        scans_per_reading=scans,
        disturbance=_build(DisturbanceSpec, dist, f"{source}: disturbance"),
        calibration=_build(CalibrationSettings, cal, f"{source}: calibration", press=press),
        n_trials=n_trials,
        workers=workers,
        source=source,
    )


def load_scene(path: Optional[str] = None) -> Scene:
    doc, source = _read(path, DEFAULT_SCENE)
    return scene_from_dict(doc, source)


def load_params(path: Optional[str] = None) -> RunParams:
    doc, source = _read(path, DEFAULT_PARAMS)
    return params_from_dict(doc, source)
