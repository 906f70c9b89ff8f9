"""Shake-test trials comparing the conventional and interactive grasp policies.

The shake is a threshold probe: a grasp survives a disturbance amplitude iff
the amplitude does not exceed its anti-disturbance margin. Every trial draws
its object pose from an RNG seeded by (master seed, object id, trial index),
so results do not depend on execution order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .mechanics import margin_or_zero, torque_capacity
from .optimizer import (
    OptimizationParams,
    OptimizedGrasp,
    Proprioception,
    grasp,
    interactive_grasp,
)
from .scene import (
    DEFAULT_GEOMETRY,
    BaseMode,
    GripperConfiguration,
    GripperGeometry,
    ObjectShape,
    PoseNoiseSpec,
    perturb_pose,
)

log = logging.getLogger(__name__)

POLICIES = ("conventional", "interactive")
TABLE_COLUMNS = ("object", "conventional_successes", "interactive_successes", "n_trials")
PLOT_COLUMNS = ("object", "policy", "trial", "margin", "success", "seed")
REPORT_FILES = ("results.json", "table.csv", "plotdata.csv")


class HarnessError(ValueError):
    pass


class ReportError(OSError):
    pass


@dataclass(frozen=True)
class DisturbanceSpec:
    """External force magnitudes (N) applied in turn, plus an optional torque (N*m)."""

    amplitudes: tuple = (2.0, 4.0, 6.0, 8.0, 10.0)
    torque: Optional[float] = None

    def __post_init__(self):
        amps = tuple(float(a) for a in self.amplitudes)
        if any(a < 0.0 for a in amps):
            raise HarnessError("disturbance amplitudes must be nonnegative")
        if any(b < a for a, b in zip(amps, amps[1:])):
            raise HarnessError("disturbance amplitudes must be nondecreasing")
        if self.torque is not None and self.torque < 0.0:
            raise HarnessError("disturbance torque must be nonnegative")
        object.__setattr__(self, "amplitudes", amps)


@dataclass(frozen=True)
class TrialResult:
    object_id: str
    policy: str
    success: bool
    failure_amplitude: Optional[float]
    margin: float
    seed: int
    trial: int = 0
    equilibrated: bool = True
    final_mode: str = "circular"

    def to_dict(self) -> dict:
        return asdict(self)


def shake_test(result: OptimizedGrasp, spec: DisturbanceSpec, object_id: str = "",
               policy: str = "interactive", seed: int = 0, trial: int = 0) -> TrialResult:
    """Apply the schedule to a finished grasp.

    A grasp that never reached equilibrium drops the object before the
    shake starts and fails at amplitude 0.
    """
    state = result.state
    mode = result.config.base_mode.value
    if state is None or not state.equilibrated:
        return TrialResult(object_id, policy, False, 0.0, 0.0, seed, trial, False, mode)
    margin = result.margin_after
    torque_ok = spec.torque is None or spec.torque <= torque_capacity(state)
    failure = None
    for amp in spec.amplitudes:
        if amp > margin or not torque_ok:
            failure = amp
            break
    return TrialResult(object_id, policy, failure is None, failure, margin, seed, trial, True, mode)


def conventional_grasp(obj: ObjectShape, params: OptimizationParams, hand: Proprioception,
                       geometry: GripperGeometry = DEFAULT_GEOMETRY) -> OptimizedGrasp:
    """Open-loop baseline: close the circular configuration and stop."""
    config = GripperConfiguration.nominal(BaseMode.CIRCULAR, grip=params.grip)
    _, state = grasp(obj, config, hand, params.mu, geometry)
    margin = margin_or_zero(state)
    ok = state is not None
    return OptimizedGrasp(config, state, config, state, margin, margin,
                          torque_converged=ok, friction_converged=ok,
                          modes=[BaseMode.CIRCULAR.value])


def trial_seed(master: int, object_id: str, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), zlib.crc32(object_id.encode("utf-8")), int(trial)])


def object_id(obj: ObjectShape) -> str:
    return obj.name or obj.kind


@dataclass(frozen=True)
class _Job:
    obj: ObjectShape
    trial: int
    seed: int
    params: OptimizationParams
    spec: DisturbanceSpec
    hand: Proprioception
    noise: PoseNoiseSpec
    geometry: GripperGeometry


def _run_trial(job: _Job) -> tuple:
    oid = object_id(job.obj)
    pose_seq, sense_seq = trial_seed(job.seed, oid, job.trial).spawn(2)
    posed = perturb_pose(job.obj, job.noise, np.random.default_rng(pose_seq))
    conv = conventional_grasp(posed, job.params, job.hand, job.geometry)
    inter = interactive_grasp(posed, job.params, job.hand, np.random.default_rng(sense_seq), job.geometry)
    return (
        shake_test(conv, job.spec, oid, "conventional", job.seed, job.trial),
        shake_test(inter, job.spec, oid, "interactive", job.seed, job.trial),
    )


@dataclass
class Comparison:
    """Per-object success counts with one column per policy."""

    rows: list
    trials: list = field(default_factory=list)
    seed: int = 0
    n_trials: int = 0

    def row(self, oid: str) -> dict:
        for r in self.rows:
            if r["object"] == oid:
                return r
        raise KeyError(oid)


def tabulate(trials: Sequence[TrialResult], order: Sequence[str], n_trials: int) -> list:
    rows = []
    for oid in order:
        counts = {p: sum(1 for t in trials if t.object_id == oid and t.policy == p and t.success) for p in POLICIES}
        rows.append({
            "object": oid,
            "conventional_successes": counts["conventional"],
            "interactive_successes": counts["interactive"],
            "n_trials": n_trials,
        })
    return rows


def run_comparison(objects: Sequence[ObjectShape], n_trials: int, params: OptimizationParams,
                   spec: DisturbanceSpec, hand: Proprioception, seed: int,
                   noise: PoseNoiseSpec = PoseNoiseSpec(),
                   geometry: GripperGeometry = DEFAULT_GEOMETRY, workers: int = 1) -> Comparison:
    """Both policies on the same perturbed poses, ``n_trials`` per object."""
    if n_trials < 1:
        raise HarnessError("n_trials must be at least 1")
    ids = [object_id(o) for o in objects]
    if len(set(ids)) != len(ids):
        raise HarnessError("object ids must be unique")
    jobs = [_Job(o, t, seed, params, spec, hand, noise, geometry) for o in objects for t in range(n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(_run_trial, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        pairs = [_run_trial(j) for j in jobs]
    trials = [t for pair in pairs for t in pair]
    rows = tabulate(trials, ids, n_trials)
    for r in rows:
        log.info("%s: conventional %d/%d, interactive %d/%d", r["object"],
                 r["conventional_successes"], n_trials, r["interactive_successes"], n_trials)
    return Comparison(rows, trials, seed, n_trials)


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def render_table(rows: Sequence[dict]) -> str:
    return _csv(TABLE_COLUMNS, [[r[c] for c in TABLE_COLUMNS] for r in rows])


def render_plotdata(trials: Sequence[TrialResult]) -> str:
    return _csv(PLOT_COLUMNS, [[t.object_id, t.policy, t.trial, repr(float(t.margin)), int(t.success), t.seed]
                               for t in trials])


def render_results(comparison: Comparison, meta: Optional[dict] = None) -> str:
    doc = {
        "seed": comparison.seed,
        "n_trials": comparison.n_trials,
        "meta": meta or {},
        "table": comparison.rows,
        "trials": [t.to_dict() for t in comparison.trials],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_results(path) -> Comparison:
    """Read a results.json written by ``emit_report``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        trials = [TrialResult(**t) for t in doc["trials"]]
        return Comparison(doc["table"], trials, doc["seed"], doc["n_trials"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ReportError(f"cannot read results from {path}: {exc}") from exc


def write_atomic(files: dict, directory) -> list:
    """Write ``{name: text}`` into ``directory`` all-or-nothing.

    Everything goes to temp files first; they are renamed into place only
    once all were written, and removed on any failure.
    """
    directory = Path(directory)
    temps = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=directory)
            temps.append((tmp, directory / name))
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        for tmp, final in temps:
            os.replace(tmp, final)
    except OSError as exc:
        for tmp, _ in temps:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise ReportError(f"cannot write report files to {directory}: {exc}") from exc
    return [final for _, final in temps]


def emit_report(comparison: Comparison, path, meta: Optional[dict] = None) -> list:
    """Write results.json, table.csv and plotdata.csv into directory ``path``."""
    return write_atomic({
        "results.json": render_results(comparison, meta),
        "table.csv": render_table(comparison.rows),
        "plotdata.csv": render_plotdata(comparison.trials),
    }, path)
