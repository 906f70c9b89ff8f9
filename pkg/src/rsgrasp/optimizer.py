"""Rigid-soft interactive grasping.

After an open-loop grasp in the circular configuration, the gripper reads
each finger's proprioceptive estimate (normal force and sign of the twist
torque), picks a base configuration for the sensed shape, rotates proximal
joints until no finger reports a twist, and finally redistributes the grip
so the normal forces cancel. The optimizer only ever sees predicted signs
and forces; ground truth is used to certify results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .calibration import CalibrationModel
from .mechanics import (
    DEFAULT_MU,
    GraspState,
    margin_or_zero,
    squeeze_solve,
    solve_tangential,
)
from .scene import (
    DEFAULT_GEOMETRY,
    BaseMode,
    ContactPatch,
    GripperConfiguration,
    GripperGeometry,
    ObjectShape,
    resolve_contacts,
    wrap_angle,
)
from .sensor import FingerResponseModel, ReactionWrench, react, sense

DEFAULT_PREFERENCES = {
    "ball": "circular",
    "sphere": "circular",
    "circle": "circular",
    "prism": "circular",
    "triangle": "circular",
    "cylinder": "parallel",
    "cuboid": "parallel",
    "rectangle": "parallel",
    "cube": "lateral",
    "square": "lateral",
}

# antiparallel test for flat contact pairs, and the square/elongated split
_PAIR_COS = math.cos(math.radians(15.0))
_ASPECT_SPLIT = 1.4
_ANTIPODAL_COS = math.cos(math.radians(5.0))


class OptimizerError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizationParams:
    torque_tol: float = 0.01
    force_tol: float = 0.1
    step: float = math.radians(5.0)
    max_torque_iters: int = 50
    max_friction_iters: int = 50
    min_force: float = 0.5
    grip: float = 6.0
    # consecutive all-zero readings needed before the torque phase stops
    confirm_reads: int = 2
    mu: float = DEFAULT_MU
    preferences: dict = field(default_factory=lambda: dict(DEFAULT_PREFERENCES))

    def __post_init__(self):
        if not (self.torque_tol > 0 and self.force_tol > 0 and self.step > 0):
            raise OptimizerError("tolerances and step must be positive")
        if self.max_torque_iters < 1 or self.max_friction_iters < 1 or self.confirm_reads < 1:
            raise OptimizerError("iteration caps must be at least 1")
        if self.min_force < 0.0 or self.grip < 0.0 or not self.mu > 0.0:
            raise OptimizerError("need min_force >= 0, grip >= 0, mu > 0")
        for mode in self.preferences.values():
            BaseMode(mode)


class Proprioception:
    """The three sensorized fingers and their calibrated maps.

    Each reading averages ``samples`` consecutive fiber scans before the
    calibrated map is applied, a plain low-pass filter on the dB noise.
    With ``models=None`` readings come from ground truth through the same
    dead band (an ideal sensor); that mode exists for oracles and tests.
    """

    def __init__(self, fingers: Sequence[FingerResponseModel],
                 models: Optional[Sequence[CalibrationModel]] = None, dead_band: float = 0.005,
                 samples: int = 4):
        if len(fingers) != 3 or (models is not None and len(models) != 3):
            raise OptimizerError("need one finger model (and calibration) per finger")
        if samples < 1:
            raise OptimizerError("need at least one scan per reading")
        self.fingers = tuple(fingers)
        self.models = tuple(models) if models is not None else None
        self.dead_band = dead_band
        self.samples = samples

    def truth(self, i: int, contact: ContactPatch) -> ReactionWrench:
        return react(contact, contact.twist, self.fingers[i])

    def read(self, i: int, contact: ContactPatch, rng: np.random.Generator) -> tuple:
        if self.models is None:
            w = self.truth(i, contact)
            sign = 0 if abs(w.Tz) < self.dead_band else int(math.copysign(1, w.Tz))
            return w.Fx, sign
        scans = [sense(contact, contact.twist, self.fingers[i], rng).as_array() for _ in range(self.samples)]
        return self.models[i].predict(np.mean(scans, axis=0))


def grasp(obj: ObjectShape, config: GripperConfiguration, hand: Proprioception, mu: float = DEFAULT_MU,
          geometry: GripperGeometry = DEFAULT_GEOMETRY) -> tuple:
    """Close the fingers; returns ``(contacts, state)`` with ``state=None`` if
    fewer than two fingers touch the object."""
    contacts = {i: c for i, c in resolve_contacts(obj, config, geometry) if c is not None and c.in_contact}
    if len(contacts) < 2:
        return contacts, None
    idx = sorted(contacts)
    wrenches = [hand.truth(i, contacts[i]) for i in idx]
    state = squeeze_solve([contacts[i] for i in idx], obj, [w.Fx for w in wrenches],
                          torques=[w.Tz for w in wrenches], mu=mu, fingers=idx)
    return contacts, state


def select_base_configuration(shape_class: Optional[str], preferences: Optional[dict] = None) -> BaseMode:
    prefs = DEFAULT_PREFERENCES if preferences is None else preferences
    return BaseMode(prefs.get(shape_class, "circular"))


def classify_shape(contacts: dict, obj: ObjectShape) -> tuple:
    """Shape class and base rotation from the contact pattern of a grasp.

    Round contacts everywhere read as a ball, or as a cylinder when the
    object is flat out-of-plane. Among flat contacts an antiparallel pair
    marks a box; its aspect, estimated from how far the remaining contact
    sits from the grasp center, separates cubes from cuboids. The returned
    rotation puts the lateral/parallel pair axis on the pair normal.
    """
    items = [contacts[i] for i in sorted(contacts)]
    if not items:
        return None, 0.0
    if all(c.curvature > 0.0 for c in items):
        return ("cylinder" if obj.shape_class == "cylinder" else "ball"), 0.0
    flat = [c for c in items if c.curvature == 0.0]
    pair = None
    for a in range(len(flat)):
        for b in range(a + 1, len(flat)):
            if np.dot(flat[a].normal, flat[b].normal) < -_PAIR_COS:
                pair = (flat[a], flat[b])
                break
        if pair:
            break
    if pair is None:
        return "prism", 0.0
    na = np.asarray(pair[0].normal)
    across = abs(float(np.dot(np.subtract(pair[0].point, pair[1].point), na)))
    others = [c for c in flat if c is not pair[0] and c is not pair[1]]
    axis = math.atan2(na[1], na[0])
    if not others:
        return "cube", _pair_rotation(axis)
    third = others[0]
    along = 2.0 * abs(float(np.dot(third.point, third.normal)))
    ratio = along / across
    if ratio > _ASPECT_SPLIT:
        return "cuboid", _pair_rotation(axis)
    if ratio < 1.0 / _ASPECT_SPLIT:
        return "cuboid", _pair_rotation(math.atan2(third.normal[1], third.normal[0]))
    return "cube", _pair_rotation(axis)


def _pair_rotation(normal_angle: float) -> float:
    # the pair sits on the axis base_rotation + 90 deg; either sign works
    theta = wrap_angle(normal_angle - math.pi / 2)
    if theta > math.pi / 2:
        theta -= math.pi
    elif theta <= -math.pi / 2:
        theta += math.pi
    return theta


@dataclass
class TorqueResult:
    config: GripperConfiguration
    state: Optional[GraspState]
    iterations: int
    converged: bool
    trace: list


def torque_optimize(obj: ObjectShape, config: GripperConfiguration, predictor: Proprioception,
                    params: OptimizationParams, rng: np.random.Generator,
                    geometry: GripperGeometry = DEFAULT_GEOMETRY) -> TorqueResult:
    """Rotate proximal joints against the sensed twist until no finger twists.

    Each finger turns by ``-sign(T_z) * step``; its step halves whenever its
    sign flips. The phase ends after ``confirm_reads`` consecutive readings
    in which no finger reports a twist; re-reading does not move the joints
    and is not counted as an iteration.
    """
    steps = [params.step] * 3
    last = [0, 0, 0]
    trace = []
    iterations = 0
    quiet = 0
    converged = False
    while True:
        contacts, _ = grasp(obj, config, predictor, params.mu, geometry)
        signs = {i: predictor.read(i, c, rng)[1] for i, c in sorted(contacts.items())}
        trace.append({"proximal": [f.proximal for f in config.fingers], "signs": [signs.get(i, 0) for i in range(3)]})
        if all(s == 0 for s in signs.values()):
            quiet += 1
            if quiet >= params.confirm_reads:
                converged = True
                break
            continue
        quiet = 0
        if iterations >= params.max_torque_iters:
            break
        for i, s in signs.items():
            if s == 0:
                continue
            if last[i] != 0 and s != last[i]:
                steps[i] /= 2.0
            last[i] = s
            config = config.replace_finger(i, proximal=config.fingers[i].proximal - s * steps[i])
        iterations += 1
    _, state = grasp(obj, config, predictor, params.mu, geometry)
    return TorqueResult(config, state, iterations, converged, trace)


def antipodal(a: ContactPatch, b: ContactPatch, mu: float) -> bool:
    """Opposed normals whose connecting line lies in both friction cones."""
    na, nb = np.asarray(a.normal), np.asarray(b.normal)
    if float(np.dot(na, nb)) > -_ANTIPODAL_COS:
        return False
    d = np.subtract(b.point, a.point)
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        return False
    d /= dist
    cos_cone = math.cos(math.atan(mu))
    return float(np.dot(na, d)) >= cos_cone and float(np.dot(nb, -d)) >= cos_cone


def release_finger_if_needed(obj: ObjectShape, config: GripperConfiguration,
                             geometry: GripperGeometry = DEFAULT_GEOMETRY, mu: float = DEFAULT_MU) -> GripperConfiguration:
    """In the lateral mode, drop the mid-plane finger once the facing pair is antipodal.

    The released finger's grip goes to the pair so the total is unchanged.
    """
    if config.base_mode != BaseMode.LATERAL or not config.fingers[2].active:
        return config
    contacts = dict(resolve_contacts(obj, config, geometry))
    a, b = contacts.get(0), contacts.get(1)
    if a is None or b is None or not antipodal(a, b, mu):
        return config
    share = config.fingers[2].grip / 2.0
    out = config.replace_finger(2, active=False, grip=0.0)
    for i in (0, 1):
        out = out.replace_finger(i, grip=out.fingers[i].grip + share)
    return out


def balance_magnitudes(normals: np.ndarray, total: float, min_force: float) -> np.ndarray:
    """Magnitudes ``m >= min_force`` summing to ``total`` that minimize ``||sum m_i n_i||``.

    Nonnegative least squares on ``m = min_force + x`` with the sum enforced
    by a heavily weighted row, then renormalized onto the exact total.
    """
    normals = np.asarray(normals, dtype=float)
    k = len(normals)
    spare = total - k * min_force
    if spare < 0.0:
        raise OptimizerError(f"total {total} N cannot give {k} fingers {min_force} N each")
    if spare == 0.0:
        return np.full(k, min_force)
    weight = 1e4
    A = np.vstack([normals.T, weight * np.ones((1, k))])
    b = np.concatenate([-min_force * normals.sum(axis=0), [weight * spare]])
    x, _ = nnls(A, b)
    x *= spare / x.sum()
    return min_force + x


@dataclass
class FrictionResult:
    state: GraspState
    config: GripperConfiguration
    iterations: int
    feasible: bool


def friction_optimize(state: GraspState, config: GripperConfiguration,
                      params: OptimizationParams) -> FrictionResult:
    """Redistribute the commanded total grip so the normal forces cancel."""
    total = config.total_grip
    if state.imbalance <= params.force_tol:
        return FrictionResult(state, config, 0, True)
    m = balance_magnitudes(state.normals, total, params.min_force)
    grips = [0.0] * 3
    for i, f in zip(state.fingers, m):
        grips[i] = float(f)
    config = config.with_grips([grips[i] if config.fingers[i].active else 0.0 for i in range(3)])
    new = solve_tangential(state.points, state.normals, m, state.torques, state.center, state.mu, state.fingers)
    return FrictionResult(new, config, 1, new.imbalance <= params.force_tol)


@dataclass
class OptimizedGrasp:
    config: GripperConfiguration
    state: Optional[GraspState]
    initial_config: GripperConfiguration
    initial_state: Optional[GraspState]
    margin_before: float
    margin_after: float
    torque_iterations: int = 0
    friction_iterations: int = 0
    torque_converged: bool = True
    friction_converged: bool = True
    shape_class: Optional[str] = None
    modes: list = field(default_factory=list)
    released: Optional[int] = None
    readings: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return (self.torque_converged and self.friction_converged
                and self.state is not None and self.state.equilibrated)

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "state": self.state.to_dict() if self.state is not None else None,
            "initial_config": config_to_dict(self.initial_config),
            "initial_state": self.initial_state.to_dict() if self.initial_state is not None else None,
            "margin_before": self.margin_before,
            "margin_after": self.margin_after,
            "torque_iterations": self.torque_iterations,
            "friction_iterations": self.friction_iterations,
            "torque_converged": self.torque_converged,
            "friction_converged": self.friction_converged,
            "converged": self.converged,
            "shape_class": self.shape_class,
            "modes": list(self.modes),
            "released": self.released,
            "readings": [list(r) for r in self.readings],
            "trace": self.trace,
        }


def config_to_dict(config: GripperConfiguration) -> dict:
    return {
        "base_mode": config.base_mode.value,
        "base_rotation": config.base_rotation,
        "fingers": [
            {"proximal": f.proximal, "distal": f.distal, "grip": f.grip, "active": f.active}
            for f in config.fingers
        ],
    }


def interactive_grasp(obj: ObjectShape, params: OptimizationParams, predictor: Proprioception,
                      rng: np.random.Generator, geometry: GripperGeometry = DEFAULT_GEOMETRY,
                      start: Optional[GripperConfiguration] = None) -> OptimizedGrasp:
    """One full episode: initial grasp, adapt base, torque phase, release, friction phase.

    ``start`` replaces the circular initial grasp and skips the base
    selection; used to re-run the loop on an already optimized grasp.
    """
    initial = start if start is not None else GripperConfiguration.nominal(BaseMode.CIRCULAR, grip=params.grip)
    contacts0, state0 = grasp(obj, initial, predictor, params.mu, geometry)
    margin_before = margin_or_zero(state0)
    readings = [(i, *predictor.read(i, c, rng)) for i, c in sorted(contacts0.items())]
    result = OptimizedGrasp(initial, state0, initial, state0, margin_before, margin_before,
                            modes=[initial.base_mode.value], readings=readings)
    if state0 is None:
        result.torque_converged = result.friction_converged = False
        return result

    config = initial
    if start is None:
        shape, rotation = classify_shape(contacts0, obj)
        mode = select_base_configuration(shape, params.preferences)
        result.shape_class = shape
        if mode != initial.base_mode:
            config = initial.with_mode(mode, rotation)
            result.modes.append(mode.value)

    torque = torque_optimize(obj, config, predictor, params, rng, geometry)
    result.torque_iterations = torque.iterations
    result.torque_converged = torque.converged
    result.trace = torque.trace
    config = torque.config

    released = release_finger_if_needed(obj, config, geometry, params.mu)
    if released is not config:
        result.released = 2
    config = released

    _, state = grasp(obj, config, predictor, params.mu, geometry)
    if state is None:
        result.config, result.state = config, None
        result.friction_converged = False
        return result
    friction = friction_optimize(state, config, params)
    config = friction.config
    result.friction_iterations = friction.iterations
    # realize the new grips physically rather than trusting the plan
    _, state = grasp(obj, config, predictor, params.mu, geometry)
    result.config, result.state = config, state
    result.friction_converged = state is not None and state.imbalance <= params.force_tol
    result.margin_after = margin_or_zero(state)
    return result
