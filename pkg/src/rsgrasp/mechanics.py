"""Quasi-static grasp mechanics in the plane.

Coulomb friction per contact, force/torque equilibrium of the grasped object,
tangential-force solving for an initial squeeze, and the anti-disturbance
margin of a grasp.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .scene import ContactPatch, ObjectShape

DEFAULT_MU = 0.8
RESIDUAL_TOL = 1e-9


class MechanicsError(ValueError):
    pass


class GraspImpossible(MechanicsError):
    pass


def _cross(r: np.ndarray, f: np.ndarray) -> np.ndarray:
    return r[..., 0] * f[..., 1] - r[..., 1] * f[..., 0]


def tangents(normals: np.ndarray) -> np.ndarray:
    """In-plane unit tangents, the normals rotated +90 degrees."""
    normals = np.asarray(normals, dtype=float)
    return np.stack([-normals[:, 1], normals[:, 0]], axis=1)


@dataclass(frozen=True)
class GraspState:
    """Per-finger contact forces on the object plus the object pose.

    Arrays are indexed by active finger in the order of ``fingers``.
    ``torques`` are the twist torques the fingers apply to the object.
    States built by hand are taken as equilibrated; ``squeeze_solve`` sets
    the flag from its own solve.
    """

    points: np.ndarray
    normals: np.ndarray
    normal_forces: np.ndarray
    tangential: np.ndarray
    torques: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    mu: float = DEFAULT_MU
    fingers: tuple = ()
    equilibrated: bool = True

    def __post_init__(self):
        def arr(name, shape):
            a = np.array(getattr(self, name), dtype=float).reshape(shape)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            return a

        fn = arr("normal_forces", (-1,))
        k = fn.size
        n = arr("normals", (k, 2))
        arr("points", (k, 2))
        ft = arr("tangential", (k, 2))
        arr("torques", (k,))
        arr("center", (2,))
        if not self.fingers:
            object.__setattr__(self, "fingers", tuple(range(k)))
        if len(self.fingers) != k:
            raise MechanicsError("one finger index per contact")
        if not self.mu > 0.0:
            raise MechanicsError("friction coefficient must be positive")
        if np.any(fn < 0.0):
            raise MechanicsError("normal forces must be nonnegative")
        if np.any(np.abs(np.linalg.norm(n, axis=1) - 1.0) > 1e-9):
            raise MechanicsError("normals must be unit vectors")
        along = np.abs(np.sum(ft * n, axis=1))
        if np.any(along > 1e-12 * np.maximum(1.0, np.linalg.norm(ft, axis=1))):
            raise MechanicsError("tangential forces must be orthogonal to the normals")

    @property
    def n_contacts(self) -> int:
        return self.normal_forces.size

    @property
    def net_normal(self) -> np.ndarray:
        return self.normal_forces @ self.normals

    @property
    def imbalance(self) -> float:
        return float(np.linalg.norm(self.net_normal))

    def to_dict(self) -> dict:
        return {
            "fingers": list(self.fingers),
            "points": self.points.tolist(),
            "normals": self.normals.tolist(),
            "normal_forces": self.normal_forces.tolist(),
            "tangential": self.tangential.tolist(),
            "torques": self.torques.tolist(),
            "center": self.center.tolist(),
            "mu": self.mu,
            "equilibrated": self.equilibrated,
        }


def friction_cone_check(F_n: float, F_t, mu: float) -> bool:
    """Coulomb admissibility ``||F_t|| <= mu * F_n``; the boundary is admissible."""
    if F_n < 0.0:
        raise MechanicsError(f"normal force must be nonnegative, got {F_n}")
    if not mu > 0.0:
        raise MechanicsError("friction coefficient must be positive")
    return float(np.linalg.norm(np.atleast_1d(np.asarray(F_t, dtype=float)))) <= mu * F_n


def equilibrium_residual(state: GraspState, F_ext=(0.0, 0.0), T_ext: float = 0.0) -> tuple:
    """Net force (2-vector) and net torque about the object center.

    Both vanish iff the object is in static equilibrium. The torque sums the
    finger twist torques, the external torque, and the moments of all
    contact forces about the center.
    """
    contact = state.normal_forces[:, None] * state.normals + state.tangential
    force = contact.sum(axis=0) + np.asarray(F_ext, dtype=float)
    moments = _cross(state.points - state.center, contact)
    torque = float(state.torques.sum() + T_ext + moments.sum())
    return force, torque


def torque_capacity(state: GraspState) -> float:
    """Spare torque the friction forces could still supply about the center."""
    arm = _cross(state.points - state.center, tangents(state.normals))
    t = np.sum(state.tangential * tangents(state.normals), axis=1)
    return max(0.0, float(np.sum(state.mu * state.normal_forces * np.abs(arm)) - abs(np.sum(t * arm))))


def anti_disturbance_margin(state: GraspState) -> float:
    """Friction capacity minus the resting load needed to balance the normals.

    ``mu * sum(F_n) - ||sum(F_n * n)||``, clamped at 0.
    """
    if not state.equilibrated:
        raise MechanicsError("the margin is only defined for an equilibrated grasp")
    return max(0.0, state.mu * float(state.normal_forces.sum()) - state.imbalance)


def _bounded_lsq(A: np.ndarray, b: np.ndarray, bound: np.ndarray) -> np.ndarray:
    """Least squares with |t_i| <= bound_i, polished on the free variables."""
    t = np.zeros(A.shape[1])
    live = bound > 0.0
    if not np.any(live):
        return t
    res = lsq_linear(A[:, live], b, bounds=(-bound[live], bound[live]), method="bvls")
    t[live] = np.clip(res.x, -bound[live], bound[live])
    at_bound = np.abs(np.abs(t) - bound) <= 1e-12 * np.maximum(bound, 1.0)
    free = live & ~at_bound
    if np.any(free):
        t[at_bound] = np.sign(t[at_bound]) * bound[at_bound]
        rhs = b - A[:, ~free] @ t[~free]
        sol = np.linalg.lstsq(A[:, free], rhs, rcond=None)[0]
        if np.all(np.abs(sol) <= bound[free]):
            t[free] = sol
    return t


def solve_tangential(points, normals, forces, torques, center, mu: float = DEFAULT_MU,
                     fingers: Sequence[int] = ()) -> GraspState:
    """Tangential forces that hold the object still under fixed normal forces.

    Returns the minimum-norm balancing tangential forces when they lie in
    every friction cone. Otherwise falls back to the best cone-bounded least
    squares solution; the state is flagged non-equilibrated when that still
    leaves a residual (the object would slip).
    """
    points = np.asarray(points, dtype=float)
    normals = np.asarray(normals, dtype=float)
    forces = np.asarray(forces, dtype=float)
    torques = np.asarray(torques, dtype=float)
    center = np.asarray(center, dtype=float)
    tan = tangents(normals)
    r = points - center

    A = np.vstack([tan.T, _cross(r, tan)[None, :]])
    normal_part = forces[:, None] * normals
    b = -np.concatenate([normal_part.sum(axis=0), [torques.sum() + _cross(r, normal_part).sum()]])
    bound = mu * forces
    scale = max(1.0, float(np.abs(b).max()))

    t = np.linalg.lstsq(A, b, rcond=None)[0]
    ok = np.linalg.norm(A @ t - b) <= RESIDUAL_TOL * scale and np.all(np.abs(t) <= bound)
    if not ok:
        t = _bounded_lsq(A, b, bound)
        ok = np.linalg.norm(A @ t - b) <= RESIDUAL_TOL * scale
    return GraspState(
        points=points, normals=normals, normal_forces=forces, tangential=t[:, None] * tan,
        torques=torques, center=center, mu=mu, fingers=tuple(fingers), equilibrated=bool(ok),
    )


def squeeze_solve(contacts: Sequence[ContactPatch], obj: ObjectShape, forces: Sequence[float],
                  torques: Optional[Sequence[float]] = None, mu: float = DEFAULT_MU,
                  fingers: Optional[Sequence[int]] = None) -> GraspState:
    """Grasp state for commanded normal forces at the given contacts.

    See ``solve_tangential`` for how the tangential forces are chosen.
    """
    if len(contacts) < 2:
        raise GraspImpossible(f"need at least 2 contacts, got {len(contacts)}")
    forces = np.asarray(forces, dtype=float)
    if forces.shape != (len(contacts),) or np.any(forces < 0.0):
        raise MechanicsError("one nonnegative normal force per contact")
    torques = np.zeros(len(contacts)) if torques is None else np.asarray(torques, dtype=float)
    return solve_tangential(
        [c.point for c in contacts], [c.normal for c in contacts], forces, torques,
        obj.center, mu, tuple(fingers) if fingers is not None else (),
    )


def margin_or_zero(state: Optional[GraspState]) -> float:
    if state is None or not state.equilibrated:
        return 0.0
    return anti_disturbance_margin(state)
