"""Synthetic optical-fiber proprioception for one soft finger.

Five fibers run through the finger. Bending a fiber attenuates the light it
carries; the attenuation in dB grows with fiber curvature. The response model
here is a stand-in for the physical fiber array: contact features (pressed
depth, centroid offset, twist) map linearly to per-fiber curvature, curvature
maps linearly to loss, and the loss saturates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .scene import ContactPatch

N_FIBERS = 5
N_FEATURES = 5

# Nominal curvature per unit feature (1/m per m of depth or offset, 1/m per rad).
# Columns: depth*patch, offset+, offset-, twist+, twist-.
NOMINAL_SENSITIVITY = np.array([
    [30.0, 2.0, 2.0, 0.15, 0.15],
    [22.0, 15.0, 1.0, 0.25, 0.20],
    [22.0, 1.0, 15.0, 0.20, 0.25],
    [18.0, 4.0, 4.0, 1.10, 0.10],
    [18.0, 4.0, 4.0, 0.10, 1.10],
])


class SensorDomainError(ValueError):
    pass


class DeformationVector(NamedTuple):
    """Luminous flux loss per fiber, dB."""

    a1: float
    a2: float
    a3: float
    a4: float
    a5: float

    @classmethod
    def from_array(cls, values) -> "DeformationVector":
        values = [float(v) for v in values]
        if len(values) != N_FIBERS:
            raise SensorDomainError(f"expected {N_FIBERS} fiber losses, got {len(values)}")
        if not all(math.isfinite(v) for v in values):
            raise SensorDomainError("fiber losses must be finite")
        return cls(*values)

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


class ReactionWrench(NamedTuple):
    """Contact reaction in the finger base frame (N, N*m)."""

    Fx: float = 0.0
    Fy: float = 0.0
    Fz: float = 0.0
    Tx: float = 0.0
    Ty: float = 0.0
    Tz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


def flux_loss(I0: float, I: float) -> float:
    """Attenuation ``10*log10(I0/I)`` in dB; zero for an unbent fiber."""
    if not (I0 > 0.0 and I > 0.0):
        raise SensorDomainError(f"intensities must be positive, got I0={I0}, I={I}")
    if I > I0:
        raise SensorDomainError(f"output intensity {I} exceeds baseline {I0}")
    return 10.0 * math.log10(I0 / I)


@dataclass(frozen=True)
class FingerResponseModel:
    """Per-finger fiber response and contact stiffness.

    ``gain`` converts curvature (1/m) to loss (dB). ``sensitivity`` maps the
    five contact features to the five fiber curvatures and is nonnegative,
    so the noiseless loss is monotone in depth and in |twist|.
    """

    sensitivity: np.ndarray = field(default_factory=lambda: NOMINAL_SENSITIVITY.copy())
    gain: float = 40.0
    saturation: float = 30.0
    noise: float = 0.15
    normal_stiffness: float = 2000.0
    torsional_stiffness: float = 0.5
    shear_stiffness: float = 500.0
    pad_width: float = 0.02
    seed: Optional[int] = None

    def __post_init__(self):
        s = np.array(self.sensitivity, dtype=float)
        if s.shape != (N_FIBERS, N_FEATURES):
            raise SensorDomainError(f"sensitivity must be {N_FIBERS}x{N_FEATURES}")
        if np.any(s < 0.0) or not np.all(np.isfinite(s)):
            raise SensorDomainError("sensitivity entries must be finite and nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "sensitivity", s)
        if not (self.gain > 0.0 and self.saturation > 0.0 and self.noise >= 0.0):
            raise SensorDomainError("need gain > 0, saturation > 0, noise >= 0")

    @classmethod
    def synthetic(cls, seed: int, spread: float = 0.25, **kwargs) -> "FingerResponseModel":
        """A finger whose sensitivities deviate from nominal by up to ``spread``.

        Stands in for finger-to-finger fabrication scatter.
        """
        rng = np.random.default_rng(seed)
        factors = 1.0 + spread * rng.uniform(-1.0, 1.0, size=NOMINAL_SENSITIVITY.shape)
        return cls(sensitivity=NOMINAL_SENSITIVITY * factors, seed=seed, **kwargs)

    def to_dict(self) -> dict:
        return {
            "sensitivity": self.sensitivity.tolist(),
            "gain": self.gain,
            "saturation": self.saturation,
            "noise": self.noise,
            "normal_stiffness": self.normal_stiffness,
            "torsional_stiffness": self.torsional_stiffness,
            "shear_stiffness": self.shear_stiffness,
            "pad_width": self.pad_width,
            "seed": self.seed,
        }


def patch_factor(contact: ContactPatch, model: FingerResponseModel) -> float:
    return min(contact.extent / model.pad_width, 1.0)


def contact_features(contact: ContactPatch, twist: float, model: FingerResponseModel) -> np.ndarray:
    if not contact.in_contact:
        return np.zeros(N_FEATURES)
    off = contact.offset
    return np.array([
        contact.depth * patch_factor(contact, model),
        max(off, 0.0),
        max(-off, 0.0),
        max(twist, 0.0),
        max(-twist, 0.0),
    ])


def fiber_curvature(contact: ContactPatch, twist: float, model: FingerResponseModel) -> np.ndarray:
    return model.sensitivity @ contact_features(contact, twist, model)


def noiseless_loss(contact: ContactPatch, twist: float, model: FingerResponseModel) -> np.ndarray:
    return np.minimum(model.gain * fiber_curvature(contact, twist, model), model.saturation)


def sense(contact: ContactPatch, twist: float, model: FingerResponseModel,
          rng: Optional[np.random.Generator] = None) -> DeformationVector:
    """Fiber losses for a contact; Gaussian dB noise is drawn from ``rng``."""
    loss = noiseless_loss(contact, twist, model)
    if model.noise > 0.0:
        if rng is None:
            raise SensorDomainError("a noisy finger model needs an rng")
        loss = np.maximum(loss + rng.normal(0.0, model.noise, size=N_FIBERS), 0.0)
    return DeformationVector.from_array(loss)


def react(contact: ContactPatch, twist: float, model: FingerResponseModel) -> ReactionWrench:
    """Ground-truth reaction wrench; planar, so Fz = Tx = Ty = 0."""
    if not contact.in_contact:
        return ReactionWrench()
    return ReactionWrench(
        Fx=model.normal_stiffness * contact.depth * patch_factor(contact, model),
        Fy=model.shear_stiffness * contact.offset,
        Tz=model.torsional_stiffness * twist,
    )
