"""Deformation-to-reaction calibration.

Fits, per finger, a ridge regressor for the normal force F_n (and, for
reporting, the twist torque T_z) and a three-class classifier for the sign
of T_z, all on standardized fiber losses.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .scene import ContactPatch, ObjectShape, ray_hit, unit
from .sensor import (
    DeformationVector,
    FingerResponseModel,
    ReactionWrench,
    react,
    sense,
)

CSV_HEADER = ("a1", "a2", "a3", "a4", "a5", "Fx", "Fy", "Fz", "Tx", "Ty", "Tz")
CLASSES = (-1, 0, 1)
MIN_SAMPLES = 50


class CalibrationError(ValueError):
    pass


class SensorSample(NamedTuple):
    deformation: DeformationVector
    wrench: ReactionWrench

    @property
    def normal_force(self) -> float:
        return self.wrench.Fx

    @property
    def twist_torque(self) -> float:
        return self.wrench.Tz

    def as_row(self) -> tuple:
        return tuple(self.deformation) + tuple(self.wrench)

    @classmethod
    def from_row(cls, row: Sequence[float]) -> "SensorSample":
        if len(row) != 11:
            raise CalibrationError(f"a sensor record has 11 values, got {len(row)}")
        values = [float(v) for v in row]
        return cls(DeformationVector.from_array(values[:5]), ReactionWrench(*values[5:]))


# --------------------------------------------------------------------------
# metrics


def _paired(y, y_hat) -> tuple:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size == 0 or y.size != y_hat.size:
        raise CalibrationError(f"need equal nonzero lengths, got {y.size} and {y_hat.size}")
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _paired(y, y_hat)
    return math.sqrt(float(np.mean((y - y_hat) ** 2)))


def r_squared(y, y_hat) -> float:
    y, y_hat = _paired(y, y_hat)
    ss_tot = float(np.sum((y.mean() - y) ** 2))
    if ss_tot == 0.0:
        raise CalibrationError("R^2 is undefined for constant targets")
    return 1.0 - float(np.sum((y_hat - y) ** 2)) / ss_tot


def classification_success_rate(labels, predictions) -> float:
    labels, predictions = list(labels), list(predictions)
    if not labels or len(labels) != len(predictions):
        raise CalibrationError(f"need equal nonzero lengths, got {len(labels)} and {len(predictions)}")
    return sum(a == b for a, b in zip(labels, predictions)) / len(labels)


def sign_labels(torques, dead_band: float) -> np.ndarray:
    """Three-way sign with |T_z| < dead_band mapped to 0."""
    t = np.asarray(torques, dtype=float)
    out = np.sign(t).astype(int)
    out[np.abs(t) < dead_band] = 0
    return out


# --------------------------------------------------------------------------
# dataset generation


@dataclass(frozen=True)
class PressSpec:
    """Bounds of the random bench presses used to collect training data.

    A ``small_twist_fraction`` of presses keep the pad nearly square to the
    surface (|twist| <= ``small_twist_max``), so the classifier sees dense
    data on both sides of the dead band; the rest twist anywhere within
    ``twist_max``.
    """

    depth_max: float = 0.008
    offset_max: float = 0.006
    twist_max: float = 0.35
    small_twist_fraction: float = 0.5
    small_twist_max: float = 0.0
    standoff: float = 0.2

    def __post_init__(self):
        if min(self.depth_max, self.offset_max, self.twist_max, self.small_twist_max) < 0.0:
            raise CalibrationError("press bounds must be nonnegative")
        if not 0.0 <= self.small_twist_fraction <= 1.0:
            raise CalibrationError("small_twist_fraction must lie in [0, 1]")


def _press(obj: ObjectShape, press: PressSpec, rng: np.random.Generator):
    while True:
        phi, offset, depth, u_small, u_twist = rng.random(5)
        phi *= 2.0 * math.pi
        offset = press.offset_max * (2.0 * offset - 1.0)
        direction = -unit(phi)
        origin = obj.center + press.standoff * unit(phi) + offset * unit(phi + math.pi / 2)
        hit = ray_hit(obj, origin, direction)
        if hit is not None:
            break
    span = press.small_twist_max if u_small < press.small_twist_fraction else press.twist_max
    twist = span * (2.0 * u_twist - 1.0)
    contact = ContactPatch(
        point=tuple(hit.point), normal=tuple(hit.normal), depth=press.depth_max * depth,
        extent=hit.extent, approach=tuple(direction), curvature=hit.curvature,
        offset=offset, corner=hit.corner,
    )
    return contact, twist


def generate_dataset(objects: Sequence[ObjectShape], n: int, finger: FingerResponseModel,
                     press: PressSpec, rng: np.random.Generator) -> list:
    """Press randomly chosen objects against the finger ``n`` times."""
    if n <= 0:
        raise CalibrationError("sample count must be positive")
    if not objects:
        raise CalibrationError("need at least one calibration object")
    samples = []
    for _ in range(n):
        obj = objects[int(rng.integers(len(objects)))]
        contact, twist = _press(obj, press, rng)
        samples.append(SensorSample(sense(contact, twist, finger, rng), react(contact, twist, finger)))
    return samples


def train_test_split(samples: Sequence[SensorSample], rng: np.random.Generator,
                     train_fraction: float = 0.8) -> tuple:
    order = rng.permutation(len(samples))
    cut = int(round(train_fraction * len(samples)))
    return [samples[i] for i in order[:cut]], [samples[i] for i in order[cut:]]


def write_dataset_csv(samples: Iterable[SensorSample]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in samples:
        writer.writerow([f"{v:.9g}" for v in s.as_row()])
    return buf.getvalue()


def read_dataset_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise CalibrationError(f"unexpected dataset header {header}")
    return [SensorSample.from_row(row) for row in reader if row]


# --------------------------------------------------------------------------
# model


def _expand(z: np.ndarray, degree: int) -> np.ndarray:
    if degree == 1:
        return z
    if degree != 2:
        raise CalibrationError("feature expansion supports degree 1 or 2")
    i, j = np.triu_indices(z.shape[1])
    return np.hstack([z, z[:, i] * z[:, j]])


def _ridge(X: np.ndarray, y: np.ndarray, ridge: float) -> tuple:
    """Intercept-free ridge on centered data, with the penalty per sample."""
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    A = Xc.T @ Xc / len(y) + ridge * np.eye(X.shape[1])
    b = Xc.T @ (y - y_mean) / len(y)
    try:
        if ridge == 0.0 and np.linalg.cond(A) > 1e12:
            raise np.linalg.LinAlgError("singular normal equations")
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError(f"degenerate feature matrix: {exc}") from exc
    return w, y_mean - float(x_mean @ w)


def _logistic(X: np.ndarray, y: np.ndarray, l2: float, iterations: int = 50) -> np.ndarray:
    """Binary logistic regression by Newton's method; returns [intercept, w...].

    Positives and negatives carry equal total weight, so a lopsided class
    prior does not drag the decision boundary away from the labels' own.
    """
    n, d = X.shape
    Xa = np.hstack([np.ones((n, 1)), X])
    pos = y.sum()
    sw = np.where(y > 0.5, 0.5 / max(pos, 1.0), 0.5 / max(n - pos, 1.0))
    w = np.zeros(d + 1)
    penalty = np.full(d + 1, l2)
    penalty[0] = 0.0
    for _ in range(iterations):
        z = Xa @ w
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        grad = Xa.T @ (sw * (p - y)) + penalty * w
        hess = (Xa * (sw * p * (1.0 - p))[:, None]).T @ Xa + np.diag(penalty) + 1e-12 * np.eye(d + 1)
        step = np.linalg.solve(hess, grad)
        w -= step
        if np.max(np.abs(step)) < 1e-10:
            break
    return w


@dataclass(frozen=True)
class CalibrationModel:
    """Fitted deformation-to-reaction map for one finger."""

    mean: np.ndarray
    scale: np.ndarray
    force_weights: np.ndarray
    force_intercept: float
    torque_weights: np.ndarray
    torque_intercept: float
    class_weights: np.ndarray  # (3, d+1), rows follow CLASSES
    class_present: tuple
    dead_band: float = 0.005
    degree: int = 1
    ridge: float = 1e-6
    n_samples: int = 0
    seed: Optional[int] = None
    metrics: dict = field(default_factory=dict)

    def features(self, a) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return _expand((a - self.mean) / self.scale, self.degree)

    def predict_force(self, a) -> np.ndarray:
        return self.features(a) @ self.force_weights + self.force_intercept

    def predict_torque(self, a) -> np.ndarray:
        return self.features(a) @ self.torque_weights + self.torque_intercept

    def predict_sign(self, a) -> np.ndarray:
        X = self.features(a)
        scores = X @ self.class_weights[:, 1:].T + self.class_weights[:, 0]
        scores[:, ~np.array(self.class_present)] = -np.inf
        return np.array(CLASSES)[np.argmax(scores, axis=1)]

    def predict(self, a) -> tuple:
        """``(F_n_hat, sign_Tz_hat)`` for one deformation vector."""
        a = np.asarray(a, dtype=float)
        if a.shape != (5,) or not np.all(np.isfinite(a)):
            raise CalibrationError("predict needs a finite 5-vector")
        return float(self.predict_force(a)[0]), int(self.predict_sign(a)[0])

    def with_metrics(self, metrics: dict) -> "CalibrationModel":
        from dataclasses import replace
        return replace(self, metrics=dict(metrics))

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "force_weights": self.force_weights.tolist(),
            "force_intercept": self.force_intercept,
            "torque_weights": self.torque_weights.tolist(),
            "torque_intercept": self.torque_intercept,
            "class_weights": self.class_weights.tolist(),
            "class_present": list(self.class_present),
            "classes": list(CLASSES),
            "dead_band": self.dead_band,
            "degree": self.degree,
            "ridge": self.ridge,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "metrics": self.metrics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationModel":
        try:
            return cls(
                mean=np.array(d["mean"], dtype=float),
                scale=np.array(d["scale"], dtype=float),
                force_weights=np.array(d["force_weights"], dtype=float),
                force_intercept=float(d["force_intercept"]),
                torque_weights=np.array(d["torque_weights"], dtype=float),
                torque_intercept=float(d["torque_intercept"]),
                class_weights=np.array(d["class_weights"], dtype=float),
                class_present=tuple(bool(v) for v in d["class_present"]),
                dead_band=float(d["dead_band"]),
                degree=int(d["degree"]),
                ridge=float(d["ridge"]),
                n_samples=int(d["n_samples"]),
                seed=d.get("seed"),
                metrics=dict(d.get("metrics", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"malformed model file: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CalibrationModel":
        return cls.from_dict(json.loads(text))


def fit(dataset: Sequence[SensorSample], ridge: float = 1e-6, dead_band: float = 0.005,
        degree: int = 1, classifier_l2: float = 1e-6, seed: Optional[int] = None) -> CalibrationModel:
    """Fit the F_n / T_z regressors and the sign(T_z) classifier."""
    if len(dataset) < MIN_SAMPLES:
        raise CalibrationError(f"need at least {MIN_SAMPLES} samples, got {len(dataset)}")
    if ridge < 0.0:
        raise CalibrationError("ridge penalty must be nonnegative")
    A = np.array([s.deformation for s in dataset], dtype=float)
    W = np.array([s.wrench for s in dataset], dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(W))):
        raise CalibrationError("training data must be finite")

    mean = A.mean(axis=0)
    scale = A.std(axis=0)
    scale[scale == 0.0] = 1.0
    X = _expand((A - mean) / scale, degree)

    fw, fb = _ridge(X, W[:, 0], ridge)
    tw, tb = _ridge(X, W[:, 5], ridge)

    labels = sign_labels(W[:, 5], dead_band)
    present = tuple(bool(np.any(labels == c)) for c in CLASSES)
    class_weights = np.zeros((len(CLASSES), X.shape[1] + 1))
    for k, c in enumerate(CLASSES):
        target = (labels == c).astype(float)
        if present[k] and not np.all(target == 1.0):
            class_weights[k] = _logistic(X, target, classifier_l2)

    return CalibrationModel(
        mean=mean, scale=scale, force_weights=fw, force_intercept=fb,
        torque_weights=tw, torque_intercept=tb, class_weights=class_weights,
        class_present=present, dead_band=dead_band, degree=degree, ridge=ridge,
        n_samples=len(dataset), seed=seed,
    )


def evaluate(model: CalibrationModel, samples: Sequence[SensorSample]) -> dict:
    """Held-out scores in the layout of the per-finger metrics table."""
    A = np.array([s.deformation for s in samples], dtype=float)
    fn = np.array([s.normal_force for s in samples])
    tz = np.array([s.twist_torque for s in samples])
    fn_hat = model.predict_force(A)
    tz_hat = model.predict_torque(A)
    return {
        "fn_rmse": rmse(fn, fn_hat),
        "fn_r2": r_squared(fn, fn_hat),
        "tz_rmse": rmse(tz, tz_hat),
        "tz_r2": r_squared(tz, tz_hat),
        "success_rate": classification_success_rate(
            sign_labels(tz, model.dead_band).tolist(), model.predict_sign(A).tolist()),
    }


@dataclass(frozen=True)
class CalibrationSettings:
    samples: int = 2000
    train_fraction: float = 0.8
    ridge: float = 1e-6
    dead_band: float = 0.005
    degree: int = 1
    press: PressSpec = field(default_factory=PressSpec)


def calibrate_finger(objects: Sequence[ObjectShape], finger: FingerResponseModel,
                     settings: CalibrationSettings, seed: int) -> tuple:
    """Generate, split, fit and score one finger. Returns (model, dataset)."""
    rng = np.random.default_rng(seed)
    data = generate_dataset(objects, settings.samples, finger, settings.press, rng)
    train, test = train_test_split(data, rng, settings.train_fraction)
    model = fit(train, ridge=settings.ridge, dead_band=settings.dead_band,
                degree=settings.degree, seed=seed)
    return model.with_metrics(evaluate(model, test)), data
