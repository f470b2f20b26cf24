"""Grasp poses, quaternion algebra and the position/orientation losses.

Quaternions are [w, x, y, z]. Every quaternion built by normalize_quaternion is
reduced to the w >= 0 half of the double cover.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


EPSILON_Q = 1e-8
NORM_TOLERANCE = 1e-9
DEFAULT_LAMBDA = 1.0


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError(f"Vec3 components must be finite, got {self}")

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=float)

    def as_list(self):
        return [self.x, self.y, self.z]

    @classmethod
    def from_array(cls, values):
        return cls(float(values[0]), float(values[1]), float(values[2]))

    def __add__(self, other):
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other):
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, factor):
        return Vec3(self.x * factor, self.y * factor, self.z * factor)

    def norm(self):
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


ORIGIN = Vec3(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class UnitQuaternion:
    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        comps = (self.w, self.x, self.y, self.z)
        if not all(math.isfinite(c) for c in comps):
            raise ValueError(f"quaternion components must be finite, got {comps}")
        norm = math.sqrt(sum(c * c for c in comps))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"quaternion is not unit norm (|q| = {norm!r})")

    def as_array(self):
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    def as_list(self):
        return [self.w, self.x, self.y, self.z]

    def negated(self):
        return UnitQuaternion(-self.w, -self.x, -self.y, -self.z)


IDENTITY = UnitQuaternion(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class GraspPose:
    position: Vec3
    orientation: UnitQuaternion

    def to_dict(self):
        return {"position": self.position.as_list(), "orientation": self.orientation.as_list()}


@dataclass(frozen=True)
class LossWeights:
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and nonnegative, got {self.lam!r}")


class NormalizedQuaternion(NamedTuple):
    quaternion: UnitQuaternion
    fallback: bool


class PoseGradient(NamedTuple):
    position: np.ndarray
    raw_orientation: np.ndarray


def normalize_quaternion(raw):
    """Scale four raw components to unit norm.

    Inputs with norm <= EPSILON_Q fall back to the identity and set the fallback
    flag instead of raising, so an online episode never stops on a degenerate
    network output.
    """
    r = np.asarray(raw, dtype=float).reshape(4)
    if not np.all(np.isfinite(r)):
        raise ValueError(f"quaternion components must be finite, got {r.tolist()}")
    scale = float(np.abs(r).max())
    if scale == 0.0:
        return NormalizedQuaternion(IDENTITY, True)
    # r / scale has its largest component at 1, so the squared norm cannot overflow or underflow
    s = r / scale
    unit = math.sqrt(float(s @ s))
    if scale * unit <= EPSILON_Q:
        return NormalizedQuaternion(IDENTITY, True)
    q = s / unit
    if q[0] < 0:
        q = -q
    # one more pass keeps |q| - 1 well inside NORM_TOLERANCE for badly scaled inputs
    q = q / math.sqrt(float(q @ q))
    return NormalizedQuaternion(UnitQuaternion(*(float(c) for c in q)), False)


def quaternion_multiply(a, b):
    aw, ax, ay, az = a.as_list()
    bw, bx, by, bz = b.as_list()
    return normalize_quaternion([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]).quaternion


def quaternion_conjugate(q):
    return UnitQuaternion(q.w, -q.x, -q.y, -q.z)


def quaternion_from_axis_angle(axis, angle):
    a = np.asarray(axis, dtype=float)
    n = float(np.linalg.norm(a))
    if n <= EPSILON_Q or angle == 0.0:
        return IDENTITY
    a = a / n
    s = math.sin(angle / 2.0)
    return normalize_quaternion([math.cos(angle / 2.0), a[0] * s, a[1] * s, a[2] * s]).quaternion


def rotation_matrix(q):
    w, x, y, z = q.as_list()
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotate_vector(q, v):
    return rotation_matrix(q) @ np.asarray(v, dtype=float)


def position_loss(p, p_star):
    d = p.as_array() - p_star.as_array()
    return float(d @ d)


def orientation_loss(q, q_star):
    dot = float(q.as_array() @ q_star.as_array())
    return min(1.0, max(0.0, 1.0 - abs(dot)))


def total_loss(G, G_star, weights):
    return position_loss(G.position, G_star.position) + weights.lam * orientation_loss(
        G.orientation, G_star.orientation
    )


def geodesic_angle(q, q_star):
    dot = abs(float(q.as_array() @ q_star.as_array()))
    return 2.0 * math.acos(min(1.0, max(0.0, dot)))


def loss_gradients(G, G_star, weights, raw_orientation=None):
    """Gradient of total_loss w.r.t. the position and the raw (pre-normalization) quaternion.

    With q = r / |r| the orientation term is 1 - |<r, q*>| / |r|; the canonical sign
    flip does not change it. Inside the identity-fallback region the gradient is zero.
    """
    p = G.position.as_array()
    dp = 2.0 * (p - G_star.position.as_array())

    r = G.orientation.as_array() if raw_orientation is None else np.asarray(raw_orientation, dtype=float)
    dr = np.zeros(4)
    n = math.sqrt(float(r @ r))
    if weights.lam != 0.0 and n > EPSILON_Q:
        q_star = G_star.orientation.as_array()
        d = float(r @ q_star)
        sign = 1.0 if d >= 0 else -1.0
        dr = -weights.lam * sign * (q_star / n - d * r / n**3)
    return PoseGradient(dp, dr)
