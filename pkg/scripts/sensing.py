"""Synthetic depth camera, gripper force/torque sensing and the wrench stability metric."""

import math
from dataclasses import dataclass

import numpy as np

from scripts.pose_geometry import Vec3, rotation_matrix


DEFAULT_RESOLUTION = 32
DEFAULT_FAR_VALUE = 1.5
DEFAULT_FOV = 0.7
MIN_DEPTH = 1e-6

WRENCH_FIELDS = ["fx", "fy", "fz", "tx", "ty", "tz"]


@dataclass(frozen=True)
class DepthImage:
    width: int
    height: int
    depths: np.ndarray
    far_value: float

    def __post_init__(self):
        if self.depths.shape != (self.height, self.width):
            raise ValueError(f"depth grid is {self.depths.shape}, expected {(self.height, self.width)}")
        if np.any(self.depths <= 0) or np.any(self.depths > self.far_value):
            raise ValueError("depths must lie in (0, far_value]")

    def to_list(self):
        return self.depths.reshape(-1).tolist()


@dataclass(frozen=True)
class Wrench:
    fx: float = 0.0
    fy: float = 0.0
    fz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_list()):
            raise ValueError(f"wrench components must be finite, got {self.as_list()}")

    def as_list(self):
        return [self.fx, self.fy, self.fz, self.tx, self.ty, self.tz]

    def as_array(self):
        return np.array(self.as_list(), dtype=float)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(v) for v in values))


ZERO_WRENCH = Wrench()


@dataclass(frozen=True)
class CameraModel:
    position: Vec3 = Vec3(0.0, 0.0, 1.0)
    direction: Vec3 = Vec3(0.0, 0.0, -1.0)
    fov: float = DEFAULT_FOV
    width: int = DEFAULT_RESOLUTION
    height: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        if abs(self.direction.norm() - 1.0) > 1e-9:
            raise ValueError("camera direction must be unit norm")
        if not 0.0 < self.fov < math.pi:
            raise ValueError(f"fov must lie in (0, pi), got {self.fov}")
        if self.width < 1 or self.height < 1:
            raise ValueError("camera resolution must be positive")

    def rays(self):
        """Unit ray directions for every pixel, row-major, row 0 at the top of the image."""
        forward = self.direction.as_array()
        hint = np.array([0.0, 1.0, 0.0]) if abs(forward[1]) < 0.99 else np.array([1.0, 0.0, 0.0])
        right = np.cross(forward, hint)
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)

        half = math.tan(self.fov / 2.0)
        u = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * half
        v = (1.0 - 2.0 * (np.arange(self.height) + 0.5) / self.height) * half * self.height / self.width
        uu, vv = np.meshgrid(u, v)
        dirs = forward[None, :] + uu.reshape(-1, 1) * right[None, :] + vv.reshape(-1, 1) * up[None, :]
        return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


@dataclass(frozen=True)
class NoiseModel:
    depth_sigma: float = 0.0
    wrench_sigma: float = 0.0
    stream: str = "sensors"

    def __post_init__(self):
        if self.depth_sigma < 0 or self.wrench_sigma < 0:
            raise ValueError("noise sigmas must be nonnegative")


def sphere_hits(origin, dirs, center, radius):
    oc = origin - center
    b = dirs @ oc
    c = float(oc @ oc) - radius * radius
    disc = b * b - c
    hit = disc >= 0
    root = np.sqrt(np.where(hit, disc, 0.0))
    t_near = -b - root
    t_far = -b + root
    t = np.where(t_near > 0, t_near, t_far)
    return np.where(hit & (t > 0), t, np.inf)


def box_hits(origin, dirs, center, half_extents):
    lo = center - half_extents
    hi = center + half_extents
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin) / dirs
        t2 = (hi - origin) / dirs
    parallel = dirs == 0
    inside_slab = (origin >= lo) & (origin <= hi)
    t_min = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
    t_max = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
    t_near = t_min.max(axis=1)
    t_far = t_max.min(axis=1)
    hit = (t_near <= t_far) & (t_far > 0)
    t = np.where(t_near > 0, t_near, t_far)
    return np.where(hit, t, np.inf)


def render_depth(objects, camera, noise, rng, far_value=DEFAULT_FAR_VALUE):
    """Ray-cast the scene: nearest sphere/box hit per pixel, background at far_value.

    Boxes are intersected in their own frame, so a turning box changes its image.
    Noise is added to hit pixels only, then clamped into (0, far_value].
    """
    origin = camera.position.as_array()
    dirs = camera.rays()
    nearest = np.full(dirs.shape[0], np.inf)
    for obj in objects:
        center = obj.position.as_array()
        if obj.shape.kind == "sphere":
            t = sphere_hits(origin, dirs, center, obj.shape.radius)
        else:
            R = rotation_matrix(obj.orientation)
            t = box_hits(R.T @ (origin - center), dirs @ R, np.zeros(3), np.asarray(obj.shape.half_extents, dtype=float))
        nearest = np.minimum(nearest, t)

    hit = np.isfinite(nearest) & (nearest < far_value)
    depths = np.full(dirs.shape[0], float(far_value))
    depths[hit] = nearest[hit]
    if noise.depth_sigma > 0 and hit.any():
        depths[hit] += rng.normal(0.0, noise.depth_sigma, int(hit.sum()))
    depths = np.clip(depths, MIN_DEPTH, far_value)
    return DepthImage(camera.width, camera.height, depths.reshape(camera.height, camera.width), float(far_value))


def stability_metric(F):
    return F.fx ** 2 + F.fy ** 2 + F.fz ** 2 + F.tx ** 2 + F.ty ** 2 + F.tz ** 2


def needs_adjustment(s_f, tau_threshold):
    return s_f > tau_threshold


def sense_wrench(contacts, noise, rng, reference=None):
    """Net force and torque of the contact forces, plus per-axis Gaussian noise.

    Each contact pushes with f_grip along its inward normal. Torques are taken about
    `reference` (the wrist), or about the contact centroid when none is given.
    """
    force = np.zeros(3)
    torque = np.zeros(3)
    if contacts:
        locations = np.array([c.location.as_list() for c in contacts])
        ref = locations.mean(axis=0) if reference is None else reference.as_array()
        for loc, c in zip(locations, contacts):
            f = c.f_grip * c.normal.as_array()
            force += f
            torque += np.cross(loc - ref, f)
    values = np.concatenate([force, torque])
    if noise.wrench_sigma > 0:
        values = values + rng.normal(0.0, noise.wrench_sigma, 6)
    return Wrench.from_array(values)


@dataclass(frozen=True)
class Sensors:
    camera: CameraModel
    noise: NoiseModel
    far_value: float = DEFAULT_FAR_VALUE

    def observe(self, objects, rng):
        return render_depth(objects, self.camera, self.noise, rng, far_value=self.far_value)

    def sense(self, contacts, rng, reference=None):
        return sense_wrench(contacts, self.noise, rng, reference=reference)
