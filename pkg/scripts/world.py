"""Object kinematics, the grasp-execution oracle, contact synthesis and the quality integral."""

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from scripts.pose_geometry import (
    IDENTITY,
    GraspPose,
    UnitQuaternion,
    Vec3,
    geodesic_angle,
    quaternion_from_axis_angle,
    quaternion_multiply,
    rotate_vector,
    rotation_matrix,
)
from scripts.seeding import rng_stream
from scripts.sensing import (
    CameraModel,
    NoiseModel,
    Sensors,
    needs_adjustment,
    sense_wrench,
    stability_metric,
)


APPROACH_OFFSET = 0.05
# gripper pointing straight down: half turn about x
TOP_DOWN = UnitQuaternion(0.0, 1.0, 0.0, 0.0)
PATTERNS = ["static", "linear", "sliding", "rotating"]

CALIBRATION_SAMPLES = 100
CALIBRATION_MULTIPLIER = 4.0
MIN_TAU = 1e-3

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")

    @property
    def kind(self):
        return "sphere"

    @property
    def half_height(self):
        return self.radius

    def to_dict(self):
        return {"kind": "sphere", "radius": self.radius}


@dataclass(frozen=True)
class Box:
    half_extents: tuple

    def __post_init__(self):
        if len(self.half_extents) != 3 or min(self.half_extents) <= 0:
            raise ValueError(f"box half-extents must be three positive numbers, got {self.half_extents}")

    @property
    def kind(self):
        return "box"

    @property
    def half_height(self):
        return self.half_extents[2]

    def to_dict(self):
        return {"kind": "box", "half_extents": list(self.half_extents)}


@dataclass(frozen=True)
class ObjectState:
    position: Vec3
    orientation: UnitQuaternion
    linear_velocity: Vec3
    angular_velocity: Vec3
    shape: object
    # seconds since the last sliding direction change
    clock: float = 0.0

    def to_dict(self):
        return {
            "position": self.position.as_list(),
            "orientation": self.orientation.as_list(),
            "linear_velocity": self.linear_velocity.as_list(),
            "angular_velocity": self.angular_velocity.as_list(),
            "shape": self.shape.to_dict(),
        }


@dataclass(frozen=True)
class MotionPattern:
    kind: str = "static"
    change_interval: float = 1.0

    def __post_init__(self):
        if self.kind not in PATTERNS:
            raise ValueError(f"motion pattern must be one of {PATTERNS}, got {self.kind!r}")
        if not self.change_interval > 0:
            raise ValueError("change_interval must be positive")


@dataclass(frozen=True)
class ContactModel:
    contact_points: int = 8
    base_grip_force: float = 2.5
    patch_half_size: float = 0.01
    force_sigma: float = 0.0
    pressure_falloff: float = 0.0

    def __post_init__(self):
        if self.contact_points < 2 or self.contact_points % 2:
            raise ValueError("contact_points must be a positive even number")
        if self.patch_half_size <= 0 or self.base_grip_force < 0 or self.force_sigma < 0:
            raise ValueError("contact model sizes and forces must be nonnegative (patch size positive)")

    @property
    def total_area(self):
        return 8.0 * self.patch_half_size ** 2


@dataclass(frozen=True)
class ContactPoint:
    location: Vec3
    f_grip: float
    dc: float
    normal: Vec3 = Vec3(0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.f_grip >= 0:
            raise ValueError(f"f_grip must be nonnegative, got {self.f_grip}")
        if not self.dc > 0:
            raise ValueError(f"dc must be positive, got {self.dc}")


@dataclass(frozen=True)
class GraspTolerances:
    r_pos: float = 0.03
    r_ang: float = 0.35
    tau_threshold: float = math.inf


class AttemptOutcome(NamedTuple):
    success: bool
    position_error: float
    orientation_error: float
    contacts: list
    wrench: object
    quality: float
    stability: float
    geometric: bool


def step_object(state, pattern, dt, rng):
    """One explicit Euler step. Sliding objects redraw their heading every change_interval."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if pattern.kind == "static":
        return state

    position = state.position + state.linear_velocity.scaled(dt)
    orientation = state.orientation
    w = state.angular_velocity.as_array()
    spin = float(np.linalg.norm(w))
    if spin > 0:
        orientation = quaternion_multiply(quaternion_from_axis_angle(w, spin * dt), orientation)

    velocity = state.linear_velocity
    clock = state.clock
    if pattern.kind == "sliding":
        clock += dt
        if clock >= pattern.change_interval:
            clock -= pattern.change_interval
            heading = rng.uniform(0.0, 2.0 * math.pi)
            speed = math.hypot(velocity.x, velocity.y)
            velocity = Vec3(speed * math.cos(heading), speed * math.sin(heading), velocity.z)
    return replace(state, position=position, orientation=orientation, linear_velocity=velocity, clock=clock)


def oracle_grasp_pose(state, approach_offset=APPROACH_OFFSET):
    return GraspPose(
        state.position + Vec3(0.0, 0.0, approach_offset),
        quaternion_multiply(state.orientation, TOP_DOWN),
    )


def _tangent_basis(normal):
    hint = np.array([0.0, 0.0, 1.0]) if abs(normal[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(normal, hint)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(normal, t1)


def _grid_shape(n):
    rows = max(d for d in range(1, int(math.isqrt(n)) + 1) if n % d == 0)
    return rows, n // rows


def _finger_contacts(midpoint, axis, state):
    """The two points where the closing line meets the object surface, with inward normals."""
    center = state.position.as_array()
    shape = state.shape
    if shape.kind == "sphere":
        oc = midpoint - center
        b = float(axis @ oc)
        disc = b * b - (float(oc @ oc) - shape.radius ** 2)
        if disc >= 0:
            root = math.sqrt(disc)
            points = [midpoint + (-b + root) * axis, midpoint + (-b - root) * axis]
            return [(p, (center - p) / shape.radius) for p in points]
        support = shape.radius
    else:
        R = rotation_matrix(state.orientation)
        half = np.asarray(shape.half_extents, dtype=float)
        origin = R.T @ (midpoint - center)
        direction = R.T @ axis
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half - origin) / direction
            t2 = (half - origin) / direction
        parallel = direction == 0
        inside = np.abs(origin) <= half
        lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        t_near, t_far = lo.max(), hi.min()
        if t_near <= t_far:
            contacts = []
            for t, face in ((t_far, int(np.argmin(hi))), (t_near, int(np.argmax(lo)))):
                local = origin + t * direction
                n_local = np.zeros(3)
                n_local[face] = -math.copysign(1.0, local[face])
                contacts.append((midpoint + t * axis, R @ n_local))
            return contacts
        support = float(np.abs(direction) @ half)
    # closing line misses the object: fingers meet its extent along the axis
    return [(center + support * axis, -axis), (center - support * axis, axis)]


def contact_forces(G, state, shape, rng, model=ContactModel(), r_pos=0.03, approach_offset=APPROACH_OFFSET):
    """K contact points on two opposing finger patches, K/2 per patch on a Gauss-Legendre grid.

    f_grip = base * max(1 - e/r_pos, 0.1) * (1 - falloff * (u^2 + v^2) / s^2) + noise,
    floored at zero, where e is the position error against the oracle pose and (u, v)
    the offset from the patch centre. dc is the product quadrature weight, so the dc sum
    is the total area and the quality sum integrates the quadratic pressure profile
    exactly. The default 2x2 grid puts points at +-s/sqrt(3) with dc = total area / K.
    """
    if shape is not state.shape:
        state = replace(state, shape=shape)
    error = (G.position - oracle_grasp_pose(state, approach_offset).position).norm()
    factor = max(1.0 - error / r_pos, 0.1)

    axis = rotate_vector(G.orientation, [1.0, 0.0, 0.0])
    midpoint = G.position.as_array() + approach_offset * rotate_vector(G.orientation, [0.0, 0.0, 1.0])

    per_patch = model.contact_points // 2
    rows, cols = _grid_shape(per_patch)
    s = model.patch_half_size
    u, wu = leggauss(rows)
    v, wv = leggauss(cols)
    uu, vv = [g.reshape(-1) * s for g in np.meshgrid(u, v, indexing="ij")]
    dc = np.outer(wu, wv).reshape(-1) * s * s
    profile = 1.0 - model.pressure_falloff * (uu ** 2 + vv ** 2) / s ** 2
    noise = rng.normal(0.0, model.force_sigma, model.contact_points)

    contacts = []
    for k, (point, normal) in enumerate(_finger_contacts(midpoint, axis, state)):
        t1, t2 = _tangent_basis(normal)
        forces = np.maximum(model.base_grip_force * factor * profile + noise[k * per_patch:(k + 1) * per_patch], 0.0)
        for du, dv, f, area in zip(uu, vv, forces, dc):
            contacts.append(ContactPoint(
                Vec3.from_array(point + du * t1 + dv * t2), float(f), float(area), Vec3.from_array(normal),
            ))
    return contacts


def grasp_quality(contacts):
    return float(sum(c.f_grip * c.dc for c in contacts))


def execute_grasp(G, state_at_closure, tolerances, noise, rng, model=ContactModel(), approach_offset=APPROACH_OFFSET):
    """Close the gripper at G on the object as it is at closure time.

    Contacts are synthesized when G is within both geometric tolerances; success also
    needs the sensed wrench to stay at or under tau_threshold.
    """
    oracle = oracle_grasp_pose(state_at_closure, approach_offset)
    position_error = (G.position - oracle.position).norm()
    orientation_error = geodesic_angle(G.orientation, oracle.orientation)
    geometric = position_error <= tolerances.r_pos and orientation_error <= tolerances.r_ang

    contacts = []
    if geometric:
        contacts = contact_forces(
            G, state_at_closure, state_at_closure.shape, rng, model, tolerances.r_pos, approach_offset
        )
    wrench = sense_wrench(contacts, noise, rng, reference=G.position)
    s_f = stability_metric(wrench)
    success = geometric and not needs_adjustment(s_f, tolerances.tau_threshold)
    return AttemptOutcome(
        success, position_error, orientation_error, contacts, wrench, grasp_quality(contacts), s_f, geometric
    )


class World:
    """Scene parameters for one episode stream: spawning, time stepping and the oracle."""

    def __init__(self, config, pattern="static", tau_threshold=None):
        self.config = config
        self.pattern = MotionPattern(pattern, config.change_interval)
        self.sensors = Sensors(
            CameraModel(
                position=Vec3(0.0, 0.0, config.camera_height),
                fov=config.fov,
                width=config.resolution,
                height=config.resolution,
            ),
            NoiseModel(config.depth_sigma, config.wrench_sigma),
            config.far_value,
        )
        self.contact_model = ContactModel(
            config.contact_points,
            config.base_grip_force,
            config.patch_half_size,
            config.force_sigma,
            config.pressure_falloff,
        )
        tau = config.tau_threshold if tau_threshold is None else tau_threshold
        self.tolerances = GraspTolerances(config.r_pos, config.r_ang, math.inf if tau is None else tau)

    @classmethod
    def from_config(cls, config, pattern, seed):
        tau = config.tau_threshold
        if tau is None:
            tau = calibrate_tau_threshold(config, seed)
        return cls(config, pattern, tau)

    @property
    def tau_threshold(self):
        return self.tolerances.tau_threshold

    def steps(self, duration):
        return int(round(duration / self.config.dt))

    def spawn(self, rng):
        """One object on the table, inside the workspace square, with its motion drawn for the pattern.

        Every draw is taken whatever the pattern, so scenarios share spawn positions per seed.
        """
        c = self.config
        kind = c.shapes[int(rng.integers(len(c.shapes)))]
        size = float(rng.uniform(*c.size_range))
        aspect = rng.uniform(0.6, 1.0, 2)
        shape = Sphere(size) if kind == "sphere" else Box((size, size * float(aspect[0]), size * float(aspect[1])))
        x, y = rng.uniform(-c.workspace, c.workspace, 2)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        speed = c.speed * rng.uniform(1.0 - c.speed_jitter, 1.0 + c.speed_jitter)
        phase = rng.uniform(0.0, c.change_interval)

        velocity = Vec3(0.0, 0.0, 0.0)
        spin = Vec3(0.0, 0.0, 0.0)
        if self.pattern.kind in ("linear", "sliding"):
            velocity = Vec3(speed * math.cos(heading), speed * math.sin(heading), 0.0)
        elif self.pattern.kind == "rotating":
            spin = Vec3(0.0, 0.0, c.angular_speed)
        return ObjectState(
            Vec3(float(x), float(y), shape.half_height), IDENTITY, velocity, spin, shape,
            phase if self.pattern.kind == "sliding" else 0.0,
        )

    def advance(self, state, duration, rng):
        for _ in range(self.steps(duration)):
            state = step_object(state, self.pattern, self.config.dt, rng)
        return state

    def observe(self, state, rng):
        return self.sensors.observe([state], rng)

    def attempt(self, pose, state_at_closure, rng):
        return execute_grasp(
            pose, state_at_closure, self.tolerances, self.sensors.noise, rng,
            self.contact_model, self.config.approach_offset,
        )


def calibrate_tau_threshold(config, seed, samples=CALIBRATION_SAMPLES, multiplier=CALIBRATION_MULTIPLIER):
    """multiplier x the median S_F of static grasps near the oracle pose.

    Each calibration grasp perturbs the oracle pose by Gaussian errors of r_pos/3 per
    axis and a random-axis turn of r_ang/3.
    """
    world = World(config, "static", tau_threshold=math.inf)
    values = []
    for i in range(samples):
        rng = rng_stream(seed, "calibration", i)
        state = world.spawn(rng)
        oracle = oracle_grasp_pose(state, config.approach_offset)
        offset = Vec3.from_array(rng.normal(0.0, config.r_pos / 3.0, 3))
        turn = quaternion_from_axis_angle(rng.normal(0.0, 1.0, 3), float(rng.normal(0.0, config.r_ang / 3.0)))
        pose = GraspPose(oracle.position + offset, quaternion_multiply(turn, oracle.orientation))
        contacts = contact_forces(pose, state, state.shape, rng, world.contact_model, config.r_pos, config.approach_offset)
        values.append(stability_metric(sense_wrench(contacts, world.sensors.noise, rng, reference=pose.position)))
    tau = max(MIN_TAU, multiplier * float(np.median(values)))
    logger.info("calibrated tau_threshold %.4f from %d static grasps (seed %d)", tau, samples, seed)
    return tau
