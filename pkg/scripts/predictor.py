"""The grasp predictor f_theta: a tanh MLP trunk with position, orientation and success heads.

Feature vector layout (length width*height + 12):
    depth / far_value (row-major) | wrench fx..tz in newtons / newton-metres |
    object position / FEATURE_LENGTH_UNIT | object velocity / FEATURE_SPEED_UNIT

The first layer reads the depth block as relief above the far plane (1 - depth/far_value),
so an empty scene feeds it zeros and the trunk input is dominated by what varies
between scenes.

All matrix-vector products go through numpy.dot in row-major order, so forward and
gradients are reproducible run to run for a given numpy build.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from scripts.pose_geometry import GraspPose, LossWeights, Vec3, loss_gradients, normalize_quaternion, total_loss
from scripts.seeding import rng_stream


FORMAT_VERSION = 1
DEFAULT_HIDDEN = (64, 32)
FEATURE_LENGTH_UNIT = 0.02
FEATURE_SPEED_UNIT = 0.05
FEATURE_FORCE_UNIT = 1.0
EXTRA_FEATURES = 12
SIGMOID_CLIP = 36.0
FD_STEP = 1e-6
GRADCHECK_TOLERANCE = 1e-4
VERIFY_RESOLUTION = 8
VERIFY_HIDDEN = (12, 8)

ARRAY_NAMES = [
    "position_weight", "position_bias",
    "orientation_weight", "orientation_bias",
    "success_weight", "success_bias",
]

logger = logging.getLogger(__name__)


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    input_size: int
    hidden: tuple = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.input_size < 1:
            raise ShapeError(f"input size must be >= 1, got {self.input_size}")
        if not self.hidden or any(int(h) < 1 for h in self.hidden):
            raise ShapeError(f"need at least one hidden layer with width >= 1, got {self.hidden}")

    @classmethod
    def for_resolution(cls, width, height=None, hidden=DEFAULT_HIDDEN):
        return cls(width * (height or width) + EXTRA_FEATURES, tuple(hidden))

    def to_dict(self):
        return {"input_size": self.input_size, "hidden": list(self.hidden)}


@dataclass
class ModelParams:
    """All trainable parameters theta. Gradients use the same container."""

    architecture: Architecture
    trunk_weights: list
    trunk_biases: list
    position_weight: np.ndarray
    position_bias: np.ndarray
    orientation_weight: np.ndarray
    orientation_bias: np.ndarray
    success_weight: np.ndarray
    success_bias: np.ndarray

    def arrays(self):
        out = []
        for W, b in zip(self.trunk_weights, self.trunk_biases):
            out.extend([W, b])
        out.extend(getattr(self, name) for name in ARRAY_NAMES)
        return out

    def flatten(self):
        return np.concatenate([a.reshape(-1) for a in self.arrays()])

    @classmethod
    def from_flat(cls, architecture, flat):
        template = zeros_like_architecture(architecture)
        pieces = []
        offset = 0
        for a in template.arrays():
            pieces.append(np.array(flat[offset:offset + a.size], dtype=float).reshape(a.shape))
            offset += a.size
        if offset != len(flat):
            raise ShapeError(f"flat vector has {len(flat)} entries, architecture needs {offset}")
        return cls._from_arrays(architecture, pieces)

    @classmethod
    def _from_arrays(cls, architecture, arrays):
        n = len(architecture.hidden)
        trunk = arrays[:2 * n]
        heads = arrays[2 * n:]
        return cls(architecture, list(trunk[0::2]), list(trunk[1::2]), *heads)

    def copy(self):
        return ModelParams._from_arrays(self.architecture, [a.copy() for a in self.arrays()])

    def scaled_add(self, other, factor):
        return ModelParams._from_arrays(
            self.architecture, [a + factor * b for a, b in zip(self.arrays(), other.arrays())]
        )

    def all_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def size(self):
        return sum(a.size for a in self.arrays())

    def to_dict(self):
        names = []
        for i in range(len(self.trunk_weights)):
            names.extend([f"trunk_weight_{i}", f"trunk_bias_{i}"])
        names.extend(ARRAY_NAMES)
        return {
            "format_version": FORMAT_VERSION,
            "architecture": self.architecture.to_dict(),
            "arrays": {
                name: {"shape": list(a.shape), "values": a.reshape(-1).tolist()}
                for name, a in zip(names, self.arrays())
            },
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format_version") != FORMAT_VERSION:
            raise ShapeError(f"unsupported parameter format {doc.get('format_version')!r}")
        arch = Architecture(doc["architecture"]["input_size"], tuple(doc["architecture"]["hidden"]))
        arrays = [np.array(entry["values"], dtype=float).reshape(entry["shape"]) for entry in doc["arrays"].values()]
        params = cls._from_arrays(arch, arrays)
        expected = [a.shape for a in zeros_like_architecture(arch).arrays()]
        if [a.shape for a in params.arrays()] != expected:
            raise ShapeError("parameter shapes do not match the stored architecture")
        return params


class PredictorOutput(NamedTuple):
    position: Vec3
    raw_orientation: np.ndarray
    orientation: object
    hidden: np.ndarray
    success_prob: float
    fallback: bool

    @property
    def pose(self):
        return GraspPose(self.position, self.orientation)


def zeros_like_architecture(architecture):
    sizes = [architecture.input_size, *architecture.hidden]
    h = sizes[-1]
    return ModelParams(
        architecture,
        [np.zeros((sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1)],
        [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)],
        np.zeros((3, h)), np.zeros(3),
        np.zeros((4, h)), np.zeros(4),
        np.zeros(h), np.zeros(1),
    )


def init_params(architecture, rng):
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    params = zeros_like_architecture(architecture)
    for W in params.trunk_weights + [params.position_weight, params.orientation_weight]:
        bound = 1.0 / math.sqrt(W.shape[1])
        W[...] = rng.uniform(-bound, bound, W.shape)
    bound = 1.0 / math.sqrt(params.success_weight.shape[0])
    params.success_weight[...] = rng.uniform(-bound, bound, params.success_weight.shape)
    return params


def featurize(depth, wrench, object_state):
    return np.concatenate([
        depth.depths.reshape(-1) / depth.far_value,
        wrench.as_array() / FEATURE_FORCE_UNIT,
        object_state.position.as_array() / FEATURE_LENGTH_UNIT,
        object_state.linear_velocity.as_array() / FEATURE_SPEED_UNIT,
    ])


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-min(SIGMOID_CLIP, max(-SIGMOID_CLIP, z))))


def _relief(x):
    n_depth = x.size - EXTRA_FEATURES
    if n_depth <= 0:
        return x
    out = x.copy()
    out[:n_depth] = 1.0 - out[:n_depth]
    return out


def _trunk(params, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (params.architecture.input_size,):
        raise ShapeError(f"input has shape {x.shape}, expected ({params.architecture.input_size},)")
    acts = [_relief(x)]
    for W, b in zip(params.trunk_weights, params.trunk_biases):
        acts.append(np.tanh(W.dot(acts[-1]) + b))
    return acts


def _heads(params, h):
    p = params.position_weight.dot(h) + params.position_bias
    r = params.orientation_weight.dot(h) + params.orientation_bias
    z = float(params.success_weight.dot(h) + params.success_bias[0])
    return p, r, z


def forward(params, x):
    acts = _trunk(params, x)
    h = acts[-1]
    p, r, z = _heads(params, h)
    q, fallback = normalize_quaternion(r)
    return PredictorOutput(Vec3.from_array(p), r, q, h, sigmoid(z), fallback)


def _backprop_trunk(params, acts, d_h, grads):
    delta = d_h * (1.0 - acts[-1] ** 2)
    for layer in range(len(params.trunk_weights) - 1, -1, -1):
        grads.trunk_weights[layer][...] = np.outer(delta, acts[layer])
        grads.trunk_biases[layer][...] = delta
        if layer > 0:
            delta = params.trunk_weights[layer].T.dot(delta) * (1.0 - acts[layer] ** 2)
    return grads


def grad_pose_loss(params, x, G_star, weights):
    """Gradient of total_loss(forward(x), G_star) over every parameter, normalization Jacobian included."""
    acts = _trunk(params, x)
    h = acts[-1]
    p, r, _ = _heads(params, h)
    q, _ = normalize_quaternion(r)
    gp, gr = loss_gradients(GraspPose(Vec3.from_array(p), q), G_star, weights, raw_orientation=r)

    grads = zeros_like_architecture(params.architecture)
    grads.position_weight[...] = np.outer(gp, h)
    grads.position_bias[...] = gp
    grads.orientation_weight[...] = np.outer(gr, h)
    grads.orientation_bias[...] = gr
    d_h = params.position_weight.T.dot(gp) + params.orientation_weight.T.dot(gr)
    return _backprop_trunk(params, acts, d_h, grads)


def success_objective(params, x, feedback):
    return (forward(params, x).success_prob - feedback) ** 2


def grad_success_objective(params, x, feedback):
    """Gradient of (S(G) - feedback)^2 through the sigmoid, the success head and the trunk."""
    if feedback not in (0, 1):
        raise ValueError(f"feedback must be 0 or 1, got {feedback!r}")
    acts = _trunk(params, x)
    h = acts[-1]
    _, _, z = _heads(params, h)
    s = sigmoid(z)
    g = 0.0 if abs(z) >= SIGMOID_CLIP else 2.0 * (s - feedback) * s * (1.0 - s)

    grads = zeros_like_architecture(params.architecture)
    grads.success_weight[...] = g * h
    grads.success_bias[...] = g
    return _backprop_trunk(params, acts, g * params.success_weight, grads)


def pose_objective(params, x, G_star, weights):
    out = forward(params, x)
    return total_loss(out.pose, G_star, weights)


def finite_diff_gradient(objective, params, step=FD_STEP, indices=None):
    """Central differences of objective(params) per parameter; entries outside `indices` stay zero."""
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    flat = params.flatten()
    grad = np.zeros_like(flat)
    for j in range(flat.size) if indices is None else indices:
        saved = flat[j]
        flat[j] = saved + step
        f_plus = objective(ModelParams.from_flat(params.architecture, flat))
        flat[j] = saved - step
        f_minus = objective(ModelParams.from_flat(params.architecture, flat))
        flat[j] = saved
        grad[j] = (f_plus - f_minus) / (2.0 * step)
    return ModelParams.from_flat(params.architecture, grad)


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=float).reshape(-1)
    n = np.asarray(numeric, dtype=float).reshape(-1)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def random_instance(architecture, rng):
    params = init_params(architecture, rng)
    for b in params.trunk_biases + [params.position_bias, params.orientation_bias, params.success_bias]:
        b[...] = rng.normal(0.0, 0.1, b.shape)
    n_depth = architecture.input_size - EXTRA_FEATURES
    x = np.concatenate([rng.uniform(0.3, 1.0, n_depth), rng.normal(0.0, 1.0, EXTRA_FEATURES)])
    target = GraspPose(
        Vec3.from_array(rng.normal(0.0, 0.2, 3)),
        normalize_quaternion(rng.normal(0.0, 1.0, 4)).quaternion,
    )
    weights = LossWeights(float(rng.uniform(0.5, 2.0)))
    feedback = int(rng.integers(0, 2))
    return params, x, target, weights, feedback


def gradcheck(instances=50, seed=0, architecture=None, step=FD_STEP, coordinates=None):
    """Max relative error of both analytic gradients against central differences.

    `coordinates` limits each check to that many randomly chosen parameters, which
    keeps the full-size architecture affordable.
    """
    architecture = architecture or Architecture.for_resolution(VERIFY_RESOLUTION, hidden=VERIFY_HIDDEN)
    errors = {"pose_loss": 0.0, "success_objective": 0.0}
    for i in range(instances):
        rng = rng_stream(seed, "gradcheck", i)
        params, x, target, weights, feedback = random_instance(architecture, rng)
        indices = None
        if coordinates is not None:
            indices = sorted(rng.choice(params.size(), size=min(coordinates, params.size()), replace=False))

        analytic = grad_pose_loss(params, x, target, weights).flatten()
        numeric = finite_diff_gradient(lambda th: pose_objective(th, x, target, weights), params, step, indices)
        pose_err = relative_error(_select(analytic, indices), _select(numeric.flatten(), indices))

        analytic = grad_success_objective(params, x, feedback).flatten()
        numeric = finite_diff_gradient(lambda th: success_objective(th, x, feedback), params, step, indices)
        success_err = relative_error(_select(analytic, indices), _select(numeric.flatten(), indices))

        errors["pose_loss"] = max(errors["pose_loss"], pose_err)
        errors["success_objective"] = max(errors["success_objective"], success_err)
        logger.debug("gradcheck instance %d: pose %.3e success %.3e", i, pose_err, success_err)
    return errors


def _select(values, indices):
    return values if indices is None else values[indices]


def save_params(params, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(params.to_dict(), f)
        f.write("\n")


def load_params(path):
    with open(path, "r", encoding="utf-8") as f:
        return ModelParams.from_dict(json.load(f))
