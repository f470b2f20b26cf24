"""Learning strategies: self-supervised online, frozen supervised, and a reward-gated baseline.

The reward baseline is a simplified stand-in for deep RL: exploration noise on the
head weights plus a success-objective step gated on reward. Reports label it
"reward_baseline (simplified)".
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from scripts.pose_geometry import (
    GraspPose,
    LossWeights,
    Vec3,
    quaternion_from_axis_angle,
    quaternion_multiply,
    total_loss,
)
from scripts.predictor import (
    forward,
    grad_pose_loss,
    grad_success_objective,
)


REWARD_NOISE_SIGMA = 0.01
REWARD_BASELINE_LABEL = "reward_baseline (simplified)"

logger = logging.getLogger(__name__)


class LearnerKind(str, Enum):
    SSL_ONLINE = "ssl_online"
    SUPERVISED_FROZEN = "supervised_frozen"
    REWARD_BASELINE = "reward_baseline"

    @property
    def label(self):
        return REWARD_BASELINE_LABEL if self is LearnerKind.REWARD_BASELINE else self.value


@dataclass(frozen=True)
class Hyperparams:
    # step sizes of 0 are allowed here so updates can be checked as identities; run configs require > 0
    eta: float = 1e-3
    pose_eta: float = 1e-2
    weights: LossWeights = field(default_factory=LossWeights)
    epsilon_explore: float = 0.1
    pretrain_epochs: int = 40
    pretrain_samples: int = 250
    explore_position_sigma: float = 0.01
    explore_angle_sigma: float = 0.1

    def __post_init__(self):
        for name in ("eta", "pose_eta"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value!r}")
        if not 0.0 <= self.epsilon_explore <= 1.0:
            raise ValueError(f"epsilon_explore must lie in [0, 1], got {self.epsilon_explore!r}")
        if self.pretrain_epochs < 0:
            raise ValueError("pretrain_epochs must be >= 0")
        if self.explore_position_sigma < 0 or self.explore_angle_sigma < 0:
            raise ValueError("exploration sigmas must be nonnegative")


@dataclass(frozen=True)
class PseudoLabel:
    pose: GraspPose
    episode: Optional[int] = None


class LearnStep(NamedTuple):
    pseudo_label: Optional[PseudoLabel]
    success_objective: float
    pose_loss: Optional[float]


def ssl_update(params, x, feedback, eta):
    """theta <- theta - eta * grad (S(G) - feedback)^2, through the success head and shared trunk."""
    if eta == 0:
        return params.copy()
    return params.scaled_add(grad_success_objective(params, x, feedback), -eta)


def pose_update(params, x, pseudo_label, h):
    """One pose-loss step of size h.pose_eta toward the label."""
    if h.pose_eta == 0:
        return params.copy()
    return params.scaled_add(grad_pose_loss(params, x, pseudo_label.pose, h.weights), -h.pose_eta)


def self_label(outcome, executed_pose, episode=None):
    if not outcome.success:
        return None
    return PseudoLabel(executed_pose, episode)


def dataset_loss(params, dataset, weights):
    return float(np.mean([total_loss(forward(params, x).pose, G, weights) for x, G in dataset]))


def supervised_pretrain(params, dataset, h):
    """pretrain_epochs passes of pose_update over (features, oracle pose) pairs, in dataset order."""
    if not dataset:
        raise ValueError("supervised pretraining needs a non-empty dataset")
    params = params.copy()
    for epoch in range(h.pretrain_epochs):
        for x, G in dataset:
            params = pose_update(params, x, PseudoLabel(G), h)
        if logger.isEnabledFor(logging.DEBUG):
            logger.debug("pretrain epoch %d: mean loss %.6f", epoch + 1, dataset_loss(params, dataset, h.weights))
    return params


def reward_baseline_update(params, x, feedback, h, rng):
    """Exploration noise on the head weights with probability epsilon, then a reward-gated step.

    The uniform draw is taken on every call so the stream advances identically
    whatever epsilon is.
    """
    updated = params.copy()
    if rng.random() < h.epsilon_explore:
        for W in (updated.position_weight, updated.orientation_weight, updated.success_weight):
            W += rng.normal(0.0, REWARD_NOISE_SIGMA, W.shape)
    if feedback == 1:
        updated = ssl_update(updated, x, 1, h.eta)
    return updated


def explore_pose(pose, h, rng):
    offset = rng.normal(0.0, h.explore_position_sigma, 3)
    axis = rng.normal(0.0, 1.0, 3)
    angle = float(rng.normal(0.0, h.explore_angle_sigma))
    turn = quaternion_from_axis_angle(axis, angle)
    return GraspPose(pose.position + Vec3.from_array(offset), quaternion_multiply(turn, pose.orientation))


class Learner:
    """One learner instance: owns its parameters and its rng stream."""

    def __init__(self, kind, params, hyperparams, rng):
        self.kind = LearnerKind(kind)
        self.params = params.copy()
        self.hyperparams = hyperparams
        self.rng = rng
        self.fallbacks = 0

    def act(self, x):
        out = forward(self.params, x)
        if out.fallback:
            self.fallbacks += 1
        pose = out.pose
        if self.kind is LearnerKind.SSL_ONLINE:
            pose = explore_pose(pose, self.hyperparams, self.rng)
        return out, pose

    def learn(self, x, outcome, executed_pose, episode=None):
        h = self.hyperparams
        feedback = 1 if outcome.success else 0
        label = self_label(outcome, executed_pose, episode)
        out = forward(self.params, x)
        objective = (out.success_prob - feedback) ** 2
        pose_loss = total_loss(out.pose, label.pose, h.weights) if label is not None else None

        if self.kind is LearnerKind.SSL_ONLINE:
            if label is not None:
                self.params = pose_update(self.params, x, label, h)
            self.params = ssl_update(self.params, x, feedback, h.eta)
        elif self.kind is LearnerKind.REWARD_BASELINE:
            self.params = reward_baseline_update(self.params, x, feedback, h, self.rng)
        return LearnStep(label, objective, pose_loss)
