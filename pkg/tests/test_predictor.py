import math

import numpy as np
import pytest

from scripts.pose_geometry import IDENTITY, LossWeights, Vec3
from scripts.predictor import (
    Architecture,
    ModelParams,
    ShapeError,
    featurize,
    finite_diff_gradient,
    forward,
    grad_pose_loss,
    grad_success_objective,
    gradcheck,
    init_params,
    load_params,
    pose_objective,
    random_instance,
    relative_error,
    save_params,
    success_objective,
    zeros_like_architecture,
)
from scripts.seeding import rng_stream
from scripts.sensing import ZERO_WRENCH, DepthImage
from scripts.world import ObjectState, Sphere


SMALL = Architecture.for_resolution(3, hidden=(6, 5))


def small_instance(seed):
    return random_instance(SMALL, rng_stream(seed, "test-instance"))


class TestArchitecture:
    def test_default_input_length(self):
        assert Architecture.for_resolution(32).input_size == 32 * 32 + 12

    def test_rejects_bad_sizes(self):
        with pytest.raises(ShapeError):
            Architecture(0, (4,))
        with pytest.raises(ShapeError):
            Architecture(10, ())
        with pytest.raises(ShapeError):
            Architecture(10, (4, 0))


class TestInitParams:
    def test_deterministic(self):
        arch = Architecture(20, (16,))
        a = init_params(arch, rng_stream(0, "init"))
        b = init_params(arch, rng_stream(0, "init"))
        assert np.array_equal(a.flatten(), b.flatten())

    def test_biases_zero_and_weights_bounded(self):
        params = init_params(Architecture(20, (16, 8)), rng_stream(0, "init"))
        for b in params.trunk_biases + [params.position_bias, params.orientation_bias, params.success_bias]:
            assert np.all(b == 0.0)
        for W in params.trunk_weights + [params.position_weight, params.orientation_weight]:
            assert np.all(np.abs(W) <= 1.0 / math.sqrt(W.shape[1]))
        assert np.all(np.abs(params.success_weight) <= 1.0 / math.sqrt(8))


class TestFeaturize:
    def test_far_depth_zero_wrench_origin_object(self):
        depth = DepthImage(4, 4, np.full((4, 4), 1.5), 1.5)
        state = ObjectState(Vec3(0, 0, 0), IDENTITY, Vec3(0, 0, 0), Vec3(0, 0, 0), Sphere(0.03))
        x = featurize(depth, ZERO_WRENCH, state)
        assert len(x) == 16 + 12
        assert np.all(x[:16] == 1.0)
        assert np.all(x[16:] == 0.0)

    def test_pure(self):
        depth = DepthImage(2, 2, np.array([[0.5, 1.0], [1.5, 0.9]]), 1.5)
        state = ObjectState(Vec3(0.01, 0.02, 0.03), IDENTITY, Vec3(0.1, 0, 0), Vec3(0, 0, 0), Sphere(0.03))
        assert np.array_equal(featurize(depth, ZERO_WRENCH, state), featurize(depth, ZERO_WRENCH, state))


class TestForward:
    def test_zero_params(self):
        out = forward(zeros_like_architecture(SMALL), np.ones(SMALL.input_size))
        assert out.success_prob == 0.5
        assert out.orientation == IDENTITY
        assert out.fallback

    def test_outputs_finite(self):
        params, x, *_ = small_instance(0)
        out = forward(params, x * 1e6)
        assert np.all(np.isfinite(out.position.as_array()))
        assert np.all(np.isfinite(out.raw_orientation))
        assert 0.0 < out.success_prob < 1.0

    def test_wrong_input_length(self):
        with pytest.raises(ShapeError):
            forward(zeros_like_architecture(SMALL), np.ones(SMALL.input_size + 1))

    def test_empty_scene_depth_feeds_zero_relief(self):
        params, x, *_ = small_instance(7)
        x[:9] = 1.0
        shifted = params.copy()
        shifted.trunk_weights[0][:, :9] += 0.5
        assert forward(shifted, x).success_prob == forward(params, x).success_prob
        x[0] = 0.5
        assert forward(shifted, x).success_prob != forward(params, x).success_prob

    def test_flat_roundtrip_keeps_outputs(self):
        params, x, *_ = small_instance(1)
        rebuilt = ModelParams.from_flat(SMALL, params.flatten())
        assert forward(rebuilt, x).success_prob == forward(params, x).success_prob

    def test_flat_vector_length_checked(self):
        with pytest.raises(ShapeError):
            ModelParams.from_flat(SMALL, np.zeros(zeros_like_architecture(SMALL).size() + 1))


class TestPoseGradient:
    def test_matches_finite_differences(self):
        for seed in range(50):
            params, x, target, weights, _ = small_instance(seed)
            analytic = grad_pose_loss(params, x, target, weights).flatten()
            numeric = finite_diff_gradient(lambda th: pose_objective(th, x, target, weights), params).flatten()
            assert relative_error(analytic, numeric) < 1e-4

    def test_target_at_prediction_zeroes_position_head(self):
        params, x, *_ = small_instance(2)
        grads = grad_pose_loss(params, x, forward(params, x).pose, LossWeights())
        assert np.all(grads.position_weight == 0.0)
        assert np.all(grads.position_bias == 0.0)

    def test_zero_lambda_zeroes_orientation_head(self):
        params, x, target, _, _ = small_instance(3)
        grads = grad_pose_loss(params, x, target, LossWeights(0.0))
        assert np.all(grads.orientation_weight == 0.0)
        assert np.all(grads.orientation_bias == 0.0)


class TestSuccessGradient:
    def test_matches_finite_differences(self):
        for seed in range(50):
            params, x, _, _, feedback = small_instance(seed)
            analytic = grad_success_objective(params, x, feedback).flatten()
            numeric = finite_diff_gradient(lambda th: success_objective(th, x, feedback), params).flatten()
            assert relative_error(analytic, numeric) < 1e-4

    def test_saturated_at_feedback_gives_zero_gradient(self):
        params, x, *_ = small_instance(4)
        params.success_bias[...] = 100.0
        assert np.all(grad_success_objective(params, x, 1).flatten() == 0.0)

    def test_bias_gradient_sign(self):
        params, x, *_ = small_instance(5)
        assert forward(params, x).success_prob > 0
        assert grad_success_objective(params, x, 0).success_bias[0] > 0

    def test_feedback_must_be_binary(self):
        params, x, *_ = small_instance(6)
        with pytest.raises(ValueError):
            grad_success_objective(params, x, 0.5)


class TestFiniteDifferences:
    def test_constant_objective(self):
        params = init_params(SMALL, rng_stream(0, "init"))
        assert np.all(finite_diff_gradient(lambda th: 4.2, params).flatten() == 0.0)

    def test_quadratic(self):
        params = zeros_like_architecture(Architecture(1, (1,)))
        flat = params.flatten()
        flat[0] = 3.0
        params = ModelParams.from_flat(params.architecture, flat)
        grad = finite_diff_gradient(lambda th: 0.5 * th.flatten()[0] ** 2, params)
        assert grad.flatten()[0] == pytest.approx(3.0, abs=1e-6)

    def test_relative_error_zero_for_zero_vectors(self):
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0

    def test_gradcheck_default_network(self):
        errors = gradcheck(instances=50, seed=0)
        assert errors["pose_loss"] < 1e-4
        assert errors["success_objective"] < 1e-4

    def test_gradcheck_sampled_coordinates(self):
        errors = gradcheck(instances=2, seed=1, architecture=Architecture.for_resolution(6, hidden=(10,)),
                           coordinates=40)
        assert max(errors.values()) < 1e-4


class TestPersistence:
    def test_save_and_load(self, tmp_path):
        params = init_params(SMALL, rng_stream(9, "init"))
        path = tmp_path / "params.json"
        save_params(params, path)
        loaded = load_params(path)
        assert loaded.architecture == params.architecture
        assert np.array_equal(loaded.flatten(), params.flatten())

    def test_rejects_unknown_format(self):
        doc = init_params(SMALL, rng_stream(9, "init")).to_dict()
        doc["format_version"] = 2
        with pytest.raises(ShapeError):
            ModelParams.from_dict(doc)
