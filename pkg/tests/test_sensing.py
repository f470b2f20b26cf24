import numpy as np
import pytest

from scripts.pose_geometry import IDENTITY, Vec3, quaternion_from_axis_angle
from scripts.seeding import rng_stream
from scripts.sensing import (
    ZERO_WRENCH,
    CameraModel,
    NoiseModel,
    Wrench,
    needs_adjustment,
    render_depth,
    sense_wrench,
    stability_metric,
)
from scripts.world import Box, ContactPoint, ObjectState, Sphere


def object_at(position, shape, orientation=IDENTITY):
    return ObjectState(Vec3(*position), orientation, Vec3(0, 0, 0), Vec3(0, 0, 0), shape)


class TestRenderDepth:
    def test_empty_scene_is_all_far(self):
        depth = render_depth([], CameraModel(), NoiseModel(depth_sigma=0.01), rng_stream(0, "depth"))
        assert np.all(depth.depths == depth.far_value)

    def test_sphere_on_axis_center_pixel(self):
        camera = CameraModel(width=9, height=9)
        depth = render_depth([object_at((0, 0, 0), Sphere(0.1))], camera, NoiseModel(), rng_stream(0, "depth"))
        assert depth.depths[4, 4] == pytest.approx(0.9, abs=1e-12)

    def test_sphere_matches_analytic_rays(self):
        camera = CameraModel()
        depth = render_depth([object_at((0, 0, 0), Sphere(0.1))], camera, NoiseModel(), rng_stream(0, "depth"))
        origin = camera.position.as_array()
        expected = []
        for d in camera.rays():
            b = d @ origin
            disc = b * b - (origin @ origin - 0.1 * 0.1)
            expected.append(-b - np.sqrt(disc) if disc >= 0 else depth.far_value)
        assert np.allclose(depth.depths.reshape(-1), expected, atol=1e-12)
        assert (depth.depths < depth.far_value).sum() > 0

    def test_box_top_face_depth(self):
        camera = CameraModel(width=9, height=9)
        box = object_at((0, 0, 0.02), Box((0.05, 0.04, 0.02)))
        depth = render_depth([box], camera, NoiseModel(), rng_stream(0, "depth"))
        assert depth.depths[4, 4] == pytest.approx(1.0 - 0.04, abs=1e-12)

    def test_turning_box_changes_image(self):
        camera = CameraModel(width=16, height=16)
        shape = Box((0.12, 0.04, 0.02))
        flat = render_depth([object_at((0, 0, 0.02), shape)], camera, NoiseModel(), rng_stream(0, "depth"))
        turned = object_at((0, 0, 0.02), shape, quaternion_from_axis_angle([0, 0, 1], np.pi / 2))
        rotated = render_depth([turned], camera, NoiseModel(), rng_stream(0, "depth"))
        assert not np.array_equal(flat.depths, rotated.depths)
        assert np.allclose(flat.depths, rotated.depths.T, atol=1e-9)

    def test_same_seed_same_image(self):
        scene = [object_at((0.02, -0.03, 0.03), Sphere(0.03))]
        noise = NoiseModel(depth_sigma=0.01)
        a = render_depth(scene, CameraModel(), noise, rng_stream(4, "depth"))
        b = render_depth(scene, CameraModel(), noise, rng_stream(4, "depth"))
        assert np.array_equal(a.depths, b.depths)

    def test_noise_only_on_hits_and_clamped(self):
        scene = [object_at((0, 0, 0.03), Sphere(0.03))]
        depth = render_depth(scene, CameraModel(), NoiseModel(depth_sigma=0.5), rng_stream(1, "depth"))
        clean = render_depth(scene, CameraModel(), NoiseModel(), rng_stream(1, "depth"))
        background = clean.depths == clean.far_value
        assert np.all(depth.depths[background] == depth.far_value)
        assert np.all(depth.depths > 0) and np.all(depth.depths <= depth.far_value)


class TestStability:
    def test_examples(self):
        assert stability_metric(ZERO_WRENCH) == 0
        assert stability_metric(Wrench(1, 1, 1, 1, 1, 1)) == 6
        assert stability_metric(Wrench(3, 4, 0, 0, 0, 0)) == 25

    def test_six_term_sum_on_random_wrenches(self, rng):
        for _ in range(1000):
            values = rng.normal(0.0, 10.0, 6)
            expected = sum(v * v for v in values)
            assert abs(stability_metric(Wrench.from_array(values)) - expected) <= 1e-12 * max(1.0, expected)

    def test_zero_only_for_the_zero_wrench(self, rng):
        for axis in range(6):
            for value in (1e-100, -1e-3, 7.0):
                values = np.zeros(6)
                values[axis] = value
                assert stability_metric(Wrench.from_array(values)) > 0
        for _ in range(200):
            assert stability_metric(Wrench.from_array(rng.normal(0.0, 1.0, 6))) > 0

    def test_invariant_under_component_sign_flips(self, rng):
        for _ in range(20):
            values = rng.normal(0.0, 5.0, 6)
            s_f = stability_metric(Wrench.from_array(values))
            for pattern in range(64):
                signs = np.array([-1.0 if pattern >> i & 1 else 1.0 for i in range(6)])
                assert stability_metric(Wrench.from_array(signs * values)) == s_f

    def test_needs_adjustment_is_strict(self):
        assert needs_adjustment(25, 10)
        assert not needs_adjustment(0, 10)
        assert not needs_adjustment(10, 10)


class TestSenseWrench:
    def test_no_contacts_zero_noise(self):
        assert sense_wrench([], NoiseModel(), rng_stream(0, "wrench")) == ZERO_WRENCH

    def test_single_contact(self):
        contact = ContactPoint(Vec3(0.1, 0.2, 0.3), 2.0, 1e-4, Vec3(0.0, 0.0, 1.0))
        wrench = sense_wrench([contact], NoiseModel(), rng_stream(0, "wrench"))
        assert wrench == Wrench(0.0, 0.0, 2.0, 0.0, 0.0, 0.0)

    def test_torque_about_reference(self):
        contact = ContactPoint(Vec3(0.1, 0.0, 0.0), 2.0, 1e-4, Vec3(0.0, 1.0, 0.0))
        wrench = sense_wrench([contact], NoiseModel(), rng_stream(0, "wrench"), reference=Vec3(0, 0, 0))
        assert np.allclose(wrench.as_list(), [0, 2, 0, 0, 0, 0.2], atol=1e-15)

    def test_same_seed_same_wrench(self):
        contacts = [ContactPoint(Vec3(0.01, 0, 0), 1.5, 1e-4, Vec3(-1, 0, 0))]
        noise = NoiseModel(wrench_sigma=0.1)
        a = sense_wrench(contacts, noise, rng_stream(2, "wrench"))
        b = sense_wrench(contacts, noise, rng_stream(2, "wrench"))
        assert a == b
