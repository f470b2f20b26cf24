from scripts.pose_geometry import normalize_quaternion


def random_unit_quaternion(rng):
    return normalize_quaternion(rng.normal(0.0, 1.0, 4)).quaternion
