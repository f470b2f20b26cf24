import numpy as np
import pytest

from scripts.seeding import rng_stream, stream_key


def test_same_names_same_draws():
    assert np.array_equal(rng_stream(7, "episode", 3).random(5), rng_stream(7, "episode", 3).random(5))


def test_streams_are_independent_of_each_other():
    a = rng_stream(7, "episode", 3).random(5)
    assert not np.array_equal(a, rng_stream(7, "episode", 4).random(5))
    assert not np.array_equal(a, rng_stream(8, "episode", 3).random(5))


def test_key_is_stable():
    assert stream_key("learner") == stream_key("learner")
    assert len(stream_key("a", 1)) == 4


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        rng_stream(-1, "x")
