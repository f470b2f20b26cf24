"""Named random substreams derived from one master seed.

Every consumer asks for its own stream by name, e.g. rng_stream(seed, "episode", 12, "depth"),
so adding a draw in one place never shifts the draws seen anywhere else.
"""

import hashlib

import numpy as np


def stream_key(*names):
    digest = hashlib.sha256("/".join(str(n) for n in names).encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def rng_stream(seed, *names):
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), *stream_key(*names)]))
