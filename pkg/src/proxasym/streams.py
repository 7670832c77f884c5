"""Counter-based random streams.

Every random quantity in the package is drawn from a Philox generator keyed
by a root seed plus string purpose tags. Streams are independent of execution
order and of whether other streams were ever used, so adding a new check to
an experiment never perturbs existing results.
"""

import hashlib

import numpy as np


def _tag_words(tags):
    digest = hashlib.sha256("/".join(str(t) for t in tags).encode()).digest()
    return [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]


def stream_rng(seed, *tags):
    """Return a Generator for the stream identified by (seed, *tags)."""
    seq = np.random.SeedSequence(entropy=[int(seed) & (2**63 - 1), *_tag_words(tags)])
    return np.random.Generator(np.random.Philox(seed=seq))


def derive_seed(seed, *tags):
    """Collapse (seed, *tags) to a single integer usable as a root seed."""
    words = _tag_words([seed, *tags])
    return words[0] & (2**63 - 1)
