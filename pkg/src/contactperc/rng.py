"""Keyed counter-based random numbers.

Every random quantity attached to a lattice entity (an edge state, a site
rate, the n-th event of a Poisson clock) is a pure function of a 64-bit seed
and a canonical integer key.  Values therefore do not depend on the order in
which entities are queried, which is what makes lazy sampling of an infinite
environment reproducible.
"""

import hashlib
import random
import struct

_MASK64 = (1 << 64) - 1
_INV53 = 1.0 / (1 << 53)

# domain tags keep independent families of draws apart
EDGE = 1
SITE = 2
MARK = 3
ARROW = 4
STREAM = 5
TIMELINE = 6


def _as_int(part):
    if isinstance(part, str):
        h = hashlib.blake2b(part.encode(), digest_size=8).digest()
        return int.from_bytes(h, "little", signed=True)
    return int(part)


def _digest(seed, parts):
    fmt = "<Q%dq" % len(parts)
    try:
        data = struct.pack(fmt, seed & _MASK64, *parts)
    except struct.error:
        data = struct.pack(fmt, seed & _MASK64, *[_as_int(p) for p in parts])
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def keyed_bits(seed, *parts):
    """64 uniform bits determined by ``(seed, parts)``."""
    return _digest(seed, parts)


def keyed_uniform(seed, *parts):
    """A uniform in the open interval (0, 1) determined by ``(seed, parts)``."""
    return ((_digest(seed, parts) >> 11) + 0.5) * _INV53


def derive_seed(seed, *parts):
    """Child 64-bit seed; used to split a master seed into replicate streams."""
    return _digest(seed, (STREAM,) + tuple(parts))


def make_stream(seed, *parts):
    """A ``random.Random`` stream that is a pure function of its key."""
    return random.Random(derive_seed(seed, *parts))
