"""Seeded randomness.

All randomness in the package flows from a single 64-bit seed through two
primitives:

* ``make_rng(seed)`` builds a counter-based generator (Philox) so that streams
  are reproducible bit-for-bit across platforms and runs.
* ``derive_seed(seed, tag)`` hashes the root seed together with a component
  tag, giving each consumer (task generation, weight init, shuffling, ...)
  an independent, individually re-derivable stream.

Gaussian variates are produced with the polar method on top of the
generator's uniforms rather than the generator's own normal routine, so the
exact draw sequence is pinned by this module and not by the numpy version.
"""

import hashlib

import numpy as np


def make_rng(seed):
    """Return a numpy Generator over Philox seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def derive_seed(seed, tag):
    """Derive a sub-seed for the component named ``tag``.

    blake2b over the root seed (8 little-endian bytes) and the UTF-8 tag,
    truncated to 64 bits.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    h.update(str(tag).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def normal(rng, size=None, mean=0.0, std=1.0):
    """Gaussian variates via the (vectorized) polar method.

    Draws pairs (u, v) uniform on [-1, 1]^2, keeps those inside the unit
    disc, and maps each accepted pair to two independent N(0, 1) values.
    Rejected pairs are replaced by fresh draws until the requested count is
    met, keeping the stream deterministic per seed.
    """
    if size is None:
        n = 1
    else:
        n = int(np.prod(size))
    out = np.empty(n, dtype=np.float64)
    filled = 0
    while filled < n:
        need = n - filled
        m = max(8, int(need * 0.7) + 4)  # ~pi/4 acceptance, two values per pair
        u = rng.uniform(-1.0, 1.0, size=m)
        v = rng.uniform(-1.0, 1.0, size=m)
        s = u * u + v * v
        ok = (s > 0.0) & (s < 1.0)
        u, v, s = u[ok], v[ok], s[ok]
        f = np.sqrt(-2.0 * np.log(s) / s)
        pair = np.empty(2 * len(s), dtype=np.float64)
        pair[0::2] = u * f
        pair[1::2] = v * f
        take = min(len(pair), need)
        out[filled:filled + take] = pair[:take]
        filled += take
    out = mean + std * out
    if size is None:
        return float(out[0])
    return out.reshape(size)


def rng_state_bytes(rng):
    """Serialize a generator's state to canonical bytes (for checkpoints)."""
    import json

    st = rng.bit_generator.state
    canon = {
        "bit_generator": st["bit_generator"],
        "state": {
            "counter": [int(x) for x in st["state"]["counter"]],
            "key": [int(x) for x in st["state"]["key"]],
        },
        "buffer": [int(x) for x in st["buffer"]],
        "buffer_pos": int(st["buffer_pos"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }
    return json.dumps(canon, sort_keys=True).encode("ascii")


def rng_from_state_bytes(raw):
    """Rebuild a generator from bytes produced by :func:`rng_state_bytes`."""
    import json

    canon = json.loads(raw.decode("ascii"))
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": canon["bit_generator"],
        "state": {
            "counter": np.array(canon["state"]["counter"], dtype=np.uint64),
            "key": np.array(canon["state"]["key"], dtype=np.uint64),
        },
        "buffer": np.array(canon["buffer"], dtype=np.uint64),
        "buffer_pos": canon["buffer_pos"],
        "has_uint32": canon["has_uint32"],
        "uinteger": canon["uinteger"],
    }
    return np.random.Generator(bg)
