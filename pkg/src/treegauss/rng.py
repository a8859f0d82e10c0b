"""Counter-based per-node normals.

Every node of every replica owns a fixed position in a Philox4x64 stream:
the key is ``(replica << 64) | seed`` and node ``h`` reads 64-bit output
number ``h`` (block ``h // 4``, lane ``h % 4``).  Any traversal order, any
chunking and any number of workers therefore see the same normal at the same
node, and deepening a truncation only appends new nodes.

Uniforms use the top 53 bits, shifted to the open interval (0, 1).  Normals
come from Wichura's AS241 rational approximation (PPND16, relative accuracy
about 1e-16).  The coefficient tables below are the published ones, identical
to those used by CPython's ``statistics.NormalDist.inv_cdf``; evaluating them
in double precision gives the same normals on every IEEE-754 platform.
"""
from __future__ import annotations

import threading

import numpy as np

DEFAULT_SEED = 0x5EED
_MASK64 = (1 << 64) - 1

# AS241 PPND16, central region |q| <= 0.425: x = q * A(r) / B(r), r = 0.180625 - q^2
_A = (3.387132872796366608e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
# intermediate tail, r = sqrt(-log(min(p, 1-p))) - 1.6 for r <= 5
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
# far tail, r - 5
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _ratio(num, den, x):
    """``num(x) / den(x)`` by Horner's rule, in place where possible."""
    top = np.multiply(x, num[-1])
    bot = np.multiply(x, den[-1])
    for c in num[-2:0:-1]:
        top += c
        top *= x
    for c in den[-2:0:-1]:
        bot += c
        bot *= x
    top += num[0]
    bot += den[0]
    top /= bot
    return top


_BLOCK = 1 << 15


def normal_ppf(u) -> np.ndarray:
    """Standard normal quantile of ``u`` in (0, 1), vectorized AS241."""
    u = np.asarray(u, dtype=np.float64)
    flat = u.reshape(-1)
    if flat.size <= _BLOCK:
        return _ppf(flat).reshape(u.shape)
    out = np.empty_like(flat)
    # cache-sized blocks keep the Horner temporaries out of main memory
    for lo in range(0, flat.size, _BLOCK):
        out[lo:lo + _BLOCK] = _ppf(flat[lo:lo + _BLOCK])
    return out.reshape(u.shape)


def _ppf(u: np.ndarray) -> np.ndarray:
    q = u - 0.5
    r = q * q
    np.subtract(0.180625, r, out=r)
    out = _ratio(_A, _B, r)
    out *= q
    tail = np.flatnonzero(np.abs(q) > 0.425)
    if tail.size:
        qt = q[tail]
        p = np.where(qt <= 0.0, u[tail], 1.0 - u[tail])
        rt = np.sqrt(-np.log(p))
        x = np.empty_like(rt)
        near = rt <= 5.0
        if near.all():
            x = _ratio(_C, _D, rt - 1.6)
        else:
            x[near] = _ratio(_C, _D, rt[near] - 1.6)
            x[~near] = _ratio(_E, _F, rt[~near] - 5.0)
        out[tail] = np.copysign(x, qt)
    return out


def stream_key(seed: int, replica: int) -> int:
    if not 0 <= seed <= _MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if not 0 <= replica <= _MASK64:
        raise ValueError("replica index must be an unsigned 64-bit integer")
    return (replica << 64) | seed


def raw_block(seed: int, replica: int, start: int, count: int) -> np.ndarray:
    """Raw 64-bit outputs ``start .. start + count - 1`` of one replica's stream."""
    if start < 0 or count < 0:
        raise ValueError("start and count must be non-negative")
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    block, lane = divmod(start, 4)
    key = stream_key(seed, replica)
    bitgen = _local_bitgen()
    # re-keying an existing generator is several times cheaper than building one
    bitgen.state = {
        "bit_generator": "Philox",
        "state": {"counter": np.array([block, 0, 0, 0], dtype=np.uint64),
                  "key": np.array([key & _MASK64, key >> 64], dtype=np.uint64)},
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }
    return bitgen.random_raw(lane + count)[lane:]


_local = threading.local()


def _local_bitgen() -> np.random.Philox:
    gen = getattr(_local, "bitgen", None)
    if gen is None:
        gen = _local.bitgen = np.random.Philox(0)
    return gen


def _to_uniform(raw: np.ndarray) -> np.ndarray:
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def uniforms(seed: int, replica: int, start: int, count: int) -> np.ndarray:
    return _to_uniform(raw_block(seed, replica, start, count))


def normals(seed: int, replica: int, start: int, count: int) -> np.ndarray:
    """Standard normals for node keys ``start .. start + count - 1``."""
    raw = raw_block(seed, replica, start, count)
    out = np.empty(count)
    for lo in range(0, count, _BLOCK):
        out[lo:lo + _BLOCK] = _ppf(_to_uniform(raw[lo:lo + _BLOCK]))
    return out


def normals_batch(seed: int, replicas, start: int, count: int) -> np.ndarray:
    """Rows of :func:`normals` for several replicas, transformed in one pass."""
    raw = np.stack([raw_block(seed, int(r), start, count) for r in replicas])
    return normal_ppf(_to_uniform(raw))


def node_normals(seed: int, replica: int, n_nodes: int) -> np.ndarray:
    """Normals for nodes ``0 .. n_nodes - 1`` (explicit trees, chains, binary heap ids)."""
    return normals(seed, replica, 0, n_nodes)
