"""Cross-language deterministic random stream (splitmix64 + Box-Muller).

The filter-bank projection must be reproducible bit-for-bit from (seed,
shape) alone, independent of any runtime RNG library, so the generator is
fully specified here:

raw stream
    z_m = mix64((seed + (m + 1) * 0x9E3779B97F4A7C15) mod 2^64),  m = 0, 1, ...
    mix64(v): v ^= v >> 30; v *= 0xBF58476D1CE4E5B9; v ^= v >> 27;
              v *= 0x94D049BB133111EB; v ^= v >> 31   (all mod 2^64)

unit doubles in (0, 1]
    u_m = ((z_m >> 11) + 1) * 2^-53

standard normals (Box-Muller, pair j consumes u_{2j}, u_{2j+1})
    r = sqrt(-2 ln u_{2j}),  t = 2 pi u_{2j+1}
    n_{2j} = r cos t,  n_{2j+1} = r sin t
"""

from __future__ import annotations

import numpy as np

MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
GOLDEN = 0x9E3779B97F4A7C15
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB


def raw_stream(seed: int, n: int) -> np.ndarray:
    """First n values of the splitmix64 output stream for `seed` (uint64)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    idx = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * np.uint64(GOLDEN)).astype(np.uint64)
        z ^= z >> np.uint64(30)
        z *= np.uint64(MIX_A)
        z ^= z >> np.uint64(27)
        z *= np.uint64(MIX_B)
        z ^= z >> np.uint64(31)
    return z


def unit_doubles(seed: int, n: int) -> np.ndarray:
    """n doubles in (0, 1] derived from the raw stream (53-bit mantissas)."""
    z = raw_stream(seed, n)
    return ((z >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53


def standard_normals(seed: int, n: int) -> np.ndarray:
    """n standard-normal doubles via Box-Muller on the unit stream."""
    pairs = (n + 1) // 2
    u = unit_doubles(seed, 2 * pairs)
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    t = 2.0 * np.pi * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(t)
    out[1::2] = r * np.sin(t)
    return out[:n]


_MASK_INT = 0xFFFFFFFFFFFFFFFF


def mix64_int(v: int) -> int:
    """Pure-int splitmix64 finalizer (reference mirror of the array path)."""
    v &= _MASK_INT
    v ^= v >> 30
    v = (v * MIX_A) & _MASK_INT
    v ^= v >> 27
    v = (v * MIX_B) & _MASK_INT
    v ^= v >> 31
    return v


def derive_seed(seed: int, *tags: int) -> int:
    """Stable u64 child seed for a pipeline stage, keyed by integer tags."""
    state = seed & _MASK_INT
    for tag in tags:
        state = mix64_int((state + (int(tag) + 1) * GOLDEN) & _MASK_INT)
    return state
