"""Counter-based random streams for reproducible, order-independent replication.

Each Monte Carlo replication owns a splitmix64 stream whose initial state is a
64-bit hash mix of (master seed, replication index), so results do not depend
on how replications are scheduled across workers.  All helpers are plain
scalar code decorated with ``register_jitable``: they run interpreted under
the numpy backend and compile inside the jitted kernels under numba.

uint64 arithmetic relies on wraparound; the interpreted path must run inside
``np.errstate(over='ignore')`` (the kernel dispatcher does this).
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba.extending import register_jitable
except ImportError:  # pragma: no cover - numba is an optional accelerator
    def register_jitable(func=None, **kwargs):
        if func is None:
            return lambda f: f
        return func

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_U53 = 0.5**53


@register_jitable
def mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@register_jitable
def stream_state(seed, rep):
    """Initial stream state for replication ``rep`` under ``seed``."""
    h = mix64(np.uint64(seed) + _GOLDEN)
    return mix64(h ^ (np.uint64(rep) * _MIX2 + _GOLDEN))


@register_jitable
def next_u01(state):
    """Uniform draw in (0, 1] (top 53 bits), plus advanced state."""
    state = state + _GOLDEN
    u = (float(mix64(state) >> _S11) + 1.0) * _U53
    return u, state


@register_jitable
def next_normal(state):
    """Standard normal draw via Box-Muller (two uniforms per draw)."""
    u1, state = next_u01(state)
    u2, state = next_u01(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2), state


@register_jitable
def next_exponential(state):
    """Unit-rate exponential draw."""
    u, state = next_u01(state)
    return -math.log(u), state


@register_jitable
def next_gamma(state, shape):
    """Gamma(shape, 1) draw by Marsaglia-Tsang squeeze, boosted for shape < 1."""
    boost = 1.0
    a = shape
    if a < 1.0:
        u, state = next_u01(state)
        boost = u ** (1.0 / a)
        a = a + 1.0
    d = a - 1.0 / 3.0
    cc = 1.0 / math.sqrt(9.0 * d)
    while True:
        x, state = next_normal(state)
        t = 1.0 + cc * x
        if t <= 0.0:
            continue
        v = t * t * t
        u, state = next_u01(state)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return boost * d * v, state
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return boost * d * v, state


@register_jitable
def next_chisquare(state, dof):
    g, state = next_gamma(state, 0.5 * dof)
    return 2.0 * g, state
