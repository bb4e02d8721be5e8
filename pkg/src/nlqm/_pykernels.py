"""Pure NumPy implementations of the hot kernels.

These define the reference semantics; ``_ckernels.pyx`` must agree with them.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
TWO_PI = 2.0 * np.pi

_U30, _U27, _U31, _U11 = (np.uint64(s) for s in (30, 27, 31, 11))
_UM1, _UM2, _UG = np.uint64(_M1), np.uint64(_M2), np.uint64(GOLDEN)


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z):
    z = (z ^ (z >> _U30)) * _UM1
    z = (z ^ (z >> _U27)) * _UM2
    return z ^ (z >> _U31)


def stream_key(seed: int, stream: int) -> int:
    return mix64(mix64(seed) ^ mix64(stream + GOLDEN))


def stream_u64(seed: int, stream: int, counter: int) -> int:
    return mix64(stream_key(seed, stream) + (counter + 1) * GOLDEN)


def u64_to_unit(x: int) -> float:
    return ((x >> 11) + 1) * 2.0**-53


def _keys(seed, first_stream, n_streams):
    s = np.uint64(mix64(seed))
    streams = np.arange(first_stream, first_stream + n_streams, dtype=np.uint64)
    return _mix64_array(s ^ _mix64_array(streams + _UG))


def uniform_block(seed, first_stream, n_streams, counter_start, n_counters):
    """Uniforms in (0, 1]: row ``r`` is stream ``first_stream + r``, columns are counters."""
    keys = _keys(seed, first_stream, n_streams)
    offs = (np.arange(counter_start, counter_start + n_counters, dtype=np.uint64) + np.uint64(1)) * _UG
    x = _mix64_array(keys[:, None] + offs[None, :])
    return ((x >> _U11) + np.uint64(1)).astype(np.float64) * 2.0**-53


def born_winners(weights, seed, first_stream, n_trials, phase=False):
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    u = uniform_block(seed, first_stream, n_trials, 0, weights.size)
    if phase:
        u = (TWO_PI * u) / TWO_PI
    with np.errstate(divide="ignore"):
        logu = np.log(u)
        q = np.where(weights > 0, logu / np.where(weights > 0, weights, 1.0), -np.inf)
    return np.argmax(q, axis=1).astype(np.int64)


def log_derivatives(psi, dx, eps, periodic):
    """Centred first and second derivatives of log(psi) from neighbour ratios.

    Returns ``(d1, d2, weight, max_step)``. ``weight`` is the node taper, the
    smallest of the three stencil points' individual tapers; derivatives are
    zero wherever it vanishes. ``max_step`` is the largest adjacent phase
    increment used by a point with full weight (whole stencil above the floor).
    """
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    n = psi.size
    amp = np.abs(psi)
    floor = eps * amp.max()
    w = np.minimum((amp / floor) ** 2, 1.0) if floor > 0 else np.zeros(n)
    nxt = np.roll(psi, -1)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = np.log(nxt / psi)  # r[j] = log(psi[j+1] / psi[j])
    if not periodic:
        r[-1] = 0.0
    bad = ~(np.isfinite(r.real) & np.isfinite(r.imag))
    r[bad] = 0.0
    w[bad] = 0.0
    w[np.roll(bad, 1)] = 0.0
    r_prev = np.roll(r, 1)
    wt = np.minimum(np.minimum(w, np.roll(w, 1)), np.roll(w, -1))
    if not periodic:
        wt[0] = wt[-1] = 0.0
    active = wt > 0
    d1 = np.where(active, (r + r_prev) / (2.0 * dx), 0.0)
    d2 = np.where(active, (r - r_prev) / (dx * dx), 0.0)
    step = np.maximum(np.abs(r.imag), np.abs(r_prev.imag))
    full = wt >= 1.0
    max_step = float(step[full].max()) if full.any() else 0.0
    return d1, d2, np.where(active, wt, 0.0), max_step
