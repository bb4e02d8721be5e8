"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
NumPy reference in ``_pykernels`` is used. Set ``NLQM_BACKEND=python`` to
force the fallback.
"""
import os

from . import _pykernels
from ._pykernels import GOLDEN, MASK64, stream_u64, u64_to_unit  # noqa: F401

BACKEND = "python"
_impl = _pykernels

if os.environ.get("NLQM_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        _impl = _ckernels


def use_backend(name: str) -> None:
    """Switch backend at runtime ('python' or 'cython')."""
    global BACKEND, _impl
    if name == "python":
        _impl = _pykernels
    elif name == "cython":
        from . import _ckernels

        _impl = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return names
    return names + ["cython"]


def uniform_block(seed, first_stream, n_streams, counter_start, n_counters):
    return _impl.uniform_block(seed & MASK64, first_stream, n_streams, counter_start, n_counters)


def born_winners(weights, seed, first_stream, n_trials, phase=False):
    return _impl.born_winners(weights, seed & MASK64, first_stream, n_trials, phase)


def log_derivatives(psi, dx, eps, periodic):
    return _impl.log_derivatives(psi, dx, eps, periodic)
