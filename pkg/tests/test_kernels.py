import numpy as np
import pytest

from nlqm import _pykernels, kernels

pytestmark = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                reason="compiled kernels not built")


def _ck():
    from nlqm import _ckernels
    return _ckernels


def test_mix64_reference_vector():
    # SplitMix64 finaliser of GOLDEN, the first output of splitmix64 seeded with 0
    assert _pykernels.mix64(_pykernels.GOLDEN) == 0xE220A8397B1DCDAF


def test_uniform_block_bitwise():
    a = _pykernels.uniform_block(123, 5, 17, 3, 9)
    b = _ck().uniform_block(123, 5, 17, 3, 9)
    assert np.array_equal(a, b)


def test_uniform_block_matches_scalar_path():
    u = _pykernels.uniform_block(99, 2, 1, 0, 4)[0]
    expect = [_pykernels.u64_to_unit(_pykernels.stream_u64(99, 2, i)) for i in range(4)]
    assert np.array_equal(u, expect)


@pytest.mark.parametrize("phase", [False, True])
def test_born_winners_bitwise(phase):
    w = np.array([0.5, 0.0, 0.3, 0.2])
    a = _pykernels.born_winners(w, 7, 0, 5000, phase)
    b = _ck().born_winners(w, 7, 0, 5000, phase)
    assert np.array_equal(a, b)
    assert not np.any(a == 1)


@pytest.mark.parametrize("periodic", [True, False])
def test_log_derivatives_agree(periodic, rng):
    x = np.linspace(-8, 8, 300, endpoint=False)
    psi = np.exp(-x**2 / 4 + 1j * (0.7 * x + 0.05 * x**2)) * (1 + 0.1 * rng.random(x.size))
    psi[:20] = 0.0
    a = _pykernels.log_derivatives(psi, x[1] - x[0], 1e-10, periodic)
    b = _ck().log_derivatives(psi, x[1] - x[0], 1e-10, periodic)
    for u, v in zip(a[:3], b[:3]):
        assert np.allclose(u, v, rtol=1e-12, atol=1e-12)
    assert a[3] == pytest.approx(b[3], rel=1e-14)


def test_use_backend_switches_and_restores():
    before = kernels.BACKEND
    kernels.use_backend("python")
    assert kernels.BACKEND == "python"
    kernels.use_backend("cython")
    assert kernels.BACKEND == "cython"
    kernels.use_backend(before)
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
