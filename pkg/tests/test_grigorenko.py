import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from nlqm.core import RngStream
from nlqm.errors import InfiniteTimescaleError, InvalidStateError, UndefinedRatioError
from nlqm.grigorenko import (
    CollapseParams, SuperpositionState, closed_form_trajectory, collapse_time, evolve_closed_form,
    evolve_ode, inverse_q, ratio_log_slope, run_collapse_trial, sample_q_born, sample_q_phase,
    sample_u_phase,
)
from nlqm.montecarlo import chi_square_gof, ks_test, two_sample_chi_square

HALF = SuperpositionState([math.sqrt(0.5), math.sqrt(0.5)])


class FixedUniform:
    """Stand-in RNG returning preset uniforms."""

    def __init__(self, values):
        self.values = list(values)

    def uniform(self, size=None):
        if size is None:
            return self.values.pop(0)
        out, self.values = np.array(self.values[:size]), self.values[size:]
        return out


def test_state_validation():
    with pytest.raises(InvalidStateError):
        SuperpositionState([1.0, 1.0])
    with pytest.raises(InvalidStateError):
        SuperpositionState([])
    with pytest.raises(InvalidStateError):
        SuperpositionState([np.nan])
    s = SuperpositionState.from_weights([3, 1], phases=[0, 1])
    assert np.allclose(s.populations, [0.75, 0.25])
    assert np.angle(s.amplitudes[1]) == pytest.approx(1.0)


def test_params_validation():
    with pytest.raises(ValueError):
        CollapseParams(-1.0, [0.0])
    with pytest.raises(ValueError):
        CollapseParams(1.0, [np.nan])
    CollapseParams(1.0, [-np.inf, 0.0])


def test_closed_form_single_state():
    s = SuperpositionState([1j])
    out = evolve_closed_form(s, CollapseParams(3.0, [-2.0]), 7.0)
    assert out.amplitudes[0] == pytest.approx(1j)


def test_closed_form_two_state_example():
    out = evolve_closed_form(HALF, CollapseParams(1.0, [0.0, -1.0]), math.log(3))
    assert np.allclose(out.populations, [0.9, 0.1], atol=1e-14)
    # hand algebra: pop_1 = 1 / (1 + exp(-2t))
    t = 0.37
    out = evolve_closed_form(HALF, CollapseParams(1.0, [0.0, -1.0]), t)
    assert out.populations[0] == pytest.approx(1 / (1 + math.exp(-2 * t)), rel=1e-14)


def test_zero_amplitude_stays_zero():
    s = SuperpositionState([0.0, 1.0])
    for t in (0.0, 1.0, 100.0):
        out = evolve_closed_form(s, CollapseParams(1.0, [10.0, 0.0]), t)
        assert out.populations[0] == 0.0 and out.populations[1] == 1.0
    traj = evolve_ode(s, CollapseParams(1.0, [10.0, 0.0]), 5.0, 0.5)
    assert np.all(traj.populations[:, 0] == 0.0)


def test_closed_form_no_overflow():
    s = SuperpositionState.from_weights([0.5, 0.5])
    out = evolve_closed_form(s, CollapseParams(1.0, [-1.0, -2.0]), 1e6)
    assert np.all(np.isfinite(out.populations))
    assert out.populations[0] == 1.0


def test_closed_form_keeps_phases():
    s = SuperpositionState.from_weights([0.5, 0.5], phases=[0.3, -1.2])
    out = evolve_closed_form(s, CollapseParams(1.0, [-0.1, -0.5]), 2.0)
    assert np.allclose(np.angle(out.amplitudes), [0.3, -1.2])


def test_ode_matches_closed_form_example():
    params = CollapseParams(1.0, [0.0, -1.0])
    traj = evolve_ode(HALF, params, math.log(3), 0.1)
    assert np.allclose(traj.populations[-1], [0.9, 0.1], atol=1e-8)
    assert traj.times[-1] == math.log(3)


def test_ode_independent_rk4_oracle():
    # classic fixed-step RK4 of the amplitude equation
    q = np.array([0.0, -1.0])
    a = HALF.amplitudes.copy()
    f = lambda a: a * (q - np.sum(q * np.abs(a) ** 2))
    n = 2000
    h = math.log(3) / n
    for _ in range(n):
        k1 = f(a); k2 = f(a + h / 2 * k1); k3 = f(a + h / 2 * k2); k4 = f(a + h * k3)
        a = a + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert np.allclose(np.abs(a) ** 2, [0.9, 0.1], atol=1e-12)


def test_ode_gamma_zero_and_equal_q():
    s = SuperpositionState.from_weights([0.2, 0.3, 0.5])
    for params in (CollapseParams(0.0, [-1, -2, -3]), CollapseParams(2.0, [-1, -1, -1])):
        traj = evolve_ode(s, params, 3.0, 0.5)
        assert np.allclose(traj.populations, s.populations, atol=1e-14)


def test_ode_validation():
    with pytest.raises(ValueError):
        evolve_ode(HALF, CollapseParams(1.0, [0, 0]), -1.0, 0.1)
    with pytest.raises(ValueError):
        evolve_ode(HALF, CollapseParams(1.0, [0, 0]), 1.0, 0.0)
    with pytest.raises(ValueError):
        evolve_ode(HALF, CollapseParams(1.0, [0, 0, 0]), 1.0, 0.1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.floats(0, 5), st.floats(0, 10), st.integers(0, 2**32))
def test_ode_oracle_and_invariants(n, gamma, t, seed):
    rng = RngStream(seed, 0)
    w = rng.uniform(n)
    w[rng.uniform(n) < 0.2] = 0.0
    if w.sum() == 0:
        w[0] = 1.0
    s = SuperpositionState.from_weights(w, phases=2 * np.pi * rng.uniform(n))
    q = sample_q_born(s.populations, rng)
    q = np.where(np.isfinite(q), q, -np.inf)
    params = CollapseParams(gamma, q)
    traj = evolve_ode(s, params, t, 0.25)
    exact = evolve_closed_form(s, params, t).populations
    assert np.max(np.abs(traj.populations[-1] - exact)) < 1e-8
    assert np.max(np.abs(traj.populations.sum(axis=1) - 1)) < 1e-8
    assert np.all(traj.populations[:, s.populations == 0] == 0)
    live = s.populations > 0
    top = np.argmax(np.where(live, q, -np.inf))
    if np.sum(q[live] == q[top]) == 1:
        assert np.all(np.diff(traj.populations[:, top]) >= -1e-8)  # integrator tolerance
    assert traj.winner == top


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2**32))
def test_common_shift_invariance(shift, seed):
    rng = RngStream(seed, 1)
    s = SuperpositionState.from_weights(rng.uniform(4))
    q = -rng.uniform(4) * 3
    a = evolve_ode(s, CollapseParams(1.0, q), 2.0, 0.1)
    b = evolve_ode(s, CollapseParams(1.0, q + shift), 2.0, 0.1)
    assert np.max(np.abs(a.populations[-1] - b.populations[-1])) < 1e-10
    c = closed_form_trajectory(s, CollapseParams(1.0, q), a.times)
    d = closed_form_trajectory(s, CollapseParams(1.0, q + shift), a.times)
    assert np.max(np.abs(c.populations - d.populations)) < 1e-10


def test_ratio_slope_examples():
    times = np.linspace(0, 3, 31)
    traj = closed_form_trajectory(HALF, CollapseParams(1.0, [0.0, -1.0]), times)
    assert ratio_log_slope(traj, 0, 1) == pytest.approx(2.0, rel=1e-6)
    assert ratio_log_slope(traj, 1, 1) == 0.0
    traj = closed_form_trajectory(HALF, CollapseParams(2.0, [0.5, 0.0]), times)
    assert ratio_log_slope(traj, 0, 1) == pytest.approx(2.0, rel=1e-6)


def test_ratio_slope_zero_population():
    s = SuperpositionState([0.0, 1.0])
    traj = closed_form_trajectory(s, CollapseParams(1.0, [0.0, -1.0]), [0.0, 1.0])
    with pytest.raises(UndefinedRatioError, match="state 0"):
        ratio_log_slope(traj, 0, 1)


def test_collapse_time():
    assert collapse_time(CollapseParams(1.0, [1.0, 0.0]), 0, 1) == 1.0
    assert collapse_time(CollapseParams(2.0, [0.5, 0.0]), 0, 1) == 1.0
    assert collapse_time(CollapseParams(1.0, [0.0, 1.0]), 0, 1) == -1.0
    for params in (CollapseParams(0.0, [1.0, 0.0]), CollapseParams(1.0, [1.0, 1.0])):
        with pytest.raises(InfiniteTimescaleError):
            collapse_time(params, 0, 1)


def test_sample_q_endpoints():
    assert sample_q_born([1.0], FixedUniform([1.0]))[0] == 0.0
    assert sample_q_born([1.0], FixedUniform([math.exp(-1)]))[0] == pytest.approx(-1.0)
    q = sample_q_born([0.0, 1.0], FixedUniform([0.5, 0.5]))
    assert q[0] == -np.inf


def test_sample_q_rejects_bad_weights():
    with pytest.raises(InvalidStateError):
        sample_q_born([0.5, 0.6], RngStream(0))
    with pytest.raises(InvalidStateError):
        sample_q_born([-0.1, 1.1], RngStream(0))


def test_sample_q_distribution_ks():
    q = np.array([sample_q_born([0.5, 0.5], RngStream(3, i))[0] for i in range(100_000)])
    res = ks_test(q, lambda x: np.exp(0.5 * np.minimum(x, 0)))
    assert res.statistic < 0.01


def test_sample_u_phase_endpoints():
    assert sample_u_phase(FixedUniform([1.0])) == 0.0
    assert sample_u_phase(FixedUniform([math.exp(-1)])) == pytest.approx(-1.0)
    # a zero phase would be redrawn
    assert sample_u_phase(FixedUniform([0.0, 1.0])) == 0.0


def test_sample_u_phase_ks():
    u = np.array([sample_u_phase(RngStream(11, i)) for i in range(100_000)])
    assert ks_test(u, "exp_neg").statistic < 0.01


def test_inverse_q_preserves_order():
    q = np.array([-3.0, -0.5, -np.inf, -1.0])
    v = inverse_q(q)
    assert v[2] == 0.0
    assert np.argmax(q) == np.argmax(v)


def test_trial_trivial_and_validation():
    s = SuperpositionState([1.0, 0.0])
    assert all(run_collapse_trial(s, 1.0, RngStream(0, i)) == 0 for i in range(100))
    with pytest.raises(ValueError):
        run_collapse_trial(s, 0.0, RngStream(0))
    with pytest.raises(ValueError):
        run_collapse_trial(s, 1.0, RngStream(0), sampling="other")


def test_trial_equals_long_time_closed_form():
    s = SuperpositionState.from_weights([0.5, 0.3, 0.2])
    for i in range(50):
        winner = run_collapse_trial(s, 1.0, RngStream(5, i))
        q = sample_q_born(s.populations, RngStream(5, i))
        final = evolve_closed_form(s, CollapseParams(1.0, q), 1e4).populations
        assert winner == int(np.argmax(final))


def test_two_state_exact_probability():
    p0, p1 = 0.7, 0.3
    val, _ = integrate.quad(lambda q: p0 * math.exp(p0 * q) * math.exp(p1 * q), -np.inf, 0)
    assert val == pytest.approx(0.7, rel=1e-10)
    s = SuperpositionState.from_weights([p0, p1])
    wins = sum(run_collapse_trial(s, 1.0, RngStream(8, i)) == 0 for i in range(20_000))
    assert abs(wins / 20_000 - 0.7) < 3 * math.sqrt(0.21 / 20_000)


@pytest.mark.parametrize("sampling", ["born", "phase"])
def test_trial_born_bands(sampling):
    s = SuperpositionState.from_weights([0.5, 0.3, 0.2])
    n = 100_000
    counts = np.bincount([run_collapse_trial(s, 1.0, RngStream(21, i), sampling) for i in range(n)], minlength=3)
    sigma = np.sqrt(n * s.populations * (1 - s.populations))
    assert np.all(np.abs(counts - n * s.populations) < 3 * sigma)


def test_phase_route_matches_direct_route():
    w = [0.4, 0.35, 0.25]
    a = np.bincount([np.argmax(sample_q_born(w, RngStream(1, i))) for i in range(100_000)])
    b = np.bincount([np.argmax(sample_q_phase(w, RngStream(2, i))) for i in range(100_000)])
    assert two_sample_chi_square(a, b)[2] > 0.01


@settings(max_examples=5, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32))
def test_born_statistics_random_weights(n, seed):
    w = RngStream(seed, 0).uniform(n) + 0.05
    w /= w.sum()
    s = SuperpositionState.from_weights(w)
    counts = np.bincount([run_collapse_trial(s, 1.0, RngStream(seed, i + 1)) for i in range(20_000)], minlength=n)
    # 0.001 keeps the false-alarm rate of this property negligible
    assert chi_square_gof(counts, s.populations)[2] > 0.001


def test_trajectory_csv(tmp_path):
    traj = closed_form_trajectory(HALF, CollapseParams(1.0, [0.0, -1.0]), [0.0, 0.5])
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,pop_1,pop_2"
    row = lines[2].split(",")
    assert float(row[1]) == traj.populations[1, 0]
    assert len(row[1].replace("0.", "", 1).lstrip("0")) >= 15
