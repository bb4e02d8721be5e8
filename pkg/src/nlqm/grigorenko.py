"""Finite-dimensional Gisin/Grigorenko collapse dynamics.

With the Hermitian part of the Hamiltonian set to zero, the amplitudes of a
superposition obey

    da_n/dt = gamma * a_n * (q_n - sum_k q_k |a_k|^2)

whose solution grows the populations as ``|a_n(0)|^2 exp(2 gamma q_n t)``
up to normalisation. Drawing the q_n from ``p_n exp(p_n q_n)`` on
``(-inf, 0]`` makes the surviving state Born-distributed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream
from .errors import InfiniteTimescaleError, InvalidStateError, UndefinedRatioError
from .integrate import DormandPrince

NORM_TOL = 1e-10


@dataclass(frozen=True)
class SuperpositionState:
    """Normalised amplitudes over a discrete eigenbasis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=np.complex128).ravel()
        if a.size < 1:
            raise InvalidStateError("state needs at least one amplitude")
        if not np.all(np.isfinite(a)):
            raise InvalidStateError("amplitudes must be finite")
        norm = float(np.sum(np.abs(a) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"state is not normalised: sum |a|^2 = {norm!r}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_weights(cls, weights, phases=None) -> "SuperpositionState":
        """Amplitudes sqrt(p_n) exp(i phase_n); weights are renormalised."""
        p = np.asarray(weights, dtype=float)
        if np.any(p < 0) or p.sum() <= 0:
            raise InvalidStateError("weights must be non-negative with a positive sum")
        p = p / p.sum()
        a = np.sqrt(p).astype(np.complex128)
        if phases is not None:
            a = a * np.exp(1j * np.asarray(phases, dtype=float))
        return cls(a)

    @classmethod
    def _unchecked(cls, a) -> "SuperpositionState":
        obj = object.__new__(cls)
        a = np.asarray(a, dtype=np.complex128)
        a.setflags(write=False)
        object.__setattr__(obj, "amplitudes", a)
        return obj

    @property
    def basis_size(self) -> int:
        return self.amplitudes.size

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class CollapseParams:
    gamma: float
    q: np.ndarray

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma!r}")
        q = np.array(self.q, dtype=float).ravel()
        # -inf marks a zero-weight state and is allowed
        if np.any(np.isnan(q)) or np.any(q == np.inf):
            raise ValueError("q values must be finite (or -inf for zero-weight states)")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)


@dataclass
class CollapseTrajectory:
    times: np.ndarray
    populations: np.ndarray  # shape (len(times), N)
    winner: int | None = None
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        """Write ``t,pop_1,...,pop_N`` with 17 significant digits."""
        n = self.populations.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"pop_{i + 1}" for i in range(n)])
            for t, row in zip(self.times, self.populations):
                writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def _check_compatible(state, params):
    if params.q.size != state.basis_size:
        raise ValueError(f"q has {params.q.size} entries for a basis of size {state.basis_size}")


def _winner(q, weights):
    live = weights > 0
    if not live.any():
        return None
    masked = np.where(live, q, -np.inf)
    return int(np.argmax(masked))


def evolve_closed_form(state: SuperpositionState, params: CollapseParams, t: float) -> SuperpositionState:
    """Exact solution at time ``t``; phases are left unchanged."""
    if t < 0:
        raise ValueError("t must be non-negative")
    _check_compatible(state, params)
    a0 = state.amplitudes
    live = a0 != 0
    if not np.all(np.isfinite(params.q[live])):
        raise ValueError("a -inf q value is only allowed for zero-amplitude states")
    expo = params.gamma * params.q[live] * t
    expo -= expo.max()
    scale = np.zeros(a0.size)
    scale[live] = np.exp(expo)
    a = a0 * scale
    a = a / math.sqrt(float(np.sum(np.abs(a) ** 2)))
    return SuperpositionState._unchecked(a)


def collapse_rhs(gamma, q):
    """Right-hand side of the amplitude equation for fixed ``gamma`` and ``q``."""
    qf = np.where(np.isfinite(q), q, 0.0)

    def f(_t, a):
        mean_q = float(np.sum(qf * (a.real**2 + a.imag**2)))
        return gamma * a * (qf - mean_q)

    return f


def evolve_ode(state: SuperpositionState, params: CollapseParams, t: float, dt_max: float,
               atol: float = 1e-10, rtol: float = 0.0) -> CollapseTrajectory:
    """Integrate the amplitude equation with an adaptive 5(4) pair.

    The trajectory stores every accepted step. No renormalisation is applied,
    so ``sum(populations) - 1`` measures the integration error directly.
    States with a ``-inf`` sentinel in ``q`` have zero amplitude and keep it.

    The equation depends on ``q`` only through differences on the unit
    sphere, but off it the norm is repelled at rate ``2 gamma <q>`` when
    ``<q> < 0``, which amplifies step errors. The rates are therefore shifted
    so the smallest live one is zero, which makes the unit norm attracting.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if dt_max <= 0:
        raise ValueError("dt_max must be positive")
    _check_compatible(state, params)
    a0 = np.array(state.amplitudes)
    if np.any(~np.isfinite(params.q) & (a0 != 0)):
        raise ValueError("a -inf q value is only allowed for zero-amplitude states")
    times = [0.0]
    pops = [np.abs(a0) ** 2]

    def record(tt, a):
        times.append(tt)
        pops.append(a.real**2 + a.imag**2)

    live = a0 != 0
    q = params.q - (params.q[live].min() if live.any() else 0.0)
    solver = DormandPrince(collapse_rhs(params.gamma, q), atol=atol, rtol=rtol, h_max=dt_max)
    solver.advance(0.0, a0, t, on_step=record)
    return CollapseTrajectory(
        times=np.array(times),
        populations=np.array(pops),
        winner=_winner(params.q, state.populations),
        meta={"steps": solver.n_steps, "rejected": solver.n_rejected},
    )


def closed_form_trajectory(state: SuperpositionState, params: CollapseParams, times) -> CollapseTrajectory:
    times = np.asarray(times, dtype=float)
    pops = np.array([evolve_closed_form(state, params, float(t)).populations for t in times])
    return CollapseTrajectory(times, pops, winner=_winner(params.q, state.populations))


def ratio_log_slope(trajectory: CollapseTrajectory, i: int, j: int) -> float:
    """Least-squares slope of ln(pop_i / pop_j) against time."""
    if i == j:
        return 0.0
    pi = trajectory.populations[:, i]
    pj = trajectory.populations[:, j]
    for k, idx in ((pi, i), (pj, j)):
        zero = np.flatnonzero(k <= 0)
        if zero.size:
            raise UndefinedRatioError(
                f"population of state {idx} is zero at t={trajectory.times[zero[0]]!r}"
            )
    y = np.log(pi) - np.log(pj)
    slope, _ = np.polyfit(trajectory.times, y, 1)
    return float(slope)


def collapse_time(params: CollapseParams, i: int, j: int) -> float:
    """1 / (gamma (q_i - q_j)); negative when state j dominates."""
    dq = params.q[i] - params.q[j]
    if params.gamma == 0 or dq == 0 or not np.isfinite(dq):
        raise InfiniteTimescaleError(f"no collapse between states {i} and {j}")
    return 1.0 / (params.gamma * dq)


def _validate_weights(weights) -> np.ndarray:
    p = np.asarray(weights, dtype=float).ravel()
    if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidStateError("weights must be finite and non-negative")
    if abs(p.sum() - 1.0) > NORM_TOL:
        raise InvalidStateError(f"weights must sum to 1, got {p.sum()!r}")
    return p


def sample_q_born(weights, rng: RngStream) -> np.ndarray:
    """q_n = ln(U_n) / p_n, i.e. density p_n exp(p_n q_n) on (-inf, 0].

    One uniform is consumed per state, including zero-weight states, which
    receive ``-inf``.
    """
    p = _validate_weights(weights)
    u = rng.uniform(p.size)
    with np.errstate(divide="ignore"):
        return np.where(p > 0, np.log(u) / np.where(p > 0, p, 1.0), -np.inf)


def sample_u_phase(rng: RngStream) -> float:
    """u = ln(chi / 2 pi) for a phase chi uniform on (0, 2 pi]."""
    chi = 0.0
    while chi == 0.0:
        chi = 2.0 * math.pi * rng.uniform()
    return math.log(chi / (2.0 * math.pi))


def sample_q_phase(weights, rng: RngStream) -> np.ndarray:
    """q_n = u_n / p_n with u_n drawn from eigenstate phases."""
    p = _validate_weights(weights)
    q = np.full(p.size, -np.inf)
    for n in range(p.size):
        u = sample_u_phase(rng)
        if p[n] > 0:
            q[n] = u / p[n]
    return q


def inverse_q(q) -> np.ndarray:
    """Alternative parameterisation q -> -1/q (maps the -inf sentinel to 0).

    Order-preserving on (-inf, 0), so the winner is unchanged.
    """
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        return -1.0 / q


def run_collapse_trial(state: SuperpositionState, gamma: float, rng: RngStream, sampling: str = "born") -> int:
    """Index of the surviving state for one draw of the random variables.

    Equivalent to evolving the closed-form solution to infinite time. Ties go
    to the lowest index.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    p = state.populations
    if not np.any(p > 0):
        raise InvalidStateError("all weights are zero")
    p = p / p.sum()
    if sampling == "born":
        q = sample_q_born(p, rng)
    elif sampling == "phase":
        q = sample_q_phase(p, rng)
    else:
        raise ValueError(f"unknown sampling route {sampling!r}")
    return _winner(q, p)
