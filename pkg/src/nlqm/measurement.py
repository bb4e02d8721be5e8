"""Pointer-basis measurement model.

An apparatus pointer with wavefunction psi(x) is correlated with the system
eigenstates through disjoint position bins, so that the system weight of
eigenstate n is the pointer probability inside bin n. Once the nonlinear
part dominates, each population grows at the frozen rate

    Q(x_n) = (gamma / m1) phi_F''(x_n)

and the bin with the largest Q wins. Sampling Q_n = u_n / p_n with
``u_n`` distributed as ``e^u`` on ``(-inf, 0]`` reproduces the Born rule.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .core import RngStream
from .dg_pde import GridWavefunction
from .errors import DegenerateStateError, InvalidStateError
from .grigorenko import (
    CollapseTrajectory,
    SuperpositionState,
    sample_q_born,
    sample_q_phase,
)

SAMPLING_MODES = ("born_distribution", "phase_mechanism")
OVERLAP_TOL = 1e-8
RESIDUAL_FLAG = 1e-3
MIN_BIN_POINTS = 4
AMPLITUDE_FLOOR = 1e-10


@dataclass(frozen=True)
class PointerModel:
    """Pointer bins on an apparatus grid.

    Bins are half-open intervals ``[lo, hi)`` so neighbouring bins never
    share a grid point.
    """

    bins: tuple
    apparatus_psi: GridWavefunction
    m1: float = 1.0
    m2: float = 1.0
    gamma: float = 0.5

    def __post_init__(self):
        bins = tuple((float(lo), float(hi)) for lo, hi in self.bins)
        object.__setattr__(self, "bins", bins)
        _validate_bins(self.apparatus_psi, bins)
        if not (self.m1 > 0 and self.m2 > 0):
            raise ValueError("masses m1 and m2 must be positive")
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma = 1 - theta(m1) must lie in [0, 1), got {self.gamma!r}")

    @property
    def centers(self) -> np.ndarray:
        return np.array([0.5 * (lo + hi) for lo, hi in self.bins])


def _bin_masks(psi: GridWavefunction, bins) -> list[np.ndarray]:
    x = psi.x
    return [(x >= lo) & (x < hi) for lo, hi in bins]


def _validate_bins(psi: GridWavefunction, bins) -> None:
    if len(bins) < 1:
        raise ValueError("at least one bin is required")
    x = psi.x
    lo_dom, hi_dom = x[0], x[-1] + psi.dx
    problems = []
    for i, (lo, hi) in enumerate(bins):
        if not hi > lo:
            problems.append(f"bin {i} has non-positive width")
        if lo < lo_dom - 1e-12 * psi.dx or hi > hi_dom + 1e-12 * psi.dx:
            problems.append(f"bin {i} [{lo}, {hi}) leaves the grid [{lo_dom}, {hi_dom})")
    order = sorted(range(len(bins)), key=lambda i: bins[i][0])
    for a, b in zip(order, order[1:]):
        if bins[b][0] < bins[a][1]:
            problems.append(f"bins {a} and {b} overlap")
    for i, m in enumerate(_bin_masks(psi, bins)):
        if m.sum() < MIN_BIN_POINTS:
            problems.append(f"bin {i} holds {int(m.sum())} grid points; need at least {MIN_BIN_POINTS}")
    if problems:
        raise ValueError("; ".join(problems))


def default_bins(psi: GridWavefunction, n_bins: int) -> tuple:
    """Equal-width contiguous bins covering the central 80% of the grid."""
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    length = psi.n * psi.dx
    start = psi.x0 + 0.1 * length
    edges = start + 0.8 * length * np.arange(n_bins + 1) / n_bins
    return tuple(zip(edges[:-1], edges[1:]))


@dataclass(frozen=True)
class Overlap:
    """Bin weights renormalised to sum 1, the raw integrals and the probability outside all bins."""

    weights: np.ndarray
    raw: np.ndarray
    residual: float

    @property
    def flagged(self) -> bool:
        return self.residual > RESIDUAL_FLAG


def pointer_overlap(psi: GridWavefunction, bins, method: str = "exact") -> Overlap:
    """|a_n|^2 from the pointer probability in each bin.

    ``exact`` sums ``|psi|^2 dx`` over the grid points in the bin;
    ``midpoint`` uses ``width * |psi(x_mid)|^2`` with linear interpolation,
    valid when the pointer density hardly varies across a bin.
    """
    bins = tuple((float(lo), float(hi)) for lo, hi in bins)
    _validate_bins(psi, bins)
    rho = np.abs(psi.values) ** 2
    total = float(rho.sum() * psi.dx)
    if method == "exact":
        raw = np.array([rho[m].sum() * psi.dx for m in _bin_masks(psi, bins)])
    elif method == "midpoint":
        mids = np.array([0.5 * (lo + hi) for lo, hi in bins])
        widths = np.array([hi - lo for lo, hi in bins])
        raw = widths * np.interp(mids, psi.x, rho)
    else:
        raise ValueError(f"unknown overlap method {method!r}")
    s = raw.sum()
    if not s > 0:
        raise ValueError("pointer has no probability inside any bin")
    return Overlap(raw / s, raw, max(0.0, 1.0 - float(raw.sum()) / total))


@dataclass(frozen=True)
class CompositeState:
    """System amplitudes correlated with pointer bins, plus the phase field phi_F on the grid."""

    system_amplitudes: SuperpositionState
    pointer: PointerModel
    phase_field: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phase_field, dtype=float).ravel()
        if phi.size != self.pointer.apparatus_psi.n:
            raise ValueError("phase field must be sampled on the apparatus grid")
        if not np.all(np.isfinite(phi)):
            raise ValueError("phase field must be finite")
        object.__setattr__(self, "phase_field", phi)
        if self.system_amplitudes.basis_size != len(self.pointer.bins):
            raise InvalidStateError("one system amplitude per pointer bin is required")
        w = pointer_overlap(self.pointer.apparatus_psi, self.pointer.bins).weights
        err = float(np.max(np.abs(w - self.system_amplitudes.populations)))
        if err > OVERLAP_TOL:
            raise InvalidStateError(f"|a_n|^2 differs from the pointer bin weights by {err:.3e}")

    @classmethod
    def from_pointer(cls, pointer: PointerModel, phase_field, phases=None) -> "CompositeState":
        """System amplitudes taken from the pointer overlap (optional eigenstate phases)."""
        w = pointer_overlap(pointer.apparatus_psi, pointer.bins).weights
        return cls(SuperpositionState.from_weights(w, phases), pointer, phase_field)

    @property
    def weights(self) -> np.ndarray:
        return self.system_amplitudes.populations

    @property
    def residual(self) -> float:
        return pointer_overlap(self.pointer.apparatus_psi, self.pointer.bins).residual


# --- Q(x) -------------------------------------------------------------------

def _second_difference(f: np.ndarray, dx: float, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / dx**2
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dx**2
    out[0], out[-1] = out[1], out[-2]
    return out


def compute_Q(phase_field, psi: GridWavefunction, pointer: PointerModel, x_n,
              mode: str = "nonlinear_dominant", hbar: float = 1.0):
    """Collapse rate at pointer position(s) ``x_n``.

    ``nonlinear_dominant`` gives ``(gamma/m1) phi_F''``; ``full`` adds the
    linear contribution ``-(hbar/m1) Im[psi* psi''] / |psi|^2``. Second
    derivatives are centred differences, linearly interpolated to ``x_n``.
    """
    x = psi.x
    x_n_arr = np.atleast_1d(np.asarray(x_n, dtype=float))
    if np.any(x_n_arr < x[0]) or np.any(x_n_arr > x[-1]):
        raise ValueError("x_n must lie inside the grid")
    phi = np.asarray(phase_field, dtype=float)
    d2phi = _second_difference(phi, psi.dx, periodic=False)
    q = pointer.gamma / pointer.m1 * np.interp(x_n_arr, x, d2phi)
    if mode == "full":
        y = psi.values
        amp = np.abs(y)
        floor = AMPLITUDE_FLOOR * amp.max()
        lin = np.imag(np.conj(y) * _second_difference(y, psi.dx, psi.periodic))
        dens = np.interp(x_n_arr, x, amp**2)
        if np.any(np.sqrt(dens) < floor):
            raise DegenerateStateError("pointer amplitude is below the floor at a requested position")
        q = q - hbar / pointer.m1 * np.interp(x_n_arr, x, lin) / dens
    elif mode != "nonlinear_dominant":
        raise ValueError(f"unknown Q mode {mode!r}")
    return float(q[0]) if np.ndim(x_n) == 0 else q


def pointer_Q(composite: CompositeState, mode: str = "nonlinear_dominant", hbar: float = 1.0) -> np.ndarray:
    """Q at every bin centre from the composite's own phase field."""
    p = composite.pointer
    return compute_Q(composite.phase_field, p.apparatus_psi, p, p.centers, mode, hbar)


@dataclass(frozen=True)
class SmoothField:
    """Sum of cosines ``sum_k c_k cos(k x + s_k)``; exact second derivative available."""

    wavenumbers: np.ndarray
    coefficients: np.ndarray
    shifts: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(self.coefficients * np.cos(self.wavenumbers * x + self.shifts), axis=-1)

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        k = self.wavenumbers
        return -np.sum(self.coefficients * k**2 * np.cos(k * x + self.shifts), axis=-1)


def random_smooth_field(length: float, rng: RngStream, n_modes: int = 6, amplitude: float = 1.0) -> SmoothField:
    """Random field periodic on ``length`` with Gaussian coefficients decaying as 1/mode."""
    modes = np.arange(1, n_modes + 1)
    k = 2.0 * np.pi * modes / length
    c = amplitude * rng.normal(n_modes) / modes
    s = 2.0 * np.pi * rng.uniform(n_modes)
    return SmoothField(k, c, s)


# --- populations --------------------------------------------------------------

def evolve_populations(weights, Q_values, t: float) -> np.ndarray:
    """|a_n(t)|^2 proportional to |a_n(0)|^2 exp(Q_n t), renormalised to sum 1."""
    if t < 0:
        raise ValueError("t must be non-negative")
    w = np.asarray(weights, dtype=float)
    q = np.asarray(Q_values, dtype=float)
    if w.shape != q.shape:
        raise ValueError("weights and Q_values must have the same length")
    live = w > 0
    out = np.zeros_like(w)
    if not live.any():
        return out
    with np.errstate(invalid="ignore"):
        expo = np.log(w[live]) + q[live] * t
    expo -= expo.max()
    out[live] = np.exp(expo)
    return out / out.sum()


# --- single measurement -------------------------------------------------------

@dataclass
class MeasurementOutcome:
    winner: int
    collapse_time_scale: float
    trajectory: CollapseTrajectory
    Q: np.ndarray
    sampling: str
    meta: dict = field(default_factory=dict)

    def to_record(self, seed: int | None = None, trajectory_path: str | None = None) -> dict:
        return {
            "winner": self.winner,
            "collapse_time_scale": None if math.isinf(self.collapse_time_scale) else self.collapse_time_scale,
            "Q": [None if not math.isfinite(q) else float(q) for q in self.Q],
            "sampling": self.sampling,
            "seed": seed,
            "trajectory": trajectory_path,
            **self.meta,
        }

    def to_json(self, path, seed: int | None = None, trajectory_path: str | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_record(seed, trajectory_path), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _leading_two(q, weights):
    live = np.flatnonzero(weights > 0)
    order = live[np.argsort(-q[live], kind="stable")]
    first = int(order[0])
    if order.size < 2 or not q[first] > q[order[1]]:
        return first, math.inf
    return first, 1.0 / (q[first] - q[order[1]])


def outcome_from_Q(weights, Q_values, sampling: str = "given", n_times: int = 41,
                   horizon: float = 10.0) -> MeasurementOutcome:
    """Winner, time scale and population trajectory for frozen rates ``Q_values``.

    The trajectory spans ``horizon`` collapse time scales (a single point if
    the winner is not separated from the runner-up).
    """
    w = np.asarray(weights, dtype=float)
    q = np.asarray(Q_values, dtype=float)
    if not np.any(w > 0):
        raise InvalidStateError("all weights are zero")
    # argmax on the masked rates breaks ties towards the lowest index
    winner = int(np.argmax(np.where(w > 0, q, -np.inf)))
    _, tau = _leading_two(q, w)
    times = np.array([0.0]) if math.isinf(tau) else np.linspace(0.0, horizon * tau, n_times)
    pops = np.array([evolve_populations(w, q, t) for t in times])
    traj = CollapseTrajectory(times, pops, winner=winner)
    return MeasurementOutcome(winner, tau, traj, q, sampling)


def sample_Q(weights, rng: RngStream, sampling: str = "born_distribution") -> np.ndarray:
    if sampling == "born_distribution":
        return sample_q_born(weights, rng)
    if sampling == "phase_mechanism":
        return sample_q_phase(weights, rng)
    raise ValueError(f"sampling must be one of {SAMPLING_MODES}, got {sampling!r}")


def run_measurement(composite: CompositeState, rng: RngStream,
                    sampling: str = "born_distribution") -> MeasurementOutcome:
    """One measurement: draw the onset rates Q_n, pick the largest, trace the collapse.

    With fewer than two non-zero weights the winner is fixed and the time
    scale is infinite.
    """
    w = composite.weights
    w = w / w.sum()
    q = sample_Q(w, rng, sampling)
    out = outcome_from_Q(w, q, sampling)
    out.meta["residual"] = composite.residual
    return out


# --- partial measurement ------------------------------------------------------

@dataclass(frozen=True)
class PartialResult:
    """Output of a partial first measurement.

    ``coefficients`` and ``norm`` follow the residual-superposition formula
    with every secondary coefficient fixed relative to ``|a_m(t)|``;
    ``closed_form`` carries the initial amplitude ratios, ``a_n(0) exp(Q_n t/2)``.
    Both are unnormalised.
    """

    winner: int
    coefficients: np.ndarray
    norm: float
    closed_form: np.ndarray
    closed_form_norm: float
    ratios: np.ndarray  # coefficients / |a_m(t)|, finite even when |a_m(t)| underflows

    @property
    def state(self) -> np.ndarray:
        r = self.ratios
        return r / math.sqrt(float(np.sum(r**2)))

    @property
    def closed_form_populations(self) -> np.ndarray:
        c = np.abs(self.closed_form) ** 2
        return c / c.sum()


def partial_measurement(weights, Q_values, t: float, coupling: float = 1.0) -> PartialResult:
    """State after the apparatus has acted for a time ``t`` short of full collapse.

    ``coupling`` multiplies every ``Q`` in the exponents; rates that already
    include ``1 - theta`` need the default of 1.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if isinstance(weights, SuperpositionState):
        amps = np.array(weights.amplitudes)
    else:
        amps = np.sqrt(np.asarray(weights, dtype=float)).astype(complex)
    w = np.abs(amps) ** 2
    q = np.asarray(Q_values, dtype=float)
    live = w > 0
    m = int(np.argmax(np.where(live, q, -np.inf)))
    g = coupling
    a_m = math.sqrt(w[m]) * math.exp(0.5 * g * q[m] * t)
    with np.errstate(invalid="ignore"):
        ratios = np.where(np.isfinite(q), np.exp(-0.5 * g * (q[m] - q) * t), 0.0)
    coeffs = ratios * a_m
    norm = (1.0 + float(np.sum(np.delete(ratios, m) ** 2))) * a_m**2
    with np.errstate(invalid="ignore"):
        closed = np.where(live, amps * np.exp(0.5 * g * np.where(live, q, 0.0) * t), 0.0)
    return PartialResult(m, coeffs, norm, closed, float(np.sum(np.abs(closed) ** 2)), ratios)


# --- sequential measurements --------------------------------------------------

@dataclass
class DiscriminatorResult:
    """First- and second-measurement winners over a batch of trials."""

    weights: np.ndarray
    t_partial: float
    relative: bool
    first: np.ndarray
    second: np.ndarray

    @property
    def trials(self) -> int:
        return self.first.size

    @property
    def repeat_probability(self) -> float:
        return float(np.mean(self.first == self.second))

    @property
    def second_counts(self) -> np.ndarray:
        return np.bincount(self.second, minlength=self.weights.size)

    @property
    def second_distribution(self) -> np.ndarray:
        return self.second_counts / self.trials


def _q_from_uniforms(u, weights, sampling):
    if sampling == "phase_mechanism":
        u = (2.0 * np.pi * u) / (2.0 * np.pi)  # chi_n = 2 pi U_n, then u_n = ln(chi_n / 2 pi)
    elif sampling != "born_distribution":
        raise ValueError(f"sampling must be one of {SAMPLING_MODES}, got {sampling!r}")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.where(weights > 0, np.log(u) / np.where(weights > 0, weights, 1.0), -np.inf)


def sequential_measurement_discriminator(composite, t_partial: float, seed: int, trials: int = 100_000,
                                         sampling: str = "born_distribution", relative: bool = False,
                                         coupling: float = 1.0, first_stream: int = 0) -> DiscriminatorResult:
    """Partial first measurement followed by a complete second one.

    Each trial draws onset rates for the first apparatus, lets it act for
    ``t_partial`` (in units of that trial's collapse time scale when
    ``relative``), renormalises the residual superposition in the closed
    form and measures it again with fresh rates. Trial ``i`` uses stream
    ``first_stream + i``: counters ``0..N-1`` feed the first measurement and
    ``N..2N-1`` the second.
    """
    if t_partial < 0:
        raise ValueError("t_partial must be non-negative")
    if trials < 1:
        raise ValueError("trials must be positive")
    w = composite.weights if isinstance(composite, CompositeState) else np.asarray(composite, dtype=float)
    w = w / w.sum()
    n = w.size
    u = kernels.uniform_block(seed, first_stream, trials, 0, 2 * n)
    q1 = _q_from_uniforms(u[:, :n], w, sampling)
    first = np.argmax(q1, axis=1)
    live = w > 0
    t = np.full(trials, float(t_partial))
    if relative:
        if live.sum() < 2 or t_partial == 0:
            t[:] = 0.0
        else:
            top2 = -np.sort(-q1[:, live], axis=1)[:, :2]
            with np.errstate(divide="ignore"):
                t = t_partial / (top2[:, 0] - top2[:, 1])
    # log of the closed-form residual populations, relative to the first winner
    gap = np.where(live, q1 - q1.max(axis=1, keepdims=True), 0.0)
    with np.errstate(invalid="ignore"):
        shift = np.where(gap < 0, gap * t[:, None], 0.0)
    with np.errstate(divide="ignore"):
        logw = np.log(np.where(live, w, 1.0))
    expo = np.where(live, logw + coupling * shift, -np.inf)
    expo -= expo.max(axis=1, keepdims=True)
    w2 = np.exp(expo)
    w2 /= w2.sum(axis=1, keepdims=True)
    q2 = _q_from_uniforms(u[:, n:], w2, sampling)
    second = np.argmax(q2, axis=1)
    return DiscriminatorResult(w, float(t_partial), relative, first.astype(np.int64), second.astype(np.int64))


# --- calibration ----------------------------------------------------------------

def theta_calibration(chi_n: float, weight: float, phase_curvature: float, m1: float) -> float:
    """1 - theta(m1) = m1 ln(chi_n / 2 pi) / (p_n phi_F''(x_n)).

    A consistency value relating phases to rates; it is reported, never used
    to drive the dynamics.
    """
    if not 0 < chi_n <= 2.0 * math.pi:
        raise ValueError("chi_n must lie in (0, 2 pi]")
    if weight <= 0:
        raise ValueError("weight must be positive")
    if phase_curvature == 0:
        raise ValueError("phase curvature must be non-zero")
    return m1 * math.log(chi_n / (2.0 * math.pi)) / (weight * phase_curvature)


def bins_from_centers(centers: Sequence[float], width: float) -> tuple:
    return tuple((c - 0.5 * width, c + 0.5 * width) for c in centers)
