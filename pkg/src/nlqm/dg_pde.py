"""One-dimensional grid integrators for the linear, Doebner-Goldin and theta-model
Schrodinger equations, with density/current diagnostics.

All three engines share one method-of-lines right-hand side::

    i hbar psi_t = -(hbar^2/2m) psi'' + V psi                       (linear)
                   + i D hbar (psi'' + |psi'|^2/|psi|^2 psi)          (Doebner-Goldin)
                   + (hbar^2/2m)(1 - theta) psi (log psi)''          (theta model)

The last term uses ``psi'' - (psi'/psi)^2 psi = psi (log psi)''``, evaluated
from logarithms of neighbour ratios so that plane waves are transparent to
rounding. Near nodes the logarithmic terms are tapered to zero.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import (
    BranchError,
    DegenerateStateError,
    GridMismatchError,
    StabilityError,
)
from .integrate import DormandPrince

BOUNDARIES = ("periodic", "absorbing")
ENGINES = ("linear", "dg", "theta")
STENCILS = ("spectral", "fd2")
TAPER_EPS = 1e-10
MAX_PHASE_STEP = math.pi / 2
DEGENERATE_FRACTION = 0.05
IMAG_AXIS_LIMIT = 0.9  # |lambda dt| kept inside the damped part of the imaginary axis
NORM_ABORT = 1e-4
ABSORB_FRACTION = 0.1


@dataclass
class GridWavefunction:
    """Complex field on a uniform grid ``x_j = x0 + j*dx``."""

    x0: float
    dx: float
    values: np.ndarray
    boundary: str = "periodic"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128).ravel()
        if not self.dx > 0:
            raise ValueError(f"grid spacing must be positive, got {self.dx!r}")
        if self.values.size < 16:
            raise ValueError(f"need at least 16 grid points, got {self.values.size}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if not math.isfinite(self.norm()):
            raise ValueError("wavefunction norm is not finite")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n)

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.dx)

    def normalized(self) -> "GridWavefunction":
        return self.with_values(self.values / math.sqrt(self.norm()))

    def with_values(self, values) -> "GridWavefunction":
        return GridWavefunction(self.x0, self.dx, values, self.boundary)

    def same_grid(self, other: "GridWavefunction") -> bool:
        return (self.n == other.n and self.x0 == other.x0 and self.dx == other.dx
                and self.boundary == other.boundary)

    def to_csv(self, path, mass: float = 1.0, hbar: float = 1.0) -> None:
        """Write ``x,re_psi,im_psi,rho,j`` rows at 17 significant digits."""
        dc = density_current(self, PDEParams(mass=mass, hbar=hbar))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "re_psi", "im_psi", "rho", "j"])
            for row in zip(self.x, self.values.real, self.values.imag, dc.rho, dc.j):
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, boundary: str = "periodic") -> "GridWavefunction":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no rows")
        x = np.array([float(r["x"]) for r in rows])
        psi = np.array([float(r["re_psi"]) + 1j * float(r["im_psi"]) for r in rows])
        dx = np.diff(x)
        if np.ptp(dx) > 1e-9 * abs(dx[0]):
            raise ValueError(f"{path}: grid is not uniform")
        return cls(float(x[0]), float(dx.mean()), psi, boundary)


@dataclass(frozen=True)
class PDEParams:
    """Physical and numerical parameters (natural units, hbar = 1 by default).

    ``dt`` is the maximum step handed to the adaptive integrator; ``None``
    selects the stability bound.
    """

    mass: float = 1.0
    theta: float = 1.0
    diffusion_D: float = 0.0
    potential: Callable[[np.ndarray], np.ndarray] | None = None
    dt: float | None = None
    hbar: float = 1.0
    stencil: str = "spectral"
    atol: float = 1e-10
    rtol: float = 1e-10
    absorb_rate: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.stencil not in STENCILS:
            raise ValueError(f"stencil must be one of {STENCILS}")


@dataclass
class DensityCurrent:
    rho: np.ndarray
    j: np.ndarray


@dataclass
class PDERun:
    engine: str
    params: PDEParams
    times: np.ndarray
    states: list
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> GridWavefunction:
        return self.states[-1]


# --- spatial operators ---------------------------------------------------------

def _wavenumbers(n, dx):
    return 2.0 * np.pi * np.fft.fftfreq(n, d=dx)


def laplacian(psi: GridWavefunction, stencil: str = "spectral") -> np.ndarray:
    return _laplacian(psi.values, psi.dx, psi.periodic, stencil)


def _laplacian(y, dx, periodic, stencil):
    if stencil == "spectral":
        k = _wavenumbers(y.size, dx)
        return np.fft.ifft(-(k * k) * np.fft.fft(y))
    lap = (np.roll(y, -1) - 2.0 * y + np.roll(y, 1)) / (dx * dx)
    if not periodic:
        lap[0] = (y[1] - 2.0 * y[0]) / (dx * dx)
        lap[-1] = (y[-2] - 2.0 * y[-1]) / (dx * dx)
    return lap


def _d1(f, dx, periodic):
    if periodic:
        return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * dx)
    return np.gradient(f, dx, edge_order=2)


def _d2(f, dx, periodic):
    if periodic:
        return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / (dx * dx)
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (dx * dx)
    out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / (dx * dx)
    out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / (dx * dx)
    return out


def absorbing_profile(psi: GridWavefunction, rate: float) -> np.ndarray:
    """Cosine ramp of damping rate over the outer 10% on each side."""
    n = psi.n
    width = max(int(round(ABSORB_FRACTION * n)), 1)
    depth = np.zeros(n)
    ramp = np.arange(width, 0, -1) / width  # 1 at the edge
    depth[:width] = ramp
    depth[n - width:] = ramp[::-1]
    return rate * 0.5 * (1.0 - np.cos(np.pi * depth))


def _interior_mask(psi: GridWavefunction) -> np.ndarray:
    mask = np.ones(psi.n, dtype=bool)
    if not psi.periodic:
        width = max(int(round(ABSORB_FRACTION * psi.n)), 1)
        mask[:width + 1] = False
        mask[psi.n - width - 1:] = False
    return mask


def stability_bound(psi: GridWavefunction, params: PDEParams) -> float:
    """Largest step keeping |lambda_max| * dt <= 0.9 for the 5(4) pair.

    The pair only damps purely imaginary eigenvalues for ``|lambda dt|``
    below about 0.99; beyond that grid-scale noise is amplified every step.
    For the second-order stencil with D = 0 this gives ``0.45 m dx^2 / hbar``.
    """
    k2max = (math.pi / psi.dx) ** 2 if params.stencil == "spectral" else 4.0 / psi.dx**2
    lam = k2max * math.hypot(params.diffusion_D, params.hbar / (2.0 * params.mass))
    if params.potential is not None:
        lam += float(np.max(np.abs(params.potential(psi.x)))) / params.hbar
    if not psi.periodic:
        lam += params.absorb_rate
    return IMAG_AXIS_LIMIT / lam


def check_nodes(psi: GridWavefunction, eps: float = TAPER_EPS) -> float:
    """Fraction of grid points below the taper floor inside the support.

    Raises DegenerateStateError above 5%. Vanishing tails outside the span
    of above-floor points are not nodes and are not counted.
    """
    amp = np.abs(psi.values)
    above = amp >= eps * amp.max()
    idx = np.flatnonzero(above)
    if idx.size == 0:
        raise DegenerateStateError("wavefunction vanishes everywhere")
    inside = ~above[idx[0]:idx[-1] + 1]
    frac = float(inside.sum()) / psi.n
    if frac > DEGENERATE_FRACTION:
        raise DegenerateStateError(
            f"{100 * frac:.1f}% of the grid lies below the |psi| floor inside the support"
        )
    return frac


def taper_floor(params: PDEParams, engine: str) -> float:
    """Relative |psi| floor of the node taper.

    For the theta model the floor is placed on the effective modulus
    ``|psi|^(1/theta)``, i.e. ``|psi| < eps^theta max|psi|``. Below that level
    psi_eff is under double-precision roundoff relative to its peak and the
    nonlinear term would only amplify noise.
    """
    return TAPER_EPS ** params.theta if engine == "theta" else TAPER_EPS


def _log_terms(y, dx, periodic, eps=TAPER_EPS):
    d1, d2, w, step = kernels.log_derivatives(y, dx, eps, periodic)
    if step > MAX_PHASE_STEP:
        raise BranchError(f"adjacent phase step {step:.3f} exceeds pi/2; phase is under-resolved")
    return d1, d2, w


def theta_nonlinear_term(psi: GridWavefunction, params: PDEParams) -> np.ndarray:
    """(hbar^2/2m)(1 - theta)(psi'' - (d/dx ln psi)^2 psi), with node taper."""
    _, d2, w = _log_terms(psi.values, psi.dx, psi.periodic, taper_floor(params, "theta"))
    coeff = params.hbar**2 / (2.0 * params.mass) * (1.0 - params.theta)
    return coeff * w * d2 * psi.values


def dg_nonlinear_term(psi: GridWavefunction, params: PDEParams) -> np.ndarray:
    """i D hbar |psi'|^2/|psi|^2 psi, with node taper."""
    d1, _, w = _log_terms(psi.values, psi.dx, psi.periodic)
    return 1j * params.diffusion_D * params.hbar * w * np.abs(d1) ** 2 * psi.values


def make_rhs(psi: GridWavefunction, params: PDEParams, engine: str):
    """psi_t as a function of (t, values) for the chosen engine."""
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}, got {engine!r}")
    dx, periodic, stencil = psi.dx, psi.periodic, params.stencil
    kin = 1j * params.hbar / (2.0 * params.mass)
    pot = None if params.potential is None else -1j * np.asarray(params.potential(psi.x)) / params.hbar
    damp = None if periodic else absorbing_profile(psi, params.absorb_rate)
    D = params.diffusion_D if engine == "dg" else 0.0
    nl_theta = kin * (1.0 - params.theta) if engine == "theta" else 0.0
    eps = taper_floor(params, engine)

    def rhs(_t, y):
        lap = _laplacian(y, dx, periodic, stencil)
        out = kin * lap
        if pot is not None:
            out += pot * y
        if damp is not None:
            out -= damp * y
        if D != 0.0:
            d1, _, w = _log_terms(y, dx, periodic, eps)
            out += D * lap + D * w * (d1.real**2 + d1.imag**2) * y
        if nl_theta != 0.0:
            _, d2, w = _log_terms(y, dx, periodic, eps)
            out -= nl_theta * w * d2 * y
        return out

    return rhs


def run_pde(engine: str, psi: GridWavefunction, params: PDEParams, t: float,
            snapshot_every: float | None = None) -> PDERun:
    """Integrate to time ``t``, storing snapshots at multiples of ``snapshot_every``.

    The initial state is always the first snapshot and the state at ``t`` the
    last. Conserved-norm drift (standard norm for linear and D-G, effective
    norm for the theta model) is recorded in ``meta``; drift beyond 1e-4 of
    the standard norm aborts with StabilityError on periodic grids.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    bound = stability_bound(psi, params)
    if params.dt is not None and params.dt > bound * (1 + 1e-12):
        raise ValueError(f"dt={params.dt!r} exceeds the stability bound {bound!r}")
    h_max = params.dt if params.dt is not None else bound
    nonlinear = (engine == "dg" and params.diffusion_D != 0) or (engine == "theta" and params.theta != 1)
    if nonlinear:
        check_nodes(psi)

    if snapshot_every is None or snapshot_every <= 0 or snapshot_every >= t:
        targets = [t] if t > 0 else []
    else:
        k = int(math.floor(t / snapshot_every + 1e-9))
        targets = [i * snapshot_every for i in range(1, k + 1)]
        if t - targets[-1] > 1e-12 * max(t, 1.0):
            targets.append(t)
        else:
            targets[-1] = t

    conserve = engine != "theta" and psi.periodic
    norm0 = psi.norm()

    def watch(tt, y):
        drift = abs(np.sum(y.real**2 + y.imag**2) * psi.dx - norm0)
        if drift > NORM_ABORT * norm0:
            raise StabilityError(f"norm drift {drift:.3e} at t={tt!r}; reduce dt")

    solver = DormandPrince(make_rhs(psi, params, engine), atol=params.atol, rtol=params.rtol, h_max=h_max)
    times = [0.0]
    states = [psi]
    y, h, t_now = psi.values, None, 0.0
    for target in targets:
        y, h = solver.advance(t_now, y, target, h, on_step=watch if conserve else None)
        t_now = target
        snap = psi.with_values(y)
        if nonlinear:
            check_nodes(snap)
        times.append(target)
        states.append(snap)

    meta = {"steps": solver.n_steps, "rejected": solver.n_rejected, "h_max": h_max}
    meta["norm_drift"] = states[-1].norm() - norm0
    if engine == "theta":
        p = 2.0 / params.theta
        e0 = float(np.sum(np.abs(states[0].values) ** p)) * psi.dx
        e1 = float(np.sum(np.abs(states[-1].values) ** p)) * psi.dx
        meta["effective_norm_drift"] = e1 - e0
    return PDERun(engine, params, np.array(times), states, meta)


def evolve_linear(psi: GridWavefunction, params: PDEParams, t: float) -> GridWavefunction:
    return run_pde("linear", psi, params, t).final


def evolve_doebner_goldin(psi: GridWavefunction, params: PDEParams, t: float) -> GridWavefunction:
    return run_pde("dg", psi, params, t).final


def evolve_nonlinear_theta(psi: GridWavefunction, params: PDEParams, t: float) -> GridWavefunction:
    return run_pde("theta", psi, params, t).final


# --- diagnostics ---------------------------------------------------------------

def unwrapped_log(psi: GridWavefunction, eps: float = TAPER_EPS) -> np.ndarray:
    """log psi on the continuous branch, unwrapped left to right.

    Phase jumps are only checked between points above ``eps * max|psi|``;
    below that the phase is noise and is accumulated as is.
    """
    y = psi.values
    amp = np.abs(y)
    if np.any(amp == 0) or not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero((amp == 0) | ~np.isfinite(y))[0])
        raise BranchError(f"log psi undefined: zero modulus at x={psi.x[bad]!r}")
    steps = np.angle(y[1:] / y[:-1])
    floor = eps * amp.max()
    resolved = (amp[1:] >= floor) & (amp[:-1] >= floor)
    if np.any(np.abs(steps[resolved]) > MAX_PHASE_STEP):
        j = int(np.flatnonzero(resolved & (np.abs(steps) > MAX_PHASE_STEP))[0])
        raise BranchError(f"phase jump {steps[j]:.3f} between x={psi.x[j]!r} and the next point")
    phase = np.angle(y[0]) + np.concatenate(([0.0], np.cumsum(steps)))
    return np.log(amp) + 1j * phase


def quasi_action(psi: GridWavefunction, hbar: float = 1.0) -> np.ndarray:
    """Complex action S = -i hbar log psi (the substitution psi = exp(iS/hbar))."""
    return -1j * hbar * unwrapped_log(psi)


def effective_wavefunction(psi: GridWavefunction, theta: float) -> GridWavefunction:
    """psi ** (1/theta) on the continuous branch of log psi."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    if theta == 1:
        return psi.with_values(psi.values.copy())
    return psi.with_values(np.exp(unwrapped_log(psi, TAPER_EPS**theta) / theta))


def density_current(psi: GridWavefunction, params: PDEParams, effective: bool = False) -> DensityCurrent:
    """Probability density and current by centred differences.

    Standard: rho = |psi|^2, j = (hbar/m) Im(psi* psi').
    Effective: the same built from psi_eff = psi^(1/theta) with hbar -> theta*hbar.
    """
    if effective:
        field_ = effective_wavefunction(psi, params.theta)
        hbar = params.hbar * params.theta
    else:
        field_, hbar = psi, params.hbar
    y = field_.values
    rho = y.real**2 + y.imag**2
    j = hbar / params.mass * np.imag(np.conj(y) * _d1(y, psi.dx, psi.periodic))
    return DensityCurrent(rho, j)


@dataclass
class ResidualReport:
    field: np.ndarray  # (snapshots - 2, n); zero outside the evaluated region
    max_norm: float
    l2_norm: float


def continuity_residual(states: Sequence[GridWavefunction], params: PDEParams, mode: str,
                        spacing: float) -> ResidualReport:
    """Discrete residual of a conservation law along stored snapshots.

    ``mode`` selects ``standard`` (rho_t + j' = 0), ``fokker_planck``
    (rho_t + j' - D rho'' = 0) or ``effective`` (standard law for the
    theta-model effective density and current). Time derivatives are centred
    over neighbouring snapshots ``spacing`` apart; space derivatives are
    centred differences. The absorbing layer is excluded.
    """
    if mode not in ("standard", "fokker_planck", "effective"):
        raise ValueError(f"unknown residual mode {mode!r}")
    if len(states) < 3:
        raise ValueError("need at least three snapshots")
    first = states[0]
    for s in states[1:]:
        if not s.same_grid(first):
            raise GridMismatchError("snapshots are on different grids")
    dcs = [density_current(s, params, effective=(mode == "effective")) for s in states]
    dx, periodic = first.dx, first.periodic
    mask = _interior_mask(first)
    rows = []
    for k in range(1, len(states) - 1):
        rho_t = (dcs[k + 1].rho - dcs[k - 1].rho) / (2.0 * spacing)
        r = rho_t + _d1(dcs[k].j, dx, periodic)
        if mode == "fokker_planck":
            r = r - params.diffusion_D * _d2(dcs[k].rho, dx, periodic)
        rows.append(np.where(mask, r, 0.0))
    field_ = np.array(rows)
    max_norm = float(np.max(np.abs(field_)))
    l2 = float(np.sqrt(np.mean(np.sum(field_**2, axis=1) * dx)))
    return ResidualReport(field_, max_norm, l2)


RESIDUAL_MODE = {"linear": "standard", "dg": "fokker_planck", "theta": "effective"}


def write_snapshots(run: PDERun, directory, stem: str) -> tuple[list, dict]:
    """One ``x,re_psi,im_psi,rho,j`` CSV per snapshot plus a run summary.

    The summary holds the grid, parameters, snapshot times, file names and,
    with at least three evenly spaced snapshots, the residual norms of the
    conservation law matching the engine.
    """
    directory = Path(directory)
    p = run.params
    paths = []
    for i, s in enumerate(run.states):
        path = directory / f"{stem}.snap{i:04d}.csv"
        s.to_csv(path, mass=p.mass, hbar=p.hbar)
        paths.append(path)
    first = run.states[0]
    summary = {
        "grid": {"x0": first.x0, "dx": first.dx, "n": first.n, "boundary": first.boundary},
        "params": {"engine": run.engine, "mass": p.mass, "theta": p.theta, "diffusion_D": p.diffusion_D,
                   "hbar": p.hbar, "stencil": p.stencil, "dt": p.dt},
        "times": [float(t) for t in run.times],
        "snapshots": [path.name for path in paths],
    }
    gaps = np.diff(run.times)
    if len(run.states) >= 3 and np.ptp(gaps) <= 1e-9 * gaps.mean():
        mode = RESIDUAL_MODE[run.engine]
        rep = continuity_residual(run.states, p, mode, float(gaps.mean()))
        summary["residual"] = {"mode": mode, "max_norm": rep.max_norm, "l2_norm": rep.l2_norm}
    return paths, summary


# --- initial states --------------------------------------------------------------

def centered_grid(n: int, dx: float) -> tuple[float, float]:
    return -0.5 * n * dx, dx


def gaussian_packet(n: int, dx: float, sigma: float, center: float = 0.0, k0: float = 0.0,
                    boundary: str = "periodic") -> GridWavefunction:
    """Normalised Gaussian whose density has standard deviation ``sigma``."""
    x0, _ = centered_grid(n, dx)
    x = x0 + dx * np.arange(n)
    psi = np.exp(-((x - center) ** 2) / (4.0 * sigma**2) + 1j * k0 * x)
    return GridWavefunction(x0, dx, psi, boundary).normalized()


def plane_wave(n: int, dx: float, mode: int, boundary: str = "periodic") -> GridWavefunction:
    """Normalised exp(ikx) with k = 2 pi mode / L, an eigenmode of the periodic grid.

    The phase of sample j is reduced to ``2 pi (mode j mod n) / n`` before
    exponentiating and the offset ``k x0`` is applied as a separate factor,
    so high modes carry no rounding from large ``k x``.
    """
    x0, _ = centered_grid(n, dx)
    k = 2.0 * np.pi * mode / (n * dx)
    steps = (mode * np.arange(n)) % n
    psi = np.exp(1j * k * x0) * np.exp(2j * np.pi * steps / n)
    return GridWavefunction(x0, dx, psi, boundary).normalized()


def free_gaussian_width(sigma0: float, t: float, mass: float = 1.0, hbar: float = 1.0) -> float:
    """sigma(t) = sigma0 sqrt(1 + (hbar t / (2 m sigma0^2))^2)."""
    return sigma0 * math.sqrt(1.0 + (hbar * t / (2.0 * mass * sigma0**2)) ** 2)


def position_width(psi: GridWavefunction) -> float:
    rho = np.abs(psi.values) ** 2
    rho = rho / rho.sum()
    mean = float(np.sum(rho * psi.x))
    return math.sqrt(float(np.sum(rho * (psi.x - mean) ** 2)))

