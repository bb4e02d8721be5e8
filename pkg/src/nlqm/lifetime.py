"""Superposition lifetimes of mesoscopic and macroscopic objects.

The collapse time is ``tau = m1 / ((1 - theta(m1)) phi_F'')``. Two phase
conventions turn it into numbers:

* ground state, ``phi = N hbar`` with ``phi'' ~ phi / L^2`` and
  ``L^3 = N a^3``, giving ``tau = (1 + m/m_Pl) (m_Pl a^2 / hbar) N^(-1/3)``;
* classical action, ``phi = m c^2 tau``, giving ``tau ~ L / c`` near the
  Planck mass and ``tau^2 = m_Pl a^2 / (m_atom c^2 N^(1/3))`` with the
  default theta profile.

All formulas are evaluated exactly in SI; ``tier`` gives the order of
magnitude (floor of log10) used for comparisons with quoted estimates.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

from .core import CODATA, PhysicalConstants, nonlinearity_of_mass
from .errors import InfiniteLifetimeError


@dataclass(frozen=True)
class ObjectSpec:
    """An object of ``n_atoms`` atoms of size ``atomic_length`` (SI).

    ``linear_size`` defaults to ``(N a^3)^(1/3)`` and ``mass`` to
    ``N m_atom``.
    """

    n_atoms: float
    atomic_length: float = 1e-10
    linear_size: float | None = None
    mass: float | None = None

    def __post_init__(self):
        if not self.n_atoms >= 1:
            raise ValueError(f"n_atoms must be at least 1, got {self.n_atoms!r}")
        if not self.atomic_length > 0:
            raise ValueError("atomic_length must be positive")
        for name in ("linear_size", "mass"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive when given")

    @property
    def length(self) -> float:
        if self.linear_size is not None:
            return self.linear_size
        return self.n_atoms ** (1.0 / 3.0) * self.atomic_length

    def total_mass(self, constants: PhysicalConstants = CODATA) -> float:
        return self.mass if self.mass is not None else self.n_atoms * constants.m_atom


def tier(value: float) -> int:
    """Order of magnitude, floor(log10(value))."""
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"tier needs a positive finite value, got {value!r}")
    return math.floor(math.log10(value))


def ground_state_curvature(n_atoms: float, length: float, hbar: float = CODATA.hbar) -> float:
    """phi'' ~ N hbar / L^2."""
    return n_atoms * hbar / length**2


def classical_action_curvature(mass: float, length: float, t: float, c: float = CODATA.c) -> float:
    """phi'' ~ m c^2 t / L^2 for an action accumulated over time ``t``."""
    return mass * c**2 * t / length**2


def tau_general(m1: float, theta: float, phase_curvature: float) -> float:
    """m1 / ((1 - theta) phi''); the sign follows the curvature."""
    if not 0 <= theta <= 1:
        raise ValueError(f"theta must lie in [0, 1], got {theta!r}")
    if theta == 1:
        raise InfiniteLifetimeError("theta = 1: no nonlinearity, the lifetime is infinite")
    if phase_curvature == 0:
        raise ValueError("phase curvature must be non-zero")
    return m1 / ((1.0 - theta) * phase_curvature)


def tau_apparatus(length: float, constants: PhysicalConstants = CODATA) -> float:
    """L / c, the estimate for an apparatus near or above the Planck mass."""
    if not length > 0:
        raise ValueError("length must be positive")
    return length / constants.c


def tau_mesoscopic(spec: ObjectSpec, constants: PhysicalConstants = CODATA) -> float:
    """Ground-state estimate ``m1 L^2 / ((1 - theta) N hbar)``.

    With the default ``L^3 = N a^3`` and ``m1 = N m_atom`` this equals
    ``(1 + m1/m_Pl) (m_Pl a^2 / hbar) N^(-1/3)``.
    """
    m1 = spec.total_mass(constants)
    gamma = nonlinearity_of_mass(m1, constants)
    if gamma == 0:
        raise InfiniteLifetimeError("object mass is zero")
    curvature = ground_state_curvature(spec.n_atoms, spec.length, constants.hbar)
    return m1 / (gamma * curvature)


def tau_planck_regime(spec: ObjectSpec, constants: PhysicalConstants = CODATA) -> float:
    """sqrt(m_Pl a^2 / (m_atom c^2 N^(1/3)))."""
    a = spec.atomic_length
    return math.sqrt(constants.m_planck * a**2 / (constants.m_atom * constants.c**2 * spec.n_atoms ** (1.0 / 3.0)))


FORMULAS = {
    "mesoscopic": tau_mesoscopic,
    "planck_regime": tau_planck_regime,
    "apparatus": lambda spec, constants=CODATA: tau_apparatus(spec.length, constants),
}

PHASE_CONVENTION = {
    "mesoscopic": "ground state, phi = N hbar",
    "planck_regime": "classical action, phi = m c^2 tau",
    "apparatus": "classical action, phi = m c^2 tau",
}


@dataclass(frozen=True)
class LifetimeRow:
    name: str
    n_atoms: float
    a: float
    L: float
    mass: float
    formula: str
    tau_s: float
    tier: int
    phase_convention: str
    quoted_estimate: str | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def lifetime_row(name: str, spec: ObjectSpec, formula: str, constants: PhysicalConstants = CODATA,
                 quote: str | None = None) -> LifetimeRow:
    if formula not in FORMULAS:
        raise ValueError(f"formula must be one of {sorted(FORMULAS)}, got {formula!r}")
    tau = FORMULAS[formula](spec, constants)
    return LifetimeRow(name, spec.n_atoms, spec.atomic_length, spec.length, spec.total_mass(constants),
                       formula, tau, tier(tau), PHASE_CONVENTION[formula], quote)


LIGO_QUOTE = "we predict that the superposition lifetime will be about $10^{-8}$ seconds"
TABLE_QUOTE = "the superposition lifetime is $10^{3}$, $10^{2}$, $10$,  seconds respectively"


def experiment_presets(constants: PhysicalConstants = CODATA) -> list[LifetimeRow]:
    """Predicted lifetimes for the mesoscopic experiments discussed in the literature.

    Quoted estimates are attached verbatim where one was published. The
    interferometer mirror row uses ``L / c`` for a 10 cm, 1 kg object; its
    quoted estimate is about 1.5 orders of magnitude above ``L / c``.
    """
    mirror_mass = 1.0
    return [
        lifetime_row("Vienna", ObjectSpec(1e9), "mesoscopic", constants, TABLE_QUOTE),
        lifetime_row("CalTech (N=1e9)", ObjectSpec(1e9), "mesoscopic", constants, TABLE_QUOTE),
        lifetime_row("CalTech (N=1e10)", ObjectSpec(1e10), "mesoscopic", constants),
        lifetime_row("LIGO", ObjectSpec(mirror_mass / constants.m_atom, linear_size=0.1, mass=mirror_mass),
                     "apparatus", constants, LIGO_QUOTE),
        lifetime_row("Oxford", ObjectSpec(1e14), "mesoscopic", constants),
    ]


TABLE_FIELDS = ("name", "n_atoms", "a", "L", "mass", "formula", "tau_s", "tier", "phase_convention", "quoted_estimate")


def write_table(rows, path, fmt: str = "csv") -> None:
    """Emit lifetime rows as CSV (17 significant digits) or JSON."""
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump([r.as_dict() for r in rows], fh, indent=2)
            fh.write("\n")
        return
    if fmt != "csv":
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_FIELDS)
        for r in rows:
            d = r.as_dict()
            w.writerow([f"{d[k]:.17g}" if isinstance(d[k], float) else ("" if d[k] is None else d[k])
                        for k in TABLE_FIELDS])
