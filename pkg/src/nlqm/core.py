"""Physical constants, unit conversion, the theta(m) interpolation and RNG streams."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import kernels

# CODATA 2018
HBAR_SI = 1.054571817e-34
C_SI = 299792458.0
G_SI = 6.67430e-11
PROTON_MASS_SI = 1.67262192369e-27


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants in a consistent unit system (SI by default).

    ``m_planck`` is derived from the stored ``hbar``, ``c`` and ``G`` and is
    never stored independently.
    """

    hbar: float = HBAR_SI
    c: float = C_SI
    G: float = G_SI
    m_atom: float = PROTON_MASS_SI

    def __post_init__(self):
        for name in ("hbar", "c", "G", "m_atom"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"constant {name} must be positive and finite, got {value!r}")

    @property
    def m_planck(self) -> float:
        return math.sqrt(self.hbar * self.c / self.G)

    @classmethod
    def natural(cls, m_atom: float | None = None) -> "PhysicalConstants":
        """hbar = c = G = 1; ``m_atom`` defaults to the proton mass in Planck units."""
        if m_atom is None:
            m_atom = PROTON_MASS_SI / cls().m_planck
        return cls(hbar=1.0, c=1.0, G=1.0, m_atom=m_atom)

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "PhysicalConstants":
        """Build from config keys ``constants.hbar`` etc. (prefix optional)."""
        kwargs = {}
        for key, raw in values.items():
            name = key.split(".", 1)[1] if key.startswith("constants.") else key
            if name not in ("hbar", "c", "G", "m_atom"):
                raise KeyError(f"unknown constant {key!r}")
            kwargs[name] = float(raw)
        return cls(**kwargs)


CODATA = PhysicalConstants()


def planck_mass(constants: PhysicalConstants = CODATA) -> float:
    """sqrt(hbar c / G) in the units of ``constants``."""
    return constants.m_planck


# --- unit conversion -------------------------------------------------------

# (mass, length, time) exponents
MASS = (1, 0, 0)
LENGTH = (0, 1, 0)
TIME = (0, 0, 1)
ACTION = (1, 2, -1)
ENERGY = (1, 2, -2)
RATE = (0, 0, -1)
DIFFUSIVITY = (0, 2, -1)
SPEED = (0, 1, -1)


@dataclass(frozen=True)
class UnitSystem:
    """Converts between SI and Planck-natural units (hbar = c = m_planck = 1).

    ``mode`` records which system a computation declares it works in;
    conversions are always SI <-> natural regardless of ``mode``.
    """

    mode: str = "natural"
    constants: PhysicalConstants = field(default=CODATA)

    def __post_init__(self):
        if self.mode not in ("SI", "natural"):
            raise ValueError(f"unit mode must be 'SI' or 'natural', got {self.mode!r}")

    @property
    def scales(self) -> tuple[float, float, float]:
        m = self.constants.m_planck
        length = self.constants.hbar / (m * self.constants.c)
        return m, length, length / self.constants.c

    def _factor(self, dims) -> float:
        m, length, t = self.scales
        a, b, c = dims
        return m**a * length**b * t**c

    def to_natural(self, value, dims):
        return np.asarray(value, dtype=float) / self._factor(dims)

    def to_si(self, value, dims):
        return np.asarray(value, dtype=float) * self._factor(dims)


# --- theta(m) ----------------------------------------------------------------

ThetaProfile = Callable[[float], float]


def _planck_ratio(x: float) -> float:
    return 1.0 / (1.0 + x)


THETA_PROFILES: dict[str, ThetaProfile] = {"planck_ratio": _planck_ratio}


def register_theta_profile(name: str, profile: ThetaProfile) -> None:
    """Register a profile theta(m / m_planck); it must decrease from 1 to 0."""
    if profile(0.0) != 1.0:
        raise ValueError("theta profile must equal 1 at zero mass")
    THETA_PROFILES[name] = profile


def theta_of_mass(m: float, constants: PhysicalConstants = CODATA, profile: str = "planck_ratio") -> float:
    """Interpolation parameter theta(m) = 1 / (1 + m/m_planck) by default."""
    if m < 0:
        raise ValueError(f"mass must be non-negative, got {m!r}")
    return THETA_PROFILES[profile](m / constants.m_planck)


def nonlinearity_of_mass(m: float, constants: PhysicalConstants = CODATA, profile: str = "planck_ratio") -> float:
    """1 - theta(m), evaluated without cancellation for the default profile."""
    if m < 0:
        raise ValueError(f"mass must be non-negative, got {m!r}")
    x = m / constants.m_planck
    if profile == "planck_ratio":
        return x / (1.0 + x)
    return 1.0 - THETA_PROFILES[profile](x)


# --- random streams ----------------------------------------------------------

class RngStream:
    """Counter-based SplitMix64 stream keyed by ``(master_seed, stream_index)``.

    Draw ``i`` of a stream is a pure function of the seed, the stream index
    and ``i``, so any set of trials can be evaluated in any order or on any
    number of workers with identical results. Uniform variates lie in (0, 1].
    """

    __slots__ = ("master_seed", "stream_index", "counter")

    def __init__(self, master_seed: int, stream_index: int = 0):
        if stream_index < 0:
            raise ValueError("stream_index must be non-negative")
        self.master_seed = int(master_seed) & kernels.MASK64
        self.stream_index = int(stream_index)
        self.counter = 0

    def __repr__(self):
        return f"RngStream({self.master_seed}, {self.stream_index}, counter={self.counter})"

    def next_u64(self) -> int:
        value = kernels.stream_u64(self.master_seed, self.stream_index, self.counter)
        self.counter += 1
        return value

    def uniform(self, size: int | None = None):
        """One float (``size=None``) or an array of ``size`` floats in (0, 1]."""
        if size is None:
            return kernels.u64_to_unit(self.next_u64())
        out = kernels.uniform_block(self.master_seed, self.stream_index, 1, self.counter, size)[0]
        self.counter += size
        return out

    def normal(self, size: int):
        """Standard normals by Box-Muller (consumes ``2 * size`` uniforms)."""
        u = self.uniform(2 * size)
        r = np.sqrt(-2.0 * np.log(u[:size]))
        return r * np.cos(2.0 * np.pi * u[size:])
