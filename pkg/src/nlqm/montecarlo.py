"""Collapse ensembles and the statistical tests that judge them.

Trial ``i`` of an ensemble always draws from RNG stream ``i`` of the
master seed, and trials are tallied in fixed-size chunks whose counts are
summed in chunk order, so reports are identical for any worker count.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from . import kernels
from .grigorenko import SuperpositionState

SIGNIFICANCE = 0.01
MIN_EXPECTED = 5.0
CHUNK = 8192
ENGINES = ("grigorenko", "measurement", "uniform_control")


@dataclass(frozen=True)
class EnsembleConfig:
    trials: int
    master_seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")


@dataclass
class BornTestReport:
    expected: np.ndarray
    observed_counts: np.ndarray
    chi_square: float
    p_value: float
    dof: int
    merged: list = field(default_factory=list)
    significance: float = SIGNIFICANCE
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.p_value > self.significance

    @property
    def trials(self) -> int:
        return int(self.observed_counts.sum())

    def to_dict(self) -> dict:
        return {
            "expected": [float(v) for v in self.expected],
            "observed_counts": [int(v) for v in self.observed_counts],
            "trials": self.trials,
            "chi_square": self.chi_square,
            "dof": self.dof,
            "p_value": self.p_value,
            "significance": self.significance,
            "pass": self.passed,
            "merged": self.merged,
            **self.meta,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path) -> None:
        """``state_index,expected,observed`` with expected counts."""
        n = self.trials
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["state_index", "expected", "observed"])
            for i, (p, c) in enumerate(zip(self.expected, self.observed_counts)):
                w.writerow([i, f"{p * n:.17g}", int(c)])


# --- statistics ---------------------------------------------------------------

def chi2_sf(x: float, dof: int) -> float:
    """Upper tail of the chi-square distribution, Q(dof/2, x/2)."""
    if dof < 1:
        raise ValueError("dof must be positive")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return float(special.gammaincc(0.5 * dof, 0.5 * x))


def merge_groups(weights, trials: int, min_expected: float = MIN_EXPECTED) -> list[list[int]]:
    """Group state indices so every group expects at least ``min_expected`` counts.

    Zero-weight states are left out. The smallest-weight states are merged
    first; a short final group is folded into its neighbour.
    """
    w = np.asarray(weights, dtype=float)
    live = [int(i) for i in np.argsort(w, kind="stable") if w[i] > 0]
    groups, current, acc = [], [], 0.0
    for i in live:
        current.append(i)
        acc += w[i] * trials
        if acc >= min_expected:
            groups.append(sorted(current))
            current, acc = [], 0.0
    if current:
        if groups:
            groups[-1] = sorted(groups[-1] + current)
        else:
            groups.append(sorted(current))
    return sorted(groups)


def chi_square_gof(counts, weights, min_expected: float = MIN_EXPECTED):
    """Pearson goodness of fit of ``counts`` against ``weights``.

    Returns ``(statistic, dof, p_value, merged_groups)``; ``merged_groups``
    lists only groups of more than one state. Counts in zero-weight states
    make the statistic infinite.
    """
    counts = np.asarray(counts, dtype=np.int64)
    w = np.asarray(weights, dtype=float)
    if counts.shape != w.shape:
        raise ValueError("counts and weights must have the same length")
    n = int(counts.sum())
    if n < 1:
        raise ValueError("no observations")
    w = w / w.sum()
    groups = merge_groups(w, n, min_expected)
    merged = [g for g in groups if len(g) > 1]
    if merged:
        warnings.warn(f"expected counts below {min_expected}; merged states {merged}", stacklevel=2)
    if np.any(counts[w == 0] > 0):
        return math.inf, max(len(groups) - 1, 1), 0.0, merged
    dof = len(groups) - 1
    if dof == 0:
        return 0.0, 0, 1.0, merged
    obs = np.array([counts[g].sum() for g in groups], dtype=float)
    exp = np.array([w[g].sum() for g in groups]) * n
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, dof, chi2_sf(stat, dof), merged


def two_sample_chi_square(counts_a, counts_b):
    """Homogeneity test of two count vectors over the same categories.

    Returns ``(statistic, dof, p_value)``; categories empty in both samples
    are dropped.
    """
    a = np.asarray(counts_a, dtype=float)
    b = np.asarray(counts_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("count vectors must have the same length")
    keep = (a + b) > 0
    a, b = a[keep], b[keep]
    na, nb = a.sum(), b.sum()
    if na == 0 or nb == 0:
        raise ValueError("both samples need observations")
    dof = a.size - 1
    if dof == 0:
        return 0.0, 0, 1.0
    col = a + b
    ea, eb = col * na / (na + nb), col * nb / (na + nb)
    stat = float(np.sum((a - ea) ** 2 / ea) + np.sum((b - eb) ** 2 / eb))
    return stat, dof, chi2_sf(stat, dof)


CDFS: dict[str, Callable] = {
    "exp_neg": lambda u: np.exp(np.minimum(u, 0.0)),  # density e^u on (-inf, 0]
    "exponential": lambda x: -np.expm1(-np.maximum(x, 0.0)),
    "uniform": lambda x: np.clip(x, 0.0, 1.0),
    "normal": stats.norm.cdf,
}


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n: int
    significance: float = SIGNIFICANCE

    @property
    def passed(self) -> bool:
        return self.p_value > self.significance


def ks_test(samples, cdf="exp_neg") -> KSResult:
    """One-sample Kolmogorov-Smirnov test against a named or callable CDF."""
    x = np.asarray(samples, dtype=float).ravel()
    if np.any(np.isnan(x)):
        raise ValueError("samples contain NaN")
    if x.size < 100:
        raise ValueError(f"need at least 100 samples, got {x.size}")
    f = CDFS[cdf] if isinstance(cdf, str) else cdf
    x = np.sort(x)
    n = x.size
    F = f(x)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    return KSResult(d, float(stats.kstwo.sf(d, n)), n)


# --- ensembles ----------------------------------------------------------------

def _chunk_counts(engine, weights, seed, start, n, sampling):
    if engine == "uniform_control":
        u = kernels.uniform_block(seed, start, n, 0, weights.size)
        winners = np.argmax(np.where(weights > 0, u, -np.inf), axis=1)
    else:
        phase = engine == "measurement" and sampling == "phase_mechanism"
        winners = kernels.born_winners(weights, seed, start, n, phase)
    return np.bincount(winners, minlength=weights.size)


def ensemble_counts(weights, config: EnsembleConfig, engine: str = "grigorenko",
                    sampling: str = "born_distribution") -> np.ndarray:
    """Winner counts over ``config.trials`` trials."""
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}, got {engine!r}")
    if sampling not in ("born_distribution", "phase_mechanism"):
        raise ValueError(f"unknown sampling {sampling!r}")
    w = np.ascontiguousarray(weights, dtype=np.float64)
    starts = range(0, config.trials, CHUNK)
    jobs = [(s, min(CHUNK, config.trials - s)) for s in starts]

    def run(job):
        return _chunk_counts(engine, w, config.master_seed, job[0], job[1], sampling)

    if config.parallelism == 1 or len(jobs) == 1:
        parts = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            parts = list(pool.map(run, jobs))
    return np.sum(parts, axis=0).astype(np.int64)


def run_born_ensemble(state, config: EnsembleConfig, engine: str = "grigorenko",
                      sampling: str = "born_distribution") -> BornTestReport:
    """Collapse ``config.trials`` copies of ``state`` and test the winners against |a_n|^2.

    ``grigorenko`` draws q_n = ln(U)/p_n; ``measurement`` draws the onset rates
    in either sampling mode; ``uniform_control`` ignores the weights (a
    negative control that should fail).
    """
    w = state.populations if isinstance(state, SuperpositionState) else np.asarray(state, dtype=float)
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be non-negative with a positive sum")
    w = w / w.sum()
    counts = ensemble_counts(w, config, engine, sampling)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        stat, dof, p, merged = chi_square_gof(counts, w)
    meta = {"engine": engine, "master_seed": config.master_seed}
    if engine == "measurement":
        meta["sampling"] = sampling
    if merged:
        warnings.warn(f"chi-square validity: merged low-count states {merged}", stacklevel=2)
    return BornTestReport(w, counts, stat, p, dof, merged, meta=meta)
