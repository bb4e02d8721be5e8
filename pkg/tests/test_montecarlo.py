import csv
import json
import math
import warnings

import numpy as np
import pytest

from nlqm.core import RngStream
from nlqm.grigorenko import SuperpositionState, sample_u_phase
from nlqm.montecarlo import (
    CHUNK, EnsembleConfig, chi2_sf, chi_square_gof, ensemble_counts, ks_test, merge_groups,
    run_born_ensemble, two_sample_chi_square,
)

# upper critical values of the chi-square distribution, df = 1..10
CRITICAL_05 = [3.841, 5.991, 7.815, 9.488, 11.070, 12.592, 14.067, 15.507, 16.919, 18.307]
CRITICAL_01 = [6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209]


@pytest.mark.parametrize("dof", range(1, 11))
def test_chi2_sf_against_table(dof):
    assert chi2_sf(CRITICAL_05[dof - 1], dof) == pytest.approx(0.05, abs=2e-4)
    assert chi2_sf(CRITICAL_01[dof - 1], dof) == pytest.approx(0.01, abs=5e-5)


def test_chi2_sf_edges():
    assert chi2_sf(0.0, 3) == 1.0
    assert chi2_sf(math.inf, 3) == 0.0
    assert chi2_sf(2.0, 2) == pytest.approx(math.exp(-1.0), rel=1e-14)  # df=2 tail is exp(-x/2)
    with pytest.raises(ValueError):
        chi2_sf(1.0, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(0)
    with pytest.raises(ValueError):
        EnsembleConfig(10, parallelism=0)
    with pytest.raises(ValueError):
        EnsembleConfig(10, master_seed=-1)


def test_single_state_trivially_passes():
    report = run_born_ensemble(SuperpositionState([1.0]), EnsembleConfig(1000, 3))
    assert report.chi_square == 0.0 and report.passed
    assert report.observed_counts.tolist() == [1000]


@pytest.mark.parametrize("engine", ["grigorenko", "measurement"])
def test_born_weights_pass(engine):
    report = run_born_ensemble([0.5, 0.3, 0.2], EnsembleConfig(100_000, 42), engine)
    assert report.passed and report.dof == 2
    assert report.trials == 100_000
    assert report.p_value == pytest.approx(chi2_sf(report.chi_square, 2))


def test_uniform_negative_control_fails():
    report = run_born_ensemble([0.9, 0.1], EnsembleConfig(100_000, 42), "uniform_control")
    assert not report.passed
    assert report.observed_counts[0] / report.trials == pytest.approx(0.5, abs=0.01)


def test_unknown_engine():
    with pytest.raises(ValueError):
        run_born_ensemble([0.5, 0.5], EnsembleConfig(10), "magic")
    with pytest.raises(ValueError):
        run_born_ensemble([0.5, 0.5], EnsembleConfig(10), "measurement", "psychic")
    with pytest.raises(ValueError):
        run_born_ensemble([0.0, 0.0], EnsembleConfig(10))


def test_determinism_across_parallelism(tmp_path):
    w = [0.4, 0.3, 0.2, 0.1]
    trials = 5 * CHUNK + 17
    reports = [run_born_ensemble(w, EnsembleConfig(trials, 2024, p)) for p in (1, 3, 8)]
    for r in reports[1:]:
        assert np.array_equal(r.observed_counts, reports[0].observed_counts)
    reports[0].to_json(tmp_path / "a.json")
    reports[2].to_json(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_trials_use_their_own_streams():
    w = np.array([0.5, 0.3, 0.2])
    counts = ensemble_counts(w, EnsembleConfig(300, 9))
    manual = np.zeros(3, dtype=int)
    for i in range(300):
        u = RngStream(9, i).uniform(3)
        manual[np.argmax(np.log(u) / w)] += 1
    assert np.array_equal(counts, manual)


def test_calibration_over_seeds():
    """At the 0.01 level the correct sampler is rejected for about 1% of seeds."""
    w = np.array([0.5, 0.3, 0.2])
    rejected = 0
    for seed in range(1000):
        counts = ensemble_counts(w, EnsembleConfig(100_000, 10_000 + seed))
        rejected += chi_square_gof(counts, w)[2] <= 0.01
    assert 0 <= rejected <= 20


def test_merge_groups_and_warning():
    w = np.array([0.97, 0.01, 0.01, 0.01, 0.0])
    groups = merge_groups(w, 200)
    assert [4] not in groups and sum(len(g) for g in groups) == 4
    assert all(w[g].sum() * 200 >= 5 for g in groups)
    counts = np.array([194, 2, 2, 2, 0])
    with pytest.warns(UserWarning, match="merged"):
        stat, dof, p, merged = chi_square_gof(counts, w)
    assert merged == [[1, 2, 3]] and dof == 1
    with pytest.warns(UserWarning):
        report = run_born_ensemble(w, EnsembleConfig(200, 1))
    assert report.merged


def test_counts_in_impossible_state_fail():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        stat, _, p, _ = chi_square_gof([90, 5, 5], [0.9, 0.1, 0.0])
    assert math.isinf(stat) and p == 0.0


def test_two_sample_chi_square():
    stat, dof, p = two_sample_chi_square([500, 300, 200], [500, 300, 200])
    assert stat == 0.0 and dof == 2 and p == 1.0
    _, _, p = two_sample_chi_square([900, 100], [500, 500])
    assert p < 1e-10
    with pytest.raises(ValueError):
        two_sample_chi_square([1, 2], [1, 2, 3])


def test_ks_exp_distribution_passes():
    rng = RngStream(77)
    u = np.array([sample_u_phase(rng) for _ in range(100_000)])
    res = ks_test(u, "exp_neg")
    assert res.statistic < 1.63 / math.sqrt(u.size)
    assert res.passed


def test_ks_wrong_sign_fails():
    rng = RngStream(78)
    u = -np.array([sample_u_phase(rng) for _ in range(1000)])
    res = ks_test(u, "exp_neg")
    assert res.statistic == pytest.approx(1.0, abs=1e-3)
    assert not res.passed


def test_ks_constant_samples_fail():
    assert not ks_test(np.full(500, 0.5), "uniform").passed


def test_ks_unsorted_and_validation():
    x = np.random.default_rng(1).uniform(size=1000)
    assert ks_test(x, "uniform").statistic == ks_test(np.sort(x), "uniform").statistic
    assert ks_test(x, lambda v: np.clip(v, 0, 1)).statistic == ks_test(x, "uniform").statistic
    with pytest.raises(ValueError):
        ks_test(np.full(50, 0.1), "uniform")
    with pytest.raises(ValueError):
        ks_test(np.append(x, np.nan), "uniform")


def test_report_export(tmp_path):
    report = run_born_ensemble([0.5, 0.3, 0.2], EnsembleConfig(1000, 5))
    report.to_json(tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["trials"] == 1000 and data["pass"] == report.passed
    assert sum(data["observed_counts"]) == 1000
    report.to_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["state_index", "expected", "observed"]
    assert float(rows[0]["expected"]) == pytest.approx(500.0)
    assert sum(int(r["observed"]) for r in rows) == 1000
