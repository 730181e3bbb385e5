import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from pydantic import ValidationError

import bench.harness as harness
from align.lorentz import AlignmentMethod
from bench.harness import (
    SUMMARY_HEADER,
    TRIAL_HEADER,
    BenchConfig,
    TrialRecord,
    make_trial_data,
    metadata_path,
    perturb,
    run_benchmark,
    sample_lorentz,
    sample_unit_timelike,
    sanity_case,
    summarize,
    timing_ratios,
    trial_rng,
    trial_seed,
    write_metadata,
    write_summary_csv,
    write_trials_csv,
)
from errors import ConvergenceError, InvalidInputError, RankDeficientError
from lie.lorentz import FourVector, LorentzAlgebraElement, exp_lorentz, minkowski_inner


def _small_config(**overrides):
    values = dict(n_vectors=[4, 8], noise_eps=[0.0, 0.01], trials=3, seed=42, warmup=0, record_timing=False)
    values.update(overrides)
    return BenchConfig(**values)


def _record(value, n=4, eps=0.0, method=AlignmentMethod.LIE, trial_id=0, wall_time=0.0, converged=True):
    return TrialRecord(
        trial_id=trial_id,
        n=n,
        eps=eps,
        method=method,
        frob_error=value,
        max_error=value,
        wall_time=wall_time,
        converged=converged,
        seed_used=1,
    )


def _minkowski_norms(x):
    return -x[0] ** 2 + np.sum(x[1:] ** 2, axis=0)


def test_unit_timelike_samples():
    vs = sample_unit_timelike(trial_rng(1), 500)
    assert len(vs) == 500
    for v in vs:
        assert minkowski_inner(v, v) == pytest.approx(-1.0, abs=1e-12)
        assert v.t >= 1.0


def test_unit_timelike_with_zero_spread():
    assert sample_unit_timelike(trial_rng(1), 3, sigma=0.0) == [FourVector(1.0, 0.0, 0.0, 0.0)] * 3


def test_unit_timelike_mean():
    xs = [v.x for v in sample_unit_timelike(trial_rng(5), 100_000)]
    assert abs(np.mean(xs)) <= 0.01


def test_unit_timelike_needs_vectors():
    with pytest.raises(InvalidInputError):
        sample_unit_timelike(trial_rng(1), 0)


def test_perturb_without_noise_is_identity():
    vs = sample_unit_timelike(trial_rng(2), 10)
    assert perturb(vs, 0.0, trial_rng(3)) == vs


def test_perturb_keeps_vectors_unit_timelike():
    vs = sample_unit_timelike(trial_rng(2), 200)
    for v in perturb(vs, 0.1, trial_rng(3)):
        assert minkowski_inner(v, v) == pytest.approx(-1.0, abs=1e-12)


def test_perturb_noise_spread():
    vs = sample_unit_timelike(trial_rng(4), 100_000)
    shifted = perturb(vs, 0.01, trial_rng(6))
    dx = np.array([b.x - a.x for a, b in zip(vs, shifted)])
    assert np.std(dx) == pytest.approx(0.01, rel=0.05)


def test_perturb_rejects_negative_noise():
    with pytest.raises(InvalidInputError):
        perturb([FourVector(1.0, 0.0, 0.0, 0.0)], -0.1, trial_rng(1))


def test_sample_lorentz():
    rng = trial_rng(8)
    assert np.array_equal(sample_lorentz(rng, 0.0, 0.0).as_vector(), np.zeros(6))
    zetas = np.array([sample_lorentz(rng).zeta[0] for _ in range(20_000)])
    assert np.std(zetas) == pytest.approx(0.2, rel=0.05)


def test_trial_data_is_unit_timelike_in_both_frames():
    for noise_after_boost in (False, True):
        element, x, y = make_trial_data(trial_rng(11), 16, 0.1, noise_after_boost=noise_after_boost)
        assert np.allclose(_minkowski_norms(x), -1.0, atol=1e-12)
        assert np.allclose(_minkowski_norms(y), -1.0, atol=1e-12)


def test_trial_data_uses_given_element():
    e = LorentzAlgebraElement((0.1, 0.0, 0.0), (0.0, 0.2, 0.0))
    element, x, y = make_trial_data(trial_rng(3), 5, 0.0, element=e)
    assert element is e
    assert np.allclose(y, exp_lorentz(e).m @ x, atol=1e-15)


def test_trial_seed_is_stable_and_distinct():
    seed = trial_seed(42, 4, 0.01, 7)
    assert seed == trial_seed(42, 4, 0.01, 7)
    assert 0 <= seed < 2**64
    others = {trial_seed(42, 8, 0.01, 7), trial_seed(42, 4, 0.1, 7), trial_seed(42, 4, 0.01, 8), trial_seed(43, 4, 0.01, 7)}
    assert seed not in others
    assert trial_seed(42, 4, -0.0, 0) == trial_seed(42, 4, 0.0, 0)


def test_sanity_case_layout():
    x, y, truth = sanity_case()
    assert x.shape == (4, 4)
    assert np.allclose(_minkowski_norms(x), -1.0, atol=1e-15)
    assert np.allclose(y, truth.m @ x)


@pytest.mark.parametrize(
    "overrides",
    [{"trials": 0}, {"n_vectors": [3]}, {"noise_eps": [-0.1]}, {"methods": []}, {"seed": -1}, {"workers": 0}, {"colour": 1}],
)
def test_bench_config_validation(overrides):
    with pytest.raises(ValidationError):
        _small_config(**overrides)


def test_bench_config_requires_seed():
    with pytest.raises(ValidationError):
        BenchConfig()


def test_bench_config_defaults():
    cfg = BenchConfig(seed=1)
    assert cfg.n_vectors == [4, 8, 16]
    assert cfg.noise_eps == [0.0, 0.01, 0.1]
    assert cfg.trials == 1000
    assert cfg.methods == [AlignmentMethod.DIRECT, AlignmentMethod.LIE]


def test_run_benchmark_grid_and_determinism():
    cfg = _small_config()
    first = run_benchmark(cfg)
    assert len(first) == 2 * 2 * 3 * 2
    assert first == run_benchmark(cfg)
    assert [(r.n, r.eps, r.trial_id, r.method) for r in first] == sorted(
        [(r.n, r.eps, r.trial_id, r.method) for r in first],
        key=lambda k: (k[0], k[1], k[2], cfg.methods.index(k[3])),
    )
    for r in first:
        assert r.converged
        assert r.wall_time == 0.0
        assert r.seed_used == trial_seed(cfg.seed, r.n, r.eps, r.trial_id)
        if r.eps == 0.0:
            assert r.frob_error <= 1e-6


def test_parallel_run_matches_serial(monkeypatch):
    monkeypatch.setattr(harness, "ProcessPoolExecutor", ThreadPoolExecutor)
    serial = run_benchmark(_small_config())
    parallel = run_benchmark(_small_config(workers=2))
    assert parallel == serial


def test_failed_trials_are_recorded(monkeypatch):
    def fake_align_lie(x, y):
        raise RankDeficientError("forced failure", rank=3)

    monkeypatch.setattr(harness, "align_lie", fake_align_lie)
    records = run_benchmark(_small_config(n_vectors=[4], noise_eps=[0.0], methods=[AlignmentMethod.LIE]))
    assert len(records) == 3
    for r in records:
        assert not r.converged
        assert math.isinf(r.frob_error) and math.isinf(r.max_error)


def test_convergence_failure_keeps_best_estimate(monkeypatch):
    real_align_lie = harness.align_lie

    def fake_align_direct(x, y, opts):
        raise ConvergenceError("forced", iterations=1, best=real_align_lie(x, y))

    monkeypatch.setattr(harness, "align_direct", fake_align_direct)
    records = run_benchmark(_small_config(n_vectors=[4], noise_eps=[0.0], methods=[AlignmentMethod.DIRECT]))
    for r in records:
        assert not r.converged
        assert r.frob_error <= 1e-6


def test_summarize_statistics():
    (row,) = summarize([_record(0.5)])
    assert row.median_frob == 0.5 and row.p5_frob == 0.5 and row.p95_frob == 0.5

    (row,) = summarize([_record(v, trial_id=i, wall_time=v) for i, v in enumerate([1.0, 2.0, 3.0])])
    assert row.median_frob == 2.0
    assert row.median_max == 2.0
    assert row.mean_time_s == pytest.approx(2.0)
    assert row.trials == 3 and row.converged == 3


def test_summarize_handles_failed_trials():
    (row,) = summarize([_record(math.inf, trial_id=i, converged=False) for i in range(4)])
    assert math.isinf(row.median_frob)
    assert row.failed == 4

    (row,) = summarize([_record(0.1, trial_id=0), _record(math.inf, trial_id=1, converged=False)])
    assert (row.trials, row.converged, row.failed) == (2, 1, 1)


def test_summarize_rejects_empty_input():
    with pytest.raises(InvalidInputError):
        summarize([])


def test_summarize_default_grid_cardinality():
    records = [
        _record(0.1, n=n, eps=eps, method=method)
        for n in (4, 8, 16)
        for eps in (0.0, 0.01, 0.1)
        for method in (AlignmentMethod.DIRECT, AlignmentMethod.LIE)
    ]
    rows = summarize(records)
    assert len(rows) == 18
    assert len({(r.n, r.eps, r.method) for r in rows}) == 18


def test_timing_ratios():
    records = [
        _record(0.1, method=AlignmentMethod.DIRECT, wall_time=0.03),
        _record(0.1, method=AlignmentMethod.LIE, wall_time=0.001),
        _record(0.1, n=8, method=AlignmentMethod.LIE, wall_time=0.001),
    ]
    ratios = timing_ratios(summarize(records))
    assert list(ratios) == [(4, 0.0)]
    assert ratios[(4, 0.0)] == pytest.approx(30.0)


def test_csv_and_metadata_output(tmp_path):
    cfg = _small_config(n_vectors=[4], noise_eps=[0.01])
    records = run_benchmark(cfg)
    trials_path = tmp_path / "trials.csv"
    summary_path = tmp_path / "summary.csv"
    write_trials_csv(trials_path, records)
    write_summary_csv(summary_path, summarize(records))
    write_metadata(trials_path, cfg)

    with open(trials_path, newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == TRIAL_HEADER
    assert len(rows) == 1 + len(records)
    first = rows[1]
    assert float(first[4]) == records[0].frob_error
    assert first[3] == records[0].method.value
    assert first[7] == "true"
    assert int(first[8]) == records[0].seed_used

    with open(summary_path, newline="") as f:
        summary_rows = list(csv.reader(f))
    assert tuple(summary_rows[0]) == SUMMARY_HEADER
    assert len(summary_rows) == 1 + 2

    meta = json.loads(metadata_path(trials_path).read_text())
    assert meta["generator"] == "PCG64"
    assert meta["numpy_version"] == np.__version__
    assert meta["config"]["seed"] == 42
    assert metadata_path(trials_path).name == "trials.csv.meta.json"


@pytest.mark.slow
def test_lie_is_faster_than_direct():
    records = run_benchmark(BenchConfig(n_vectors=[4, 8], noise_eps=[0.01], trials=20, seed=3))
    for ratio in timing_ratios(summarize(records)).values():
        assert ratio > 1.0


def test_series_exponential_matches_closed_form():
    cfg = _small_config(n_vectors=[8], methods=[AlignmentMethod.LIE, AlignmentMethod.LIE_SERIES])
    records = run_benchmark(cfg)
    pairs = zip(records[::2], records[1::2])
    for haber, series in pairs:
        assert (haber.method, series.method) == (AlignmentMethod.LIE, AlignmentMethod.LIE_SERIES)
        assert haber.converged == series.converged
        assert math.isclose(haber.frob_error, series.frob_error, rel_tol=0.0, abs_tol=1e-9)


@pytest.mark.slow
def test_methods_are_equivalent_in_accuracy():
    cfg = BenchConfig(trials=200, seed=2024, record_timing=False, warmup=0)
    rows = {(r.n, r.eps, r.method): r for r in summarize(run_benchmark(cfg))}
    for n in cfg.n_vectors:
        for method in cfg.methods:
            series = [rows[(n, eps, method)].median_frob for eps in cfg.noise_eps]
            assert series == sorted(series)
            assert series[0] <= 1e-6
        for eps in cfg.noise_eps:
            lie = rows[(n, eps, AlignmentMethod.LIE)]
            direct = rows[(n, eps, AlignmentMethod.DIRECT)]
            assert math.isfinite(lie.median_frob)
            if eps == 0.0:
                assert lie.failed == 0
                continue
            # n = 4: Lambda0 = Y X^-1 interpolates the noise, no factor-of-two bound
            if n > 4:
                assert 0.5 <= lie.median_frob / direct.median_frob <= 2.0
