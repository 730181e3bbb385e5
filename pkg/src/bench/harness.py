"""
Randomized accuracy/timing benchmark for the two Lorentz solvers.

For every cell (n, eps) of the grid and every trial: draw a random Lorentz
transformation, draw n unit timelike vectors as frame-A measurements, perturb
their spatial parts by N(0, eps) noise, renormalize and boost them into frame
B, then run each enabled solver and compare against the true matrix.

All normal draws take sigma as the standard deviation. Each trial owns a
PCG64 stream seeded by ``trial_seed``, so records do not depend on worker
scheduling.
"""

import csv
import json
import logging
import math
import time
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, validator

from align.lorentz import (
    AlignmentMethod,
    ExpPath,
    SolverOptions,
    align_direct,
    align_lie,
    error_norms,
)
from constants import LORENTZ_ALIGN_LOG_NAME, SANITY_BETA
from errors import ConvergenceError, InvalidInputError, LorentzAlignError
from lie.lorentz import (
    FourVector,
    LorentzAlgebraElement,
    LorentzMatrix,
    boost,
    exp_lorentz,
    exp_lorentz_matrix,
    stack_vectors,
    unstack_vectors,
)

logger = logging.getLogger(LORENTZ_ALIGN_LOG_NAME)


GENERATOR_NAME = "PCG64"
SEED_DERIVATION = (
    "SeedSequence(entropy=seed, spawn_key=(n, float64 bits of eps, trial_id))"
    ".generate_state(1, uint64)[0]"
)
MAX_SEED = 2**64 - 1

TRIAL_HEADER = ("trial_id", "n", "eps", "method", "frob_error", "max_error", "wall_time_s", "converged", "seed_used")
SUMMARY_HEADER = ("n", "eps", "method", "median_frob", "p5_frob", "p95_frob", "median_max", "mean_time_s")


class BenchConfig(BaseModel):
    n_vectors: List[int] = [4, 8, 16]
    noise_eps: List[float] = [0.0, 0.01, 0.1]
    trials: int = 1000
    seed: int
    methods: List[AlignmentMethod] = [AlignmentMethod.DIRECT, AlignmentMethod.LIE]
    noise_after_boost: bool = False
    sigma_vectors: float = 0.3
    sigma_zeta: float = 0.2
    sigma_theta: float = 1.0
    warmup: int = 3
    workers: int = 1
    record_timing: bool = True
    solver: SolverOptions = Field(default_factory=SolverOptions)

    class Config:
        extra = "forbid"

    @validator("n_vectors")
    def _enough_vectors(cls, value):
        if not value:
            raise ValueError("n_vectors must not be empty")
        for n in value:
            if n < 4:
                raise ValueError(f"every n must be at least 4, got {n}")
        return value

    @validator("noise_eps")
    def _nonnegative_noise(cls, value):
        if not value:
            raise ValueError("noise_eps must not be empty")
        for eps in value:
            if not (math.isfinite(eps) and eps >= 0.0):
                raise ValueError(f"every eps must be finite and nonnegative, got {eps}")
        # -0.0 and 0.0 must derive the same trial seeds
        return [eps + 0.0 for eps in value]

    @validator("trials", "workers")
    def _at_least_one(cls, value, field):
        if value < 1:
            raise ValueError(f"{field.name} must be at least 1, got {value}")
        return value

    @validator("warmup")
    def _nonnegative_warmup(cls, value):
        if value < 0:
            raise ValueError(f"warmup must be nonnegative, got {value}")
        return value

    @validator("seed")
    def _seed_range(cls, value):
        if not 0 <= value <= MAX_SEED:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {value}")
        return value

    @validator("methods")
    def _distinct_methods(cls, value):
        if not value:
            raise ValueError("at least one method is required")
        if len(set(value)) != len(value):
            raise ValueError("methods must not repeat")
        return value

    @validator("sigma_vectors", "sigma_zeta", "sigma_theta")
    def _nonnegative_sigma(cls, value, field):
        if not (math.isfinite(value) and value >= 0.0):
            raise ValueError(f"{field.name} must be finite and nonnegative, got {value}")
        return value


class TrialRecord(BaseModel):
    trial_id: int
    n: int
    eps: float
    method: AlignmentMethod
    frob_error: float
    max_error: float
    wall_time: float
    converged: bool
    seed_used: int

    @validator("frob_error", "max_error", "wall_time")
    def _nonnegative(cls, value, field):
        if not value >= 0.0:
            raise ValueError(f"{field.name} must be nonnegative, got {value}")
        return value


class SummaryRow(BaseModel):
    n: int
    eps: float
    method: AlignmentMethod
    median_frob: float
    p5_frob: float
    p95_frob: float
    median_max: float
    mean_time_s: float
    median_time_s: float
    trials: int
    converged: int

    @property
    def failed(self) -> int:
        return self.trials - self.converged


def trial_seed(master_seed: int, n: int, eps: float, trial_id: int) -> int:
    eps_bits = int(np.array(float(eps) + 0.0, dtype=np.float64).view(np.uint64))
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(n, eps_bits, trial_id))
    return int(sequence.generate_state(1, np.uint64)[0])


def trial_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _renormalized(spatial: np.ndarray) -> np.ndarray:
    t = np.sqrt(1.0 + np.sum(spatial * spatial, axis=0))
    return np.vstack([t, spatial])


def _sample_timelike_columns(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    return _renormalized(rng.normal(0.0, sigma, size=(3, n)))


def _perturb_columns(x: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    # always draw, so the stream position does not depend on eps
    noise = rng.normal(0.0, eps, size=(3, x.shape[1]))
    if eps == 0.0:
        return x.copy()
    return _renormalized(x[1:] + noise)


def sample_unit_timelike(rng: np.random.Generator, n: int, sigma: float = 0.3) -> List[FourVector]:
    """n vectors with x, y, z ~ N(0, sigma) and t = sqrt(1 + x^2 + y^2 + z^2)."""
    if n < 1:
        raise InvalidInputError(f"need at least one vector, got n={n}")
    return unstack_vectors(_sample_timelike_columns(rng, n, sigma))


def perturb(vs: Sequence[FourVector], eps: float, rng: np.random.Generator) -> List[FourVector]:
    """Shift spatial parts by N(0, eps) and recompute t so the vectors stay unit timelike."""
    if not eps >= 0.0:
        raise InvalidInputError(f"eps must be nonnegative, got {eps}")
    return unstack_vectors(_perturb_columns(stack_vectors(vs), eps, rng))


def sample_lorentz(
    rng: np.random.Generator, sigma_zeta: float = 0.2, sigma_theta: float = 1.0
) -> LorentzAlgebraElement:
    zeta = rng.normal(0.0, sigma_zeta, size=3)
    theta = rng.normal(0.0, sigma_theta, size=3)
    return LorentzAlgebraElement(zeta=zeta, theta=theta)


def make_trial_data(
    rng: np.random.Generator,
    n: int,
    eps: float,
    sigma_vectors: float = 0.3,
    sigma_zeta: float = 0.2,
    sigma_theta: float = 1.0,
    noise_after_boost: bool = False,
    element: Optional[LorentzAlgebraElement] = None,
) -> Tuple[LorentzAlgebraElement, np.ndarray, np.ndarray]:
    """(true element, X, Y) with vectors as columns; a given element is used instead of a draw."""
    if element is None:
        element = sample_lorentz(rng, sigma_zeta, sigma_theta)
    lam = exp_lorentz_matrix(element.zeta, element.theta)
    x = _sample_timelike_columns(rng, n, sigma_vectors)
    if noise_after_boost:
        y = _perturb_columns(lam @ x, eps, rng)
    else:
        y = lam @ _perturb_columns(x, eps, rng)
    return element, x, y


SANITY_ROWS = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [math.sqrt(2.0), 1.0, 0.0, 0.0],
        [math.sqrt(2.0), 0.0, 1.0, 0.0],
        [math.sqrt(2.0), 0.0, 0.0, 1.0],
    ]
)


def sanity_case(beta: float = SANITY_BETA) -> Tuple[np.ndarray, np.ndarray, LorentzMatrix]:
    """
    Four timelike vectors (as columns) and their images under an x-boost.

    Frame B rows are A Lambda^T, i.e. columns Y = Lambda X.
    """
    truth = boost((beta, 0.0, 0.0))
    x = SANITY_ROWS.T.copy()
    return x, truth.m @ x, truth


def _solve(method: AlignmentMethod, x: np.ndarray, y: np.ndarray, solver: SolverOptions):
    if method == AlignmentMethod.DIRECT:
        return align_direct(x, y, solver)
    if method == AlignmentMethod.LIE_SERIES:
        return align_lie(x, y, ExpPath.SERIES)
    return align_lie(x, y)


def _run_trial(cfg: BenchConfig, n: int, eps: float, trial_id: int) -> List[TrialRecord]:
    seed = trial_seed(cfg.seed, n, eps, trial_id)
    element, x, y = make_trial_data(
        trial_rng(seed),
        n,
        eps,
        cfg.sigma_vectors,
        cfg.sigma_zeta,
        cfg.sigma_theta,
        cfg.noise_after_boost,
    )
    truth = exp_lorentz(element)

    records = []
    for method in cfg.methods:
        converged = True
        start = time.perf_counter()
        try:
            result = _solve(method, x, y, cfg.solver)
            norms = error_norms(result.lorentz, truth)
        except ConvergenceError as exc:
            converged = False
            norms = error_norms(exc.best.lorentz, truth) if exc.best is not None else None
            logger.warning({"operation": "run_trial", "status": exc.reason, "n": n, "eps": eps, "trial_id": trial_id})
        except LorentzAlignError as exc:
            converged = False
            norms = None
            logger.warning({"operation": "run_trial", "status": exc.reason, "n": n, "eps": eps, "trial_id": trial_id})
        elapsed = time.perf_counter() - start

        records.append(
            TrialRecord(
                trial_id=trial_id,
                n=n,
                eps=eps,
                method=method,
                frob_error=norms.frob if norms is not None else math.inf,
                max_error=norms.max_abs if norms is not None else math.inf,
                wall_time=elapsed if cfg.record_timing else 0.0,
                converged=converged,
                seed_used=seed,
            )
        )
    return records


def _warm_up(cfg: BenchConfig, n: int, eps: float) -> None:
    if cfg.warmup == 0:
        return
    _, x, y = make_trial_data(
        trial_rng(trial_seed(cfg.seed, n, eps, 0)),
        n,
        eps,
        cfg.sigma_vectors,
        cfg.sigma_zeta,
        cfg.sigma_theta,
        cfg.noise_after_boost,
    )
    for method in cfg.methods:
        for _ in range(cfg.warmup):
            try:
                _solve(method, x, y, cfg.solver)
            except LorentzAlignError:
                pass


def _run_chunk(cfg: BenchConfig, n: int, eps: float, trial_ids: Sequence[int]) -> List[TrialRecord]:
    _warm_up(cfg, n, eps)
    records = []
    for trial_id in trial_ids:
        records.extend(_run_trial(cfg, n, eps, trial_id))
    return records


def _chunks(cfg: BenchConfig) -> List[Tuple[int, float, List[int]]]:
    ids = list(range(cfg.trials))
    per_chunk = max(1, math.ceil(cfg.trials / cfg.workers))
    work = []
    for n in cfg.n_vectors:
        for eps in cfg.noise_eps:
            for start in range(0, cfg.trials, per_chunk):
                work.append((n, eps, ids[start : start + per_chunk]))
    return work


def run_benchmark(cfg: BenchConfig) -> List[TrialRecord]:
    """
    Run every (n, eps, trial, method) combination.

    Records come back ordered by grid position, then trial id, then method,
    whatever the worker count. Solver failures become records with
    converged=False instead of aborting the run.
    """
    work = _chunks(cfg)
    logger.info(
        {
            "operation": "run_benchmark",
            "status": "start",
            "cells": len(cfg.n_vectors) * len(cfg.noise_eps),
            "trials": cfg.trials,
            "workers": cfg.workers,
        }
    )
    records: List[TrialRecord] = []
    if cfg.workers == 1:
        for n, eps, ids in work:
            records.extend(_run_chunk(cfg, n, eps, ids))
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_chunk, cfg, n, eps, ids) for n, eps, ids in work]
            for future in futures:
                records.extend(future.result())

    failed = sum(1 for r in records if not r.converged)
    logger.info({"operation": "run_benchmark", "status": "done", "records": len(records), "failed": failed})
    return records


def _percentile(values: np.ndarray, q: float) -> float:
    value = float(np.percentile(values, q))
    # interpolating between two infinite errors yields nan
    return math.inf if math.isnan(value) else value


def summarize(records: Iterable[TrialRecord]) -> List[SummaryRow]:
    """One row per (n, eps, method), in order of first appearance."""
    cells: "OrderedDict[Tuple[int, float, AlignmentMethod], List[TrialRecord]]" = OrderedDict()
    for record in records:
        cells.setdefault((record.n, record.eps, record.method), []).append(record)
    if not cells:
        raise InvalidInputError("cannot summarize an empty set of trial records")

    rows = []
    for (n, eps, method), members in cells.items():
        frob = np.array([r.frob_error for r in members])
        worst = np.array([r.max_error for r in members])
        times = np.array([r.wall_time for r in members])
        rows.append(
            SummaryRow(
                n=n,
                eps=eps,
                method=method,
                median_frob=_percentile(frob, 50),
                p5_frob=_percentile(frob, 5),
                p95_frob=_percentile(frob, 95),
                median_max=_percentile(worst, 50),
                mean_time_s=float(np.mean(times)),
                median_time_s=float(np.median(times)),
                trials=len(members),
                converged=sum(1 for r in members if r.converged),
            )
        )
    return rows


def timing_ratios(rows: Iterable[SummaryRow]) -> Dict[Tuple[int, float], float]:
    """Mean direct time over mean lie-algebra time for each cell that ran both."""
    means: Dict[Tuple[int, float], Dict[AlignmentMethod, float]] = OrderedDict()
    for row in rows:
        means.setdefault((row.n, row.eps), {})[row.method] = row.mean_time_s
    ratios = {}
    for cell, by_method in means.items():
        direct = by_method.get(AlignmentMethod.DIRECT)
        lie = by_method.get(AlignmentMethod.LIE)
        if direct is None or lie is None:
            continue
        ratios[cell] = direct / lie if lie > 0.0 else math.inf
    return ratios


def format_float(value: float) -> str:
    """Shortest decimal that round-trips."""
    return repr(float(value))


def write_trials_csv(path: Path, records: Iterable[TrialRecord]) -> None:
    with open(path, "w", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(TRIAL_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.trial_id,
                    r.n,
                    format_float(r.eps),
                    r.method.value,
                    format_float(r.frob_error),
                    format_float(r.max_error),
                    format_float(r.wall_time),
                    "true" if r.converged else "false",
                    r.seed_used,
                ]
            )


def write_summary_csv(path: Path, rows: Iterable[SummaryRow]) -> None:
    with open(path, "w", newline="") as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.n,
                    format_float(row.eps),
                    row.method.value,
                    format_float(row.median_frob),
                    format_float(row.p5_frob),
                    format_float(row.p95_frob),
                    format_float(row.median_max),
                    format_float(row.mean_time_s),
                ]
            )


def metadata_path(trials_path: Path) -> Path:
    trials_path = Path(trials_path)
    return trials_path.with_name(trials_path.name + ".meta.json")


def write_metadata(trials_path: Path, cfg: BenchConfig) -> Path:
    """Sidecar JSON with everything needed to re-run the benchmark."""
    meta = {
        "generator": GENERATOR_NAME,
        "seed_derivation": SEED_DERIVATION,
        "numpy_version": np.__version__,
        "config": json.loads(cfg.json()),
    }
    path = metadata_path(trials_path)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path
