"""
Monte-Carlo estimation of k-way collision and filter-survival rates

Work is split into fixed-size blocks keyed on (seed, stream, block index)
and the per-block counts are summed, so every reported number is the same
for any worker count.
"""

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from tqdm import tqdm

import config
from .asymptotics import AsymptoticInputs, rate_large_a, rate_large_b
from .errors import DomainError, PreconditionError, UnsupportedConfiguration
from .geometry import (
    TupleConfig,
    is_positive_definite,
    is_positive_semidefinite,
    make_tuples,
    reducible_mask,
    sampling_factor,
)
from .hashing import HashFamilyParams, hash_values_batch, naive_collision_rate, sample_instance
from .utils import keyed_generator, resolve_workers, split_blocks

TOL = config.TOLERANCES


@dataclass(frozen=True)
class CollisionEstimate:
    """Binomial estimate with a Wilson interval and the inputs that produced it"""

    trials: int
    collisions: int
    p_hat: float
    ci_low: float
    ci_high: float
    config: TupleConfig
    d: int
    seed: int
    params: Optional[HashFamilyParams] = None
    confidence: float = config.DEFAULT_CONFIDENCE

    @property
    def stderr(self) -> float:
        return math.sqrt(max(self.p_hat * (1.0 - self.p_hat), 0.0) / self.trials)

    def to_dict(self) -> Dict:
        out = {
            "trials": self.trials,
            "collisions": self.collisions,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "confidence": self.confidence,
            "d": self.d,
            "k": self.config.k,
            "seed": self.seed,
            "config": {"gram_upper": self.config.upper(), "duplicate": self.config.duplicate},
        }
        if self.params is not None:
            out["params"] = asdict(self.params)
        return out


@dataclass(frozen=True)
class SweepCell:
    alpha: float
    beta: float
    gamma: float
    estimate: Optional[CollisionEstimate] = None  # None for skipped cells

    @property
    def skipped(self) -> bool:
        return self.estimate is None


@dataclass
class SweepResult:
    sigma: float
    params: HashFamilyParams
    trials: int
    k: int = 3
    cells: List[SweepCell] = field(default_factory=list)

    @property
    def rows(self) -> List[SweepCell]:
        """Cells with an estimate (non-PD cells removed)"""
        return [c for c in self.cells if not c.skipped]

    @property
    def skipped(self) -> List[SweepCell]:
        return [c for c in self.cells if c.skipped]

    def centre(self) -> Optional[SweepCell]:
        target = centre_cell(self.sigma)
        for c in self.rows:
            if np.allclose((c.alpha, c.beta, c.gamma), target, atol=1e-12):
                return c
        return None


@dataclass(frozen=True)
class ConvergenceRow:
    a: int
    b: int
    p_mc: float
    ci_low: float
    ci_high: float
    p_asymptotic: float
    ratio: float
    log_ratio: float
    gap: float
    trials: int
    collisions: int


@dataclass
class DetectReport:
    db_size: int
    n_planted: int
    k: int
    instances: int
    params: HashFamilyParams
    seed: int
    mean_bucket_size: float
    max_bucket_size: int
    mean_bucket_count: float
    recall: Optional[float]
    background_rate: float
    false_candidate_rate: float
    wilcoxon_p: Optional[float]
    recall_per_instance: List[float] = field(default_factory=list)
    background_per_instance: List[float] = field(default_factory=list)
    candidates_scanned: int = 0
    reducible_candidates: int = 0
    sampled_buckets: int = 0

    def to_dict(self) -> Dict:
        out = asdict(self)
        out["params"] = asdict(self.params)
        return out


# ---------------------------------------------------------------------------
# Statistics helpers
# ---------------------------------------------------------------------------

def wilson_interval(successes: int, trials: int, confidence: float = config.DEFAULT_CONFIDENCE) -> Tuple[float, float]:
    """
    Wilson score interval for a binomial proportion

    Args:
        successes: Observed successes
        trials: Number of trials (>= 1)
        confidence: Two-sided confidence level

    Returns:
        (low, high)
    """
    if trials < 1:
        raise PreconditionError(f"need at least one trial, got {trials}")
    if not 0 <= successes <= trials:
        raise PreconditionError(f"successes={successes} outside [0, {trials}]")
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


def required_trials(p_guess: float, rel_err: float = 0.01, confidence: float = config.DEFAULT_CONFIDENCE) -> int:
    """
    Chernoff sample size for relative error rel_err

    N = 3 ln(2 / (1 - confidence)) / (rel_err^2 p)
    """
    if not 0.0 < p_guess < 1.0:
        raise PreconditionError(f"p_guess must lie in (0, 1), got {p_guess}")
    if rel_err <= 0 or not 0.0 < confidence < 1.0:
        raise PreconditionError("rel_err must be positive and confidence in (0, 1)")
    return int(math.ceil(3.0 * math.log(2.0 / (1.0 - confidence)) / (rel_err * rel_err * p_guess)))


def log_ratio(p_x: float, p_y: float) -> float:
    """Ratio of logs log(p_x) / log(p_y)"""
    for p in (p_x, p_y):
        if not 0.0 < p < 1.0:
            raise DomainError(f"log-ratio needs rates strictly inside (0, 1), got {p}")
    return math.log(p_x) / math.log(p_y)


def naive_exceedance(p_hat: float, h: int, a: int, k: int) -> float:
    """Percentage by which p_hat exceeds the naive rate C(h,a)^-(k-1)"""
    return 100.0 * (p_hat / naive_collision_rate(h, a, k) - 1.0)


def centre_cell(sigma: float) -> Tuple[float, float, float]:
    c = sigma / 6.0
    return c, c, c


# ---------------------------------------------------------------------------
# Block engine
# ---------------------------------------------------------------------------

def _run_blocks(
    count_block: Callable[[int, int], int],
    total: int,
    block: int,
    workers: Optional[int],
    progress: bool,
    desc: str,
) -> int:
    blocks = split_blocks(total, block)
    workers = resolve_workers(workers)
    bar = tqdm(total=total, desc=desc, unit="trial", disable=not progress)
    hits = 0
    try:
        if workers == 1:
            for index, size in blocks:
                hits += count_block(index, size)
                bar.update(size)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for (index, size), count in zip(blocks, pool.map(lambda b: count_block(*b), blocks)):
                    hits += count
                    bar.update(size)
    finally:
        bar.close()
    return hits


def _collisions(R: np.ndarray, V: np.ndarray, a: int) -> np.ndarray:
    """Per-trial k-collision flags for stacked instances and tuples"""
    h = R.shape[-2]
    if h <= config.MAX_BATCH_H:
        masks = hash_values_batch(R, V, a)
        return np.all(masks == masks[:, :1], axis=1)
    mags = np.abs(np.einsum("nmd,nhd->nmh", V, R))
    chosen = np.sort(np.argsort(-mags, axis=-1, kind="stable")[..., :a], axis=-1)
    return np.all(chosen == chosen[:, :1, :], axis=(1, 2))


def _check_trials(trials: int):
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")


def estimate_collision_rate(
    config_: TupleConfig,
    params: HashFamilyParams,
    trials: int,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    progress: bool = False,
    confidence: float = config.DEFAULT_CONFIDENCE,
) -> CollisionEstimate:
    """
    Monte-Carlo k-way collision rate with a fresh instance and tuple per trial

    Args:
        config_: Tuple configuration (k = config_.k)
        params: Hash family; d is the ambient dimension
        trials: Number of trials
        seed: Stream seed (defaults to params.seed)
        workers: Worker threads (never changes the result)
        progress: Show a tqdm bar
        confidence: Wilson interval level

    Returns:
        CollisionEstimate
    """
    _check_trials(trials)
    if params.d < config_.k:
        raise PreconditionError(f"dimension d={params.d} is smaller than tuple size k={config_.k}")
    seed = params.seed if seed is None else seed
    sampling_factor(config_)

    def count_block(index: int, size: int) -> int:
        rng = keyed_generator(seed, config.STREAMS["collision_block"], index)
        tuples = make_tuples(config_, params.d, size, rng)
        R = rng.standard_normal((size, params.h, params.d))
        return int(np.count_nonzero(_collisions(R, tuples, params.a)))

    collisions = _run_blocks(count_block, trials, config.TRIAL_BLOCK, workers, progress, "Collision trials")
    low, high = wilson_interval(collisions, trials, confidence)
    return CollisionEstimate(
        trials=trials,
        collisions=collisions,
        p_hat=collisions / trials,
        ci_low=low,
        ci_high=high,
        config=config_,
        d=params.d,
        seed=seed,
        params=params,
        confidence=confidence,
    )


def survival_rate(
    config_: TupleConfig,
    mode: str,
    threshold: float,
    trials: int,
    d: int = config.DEFAULT_DIMENSION,
    seed: int = config.DEFAULT_SEED,
    workers: Optional[int] = None,
    progress: bool = False,
) -> CollisionEstimate:
    """
    Probability that one Gaussian r passes the filter for every tuple vector

    Only the projections r . v_n matter; they are N(0, M), so they are drawn
    directly as L g in the span of the tuple.

    Args:
        config_: Tuple configuration
        mode: 'above' (|v.r| > C) or 'below' (|v.r| < c)
        threshold: C or c (> 0)
        trials: Number of predicate draws
        d: Ambient dimension (>= k)

    Returns:
        CollisionEstimate whose collisions count the surviving draws
    """
    _check_trials(trials)
    if mode not in ("above", "below"):
        raise PreconditionError(f"mode must be 'above' or 'below', got {mode!r}")
    if threshold <= 0:
        raise PreconditionError(f"threshold must be positive, got {threshold}")
    k = config_.k
    if d < k:
        raise PreconditionError(f"dimension d={d} is smaller than tuple size k={k}")
    lower = sampling_factor(config_)

    def count_block(index: int, size: int) -> int:
        rng = keyed_generator(seed, config.STREAMS["survival_block"], index)
        g = rng.standard_normal((size, lower.shape[1]))
        proj = np.abs(g @ lower.T)
        passed = np.all(proj > threshold, axis=1) if mode == "above" else np.all(proj < threshold, axis=1)
        return int(np.count_nonzero(passed))

    hits = _run_blocks(count_block, trials, config.SURVIVAL_BLOCK, workers, progress, "Predicate draws")
    low, high = wilson_interval(hits, trials)
    return CollisionEstimate(
        trials=trials, collisions=hits, p_hat=hits / trials, ci_low=low, ci_high=high,
        config=config_, d=d, seed=seed,
    )


# ---------------------------------------------------------------------------
# Sweeps and convergence tables
# ---------------------------------------------------------------------------

def _grid_cells(sigma: float, step: float) -> List[Tuple[float, float, float]]:
    centre = sigma / 6.0
    reach = int(math.ceil(abs(sigma) / step)) + 1
    cells = []
    for i in range(-reach, reach + 1):
        for j in range(-reach, reach + 1):
            alpha = centre + i * step
            beta = centre + j * step
            gamma = sigma / 2.0 - alpha - beta
            if alpha < 0 and beta < 0 and gamma < 0:
                cells.append((alpha, beta, gamma))
    return cells


def sweep(
    sigma: float,
    params: HashFamilyParams,
    trials: int,
    grid_step: float = config.DEFAULT_GRID_STEP,
    k: int = 3,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    progress: bool = False,
) -> SweepResult:
    """
    Collision rates over the (alpha, beta, gamma) plane with 2(alpha+beta+gamma) = sigma

    The grid is laid out in steps from the centre cell sigma/6. Cells on the
    semidefinite boundary are sampled as coplanar triples; cells whose Gram
    matrix is not positive semidefinite are kept in the result as skipped.

    Raises:
        DomainError: for sigma >= 0 or a grid without any valid cell
    """
    _check_trials(trials)
    if k != 3:
        raise UnsupportedConfiguration(f"sweeps are defined over pairwise triples, got k={k}")
    if not sigma < 0:
        raise DomainError(f"sigma must be negative, got {sigma}")
    if grid_step <= 0:
        raise PreconditionError(f"grid step must be positive, got {grid_step}")
    seed = params.seed if seed is None else seed
    result = SweepResult(sigma=sigma, params=params, trials=trials, k=k)
    cells = _grid_cells(sigma, grid_step)
    for alpha, beta, gamma in tqdm(cells, desc=f"Sweep sigma={sigma}", disable=not progress):
        if abs(2.0 * (alpha + beta + gamma) - sigma) > TOL["sigma_sum"]:
            raise DomainError(f"cell ({alpha}, {beta}, {gamma}) does not sum to sigma={sigma}")
        gram = np.array([[1.0, alpha, beta], [alpha, 1.0, gamma], [beta, gamma, 1.0]])
        if is_positive_definite(gram):
            cell_config = TupleConfig.from_pairwise(alpha, beta, gamma)
        elif is_positive_semidefinite(gram):
            # coplanar boundary cells, e.g. the sigma=-3 centre
            cell_config = TupleConfig.from_pairwise(alpha, beta, gamma, singular=True)
        else:
            result.cells.append(SweepCell(alpha, beta, gamma))
            continue
        estimate = estimate_collision_rate(cell_config, params, trials, seed=seed, workers=workers)
        result.cells.append(SweepCell(alpha, beta, gamma, estimate))
    if not result.rows:
        raise DomainError(f"no valid cell on the sigma={sigma} grid")
    if result.skipped:
        warnings.warn(
            f"skipped {len(result.skipped)} non-semidefinite cells at sigma={sigma}", RuntimeWarning, stacklevel=2
        )
    return result


def convergence_table(
    config_: TupleConfig,
    regime: str,
    values: Sequence[int],
    fixed: int,
    trials: int,
    d: int = config.DEFAULT_DIMENSION,
    seed: int = config.DEFAULT_SEED,
    workers: Optional[int] = None,
    progress: bool = False,
) -> List[ConvergenceRow]:
    """
    Monte-Carlo rates against the large-b or large-a closed forms

    Args:
        config_: Tuple configuration
        regime: 'large-b' (values are b, fixed is a) or 'large-a' (values are a, fixed is b)
        values: Increasing sequence of the varying parameter
        fixed: The other parameter
        trials: Trials per row

    Returns:
        One ConvergenceRow per value; gap = |log p_mc - log p_asym| / log(value)
    """
    if regime not in ("large-b", "large-a"):
        raise PreconditionError(f"regime must be 'large-b' or 'large-a', got {regime!r}")
    if not values:
        raise PreconditionError("need at least one value for the varying parameter")
    rows = []
    for value in tqdm(values, desc=f"Convergence {regime}", disable=not progress):
        a, b = (fixed, value) if regime == "large-b" else (value, fixed)
        params = HashFamilyParams(d=d, a=a, b=b, seed=seed)
        est = estimate_collision_rate(config_, params, trials, seed=seed, workers=workers)
        inputs = AsymptoticInputs.from_config(config_, a, b)
        p_asym = rate_large_b(inputs) if regime == "large-b" else rate_large_a(inputs)
        ratio = est.p_hat / p_asym
        if 0.0 < est.p_hat < 1.0 and 0.0 < p_asym < 1.0:
            log_r = math.log(est.p_hat) / math.log(p_asym)
        else:
            log_r = math.nan
        if est.p_hat > 0.0 and value > 1:
            gap = abs(math.log(est.p_hat) - math.log(p_asym)) / math.log(value)
        else:
            gap = math.nan
        rows.append(
            ConvergenceRow(
                a=a, b=b, p_mc=est.p_hat, ci_low=est.ci_low, ci_high=est.ci_high,
                p_asymptotic=p_asym, ratio=ratio, log_ratio=log_r, gap=gap,
                trials=est.trials, collisions=est.collisions,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Planted-tuple detection
# ---------------------------------------------------------------------------

def _combination_chunks(n: int, k: int):
    """Every k-subset of range(n) in lexicographic order, TRIAL_BLOCK rows at a time"""
    combos = itertools.combinations(range(n), k)
    while True:
        flat = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combos, config.TRIAL_BLOCK)), dtype=np.int64
        )
        if flat.size == 0:
            return
        yield flat.reshape(-1, k)


def sample_subsets(n: int, k: int, size: int, rng: np.random.Generator):
    """
    Independent uniform k-subsets of range(n), TRIAL_BLOCK rows at a time

    Draws with a repeated index are rejected, so every subset is equally
    likely; rows come back sorted.

    Args:
        n: Population size
        k: Subset size
        size: Total number of subsets to yield
        rng: Source of randomness (keyed by the caller)

    Yields:
        (m, k) int64 arrays, m <= TRIAL_BLOCK, summing to size rows
    """
    if not 1 <= k <= n:
        raise PreconditionError(f"cannot draw {k}-subsets from {n} items")
    drawn = 0
    while drawn < size:
        draw = rng.integers(0, n, size=(min(config.TRIAL_BLOCK, size - drawn), k))
        draw.sort(axis=1)
        draw = draw[np.all(np.diff(draw, axis=1) > 0, axis=1)]
        drawn += draw.shape[0]
        yield draw


def _scan_bucket(
    members: np.ndarray, database: np.ndarray, k: int, rng: np.random.Generator
) -> Tuple[int, int, bool]:
    """
    Count k-subsets of one bucket and how many of them are reducible

    Buckets with more than MAX_SUBSETS_PER_BUCKET subsets are scanned through
    SCAN_SAMPLES_PER_BUCKET uniform random subsets instead of all of them.
    """
    sampled = math.comb(members.size, k) > config.MAX_SUBSETS_PER_BUCKET
    if sampled:
        chunks = sample_subsets(members.size, k, config.SCAN_SAMPLES_PER_BUCKET, rng)
    else:
        chunks = _combination_chunks(members.size, k)
    scanned = reducible = 0
    for chunk in chunks:
        if chunk.size == 0:
            continue
        scanned += chunk.shape[0]
        reducible += int(np.count_nonzero(reducible_mask(database[members[chunk]])))
    return scanned, reducible, sampled


def detect_planted(
    db_size: int,
    n_planted: int,
    params: HashFamilyParams,
    planted_config: TupleConfig,
    instances: int = config.DEFAULT_INSTANCES,
    seed: Optional[int] = None,
    scan_candidates: bool = True,
    progress: bool = False,
) -> DetectReport:
    """
    Bucket a database holding planted tuples and measure how often they co-bucket

    Args:
        db_size: Total number of unit vectors
        n_planted: Number of planted tuples (k = planted_config.k vectors each)
        params: Hash family
        planted_config: Configuration of every planted tuple
        instances: Independent hash instances
        seed: Database and instance seed (defaults to params.seed)
        scan_candidates: Check co-bucketed k-subsets for reducibility (off only to save time)

    Returns:
        DetectReport; recall and the Wilcoxon p-value are None when nothing is planted
    """
    k = planted_config.k
    if n_planted < 0 or db_size < k or n_planted * k > db_size:
        raise PreconditionError(f"cannot plant {n_planted} tuples of size {k} in a database of {db_size}")
    if instances < 1:
        raise PreconditionError(f"need at least one instance, got {instances}")
    if params.h > config.MAX_BATCH_H:
        raise PreconditionError(f"bucketing supports h <= {config.MAX_BATCH_H}, got {params.h}")
    seed = params.seed if seed is None else seed

    rng = keyed_generator(seed, config.STREAMS["detect_database"])
    planted = np.empty((0, params.d))
    if n_planted:
        planted = make_tuples(planted_config, params.d, n_planted, rng).reshape(n_planted * k, params.d)
    background = rng.standard_normal((db_size - n_planted * k, params.d))
    background /= np.linalg.norm(background, axis=1, keepdims=True)
    database = np.concatenate([planted, background], axis=0)
    groups = np.arange(n_planted * k).reshape(n_planted, k)
    total_subsets = math.comb(db_size, k)

    instance_params = HashFamilyParams(d=params.d, a=params.a, b=params.b, seed=seed)
    recalls, backgrounds = [], []
    bucket_sizes, bucket_counts = [], []
    co_bucketed, planted_hits = 0, 0
    scanned = reducible = sampled = 0
    for i in tqdm(range(instances), desc="Hash instances", disable=not progress):
        inst = sample_instance(instance_params, instance=i)
        masks = hash_values_batch(inst.R[None], database[None], params.a)[0]
        _, inverse, counts = np.unique(masks, return_inverse=True, return_counts=True)
        bucket_sizes.extend(counts.tolist())
        bucket_counts.append(counts.size)
        pairs = sum(math.comb(int(c), k) for c in counts)
        co_bucketed += pairs
        backgrounds.append(pairs / total_subsets)
        if n_planted:
            hit = np.all(masks[groups] == masks[groups[:, :1]], axis=1)
            planted_hits += int(np.count_nonzero(hit))
            recalls.append(float(np.mean(hit)))
        if scan_candidates:
            for bucket in np.flatnonzero(counts >= k):
                members = np.flatnonzero(inverse.ravel() == bucket)
                rng_scan = keyed_generator(seed, config.STREAMS["detect_scan"], index=i, counter=int(bucket))
                n_scanned, n_reducible, was_sampled = _scan_bucket(members, database, k, rng_scan)
                scanned += n_scanned
                reducible += n_reducible
                sampled += int(was_sampled)
    if sampled:
        warnings.warn(
            f"{sampled} buckets exceeded {config.MAX_SUBSETS_PER_BUCKET} subsets; each was scanned through "
            f"{config.SCAN_SAMPLES_PER_BUCKET} random subsets",
            RuntimeWarning,
            stacklevel=2,
        )

    recall = wilcoxon_p = None
    if n_planted:
        recall = float(np.mean(recalls))
        diffs = np.asarray(recalls) - np.asarray(backgrounds)
        if np.any(diffs != 0.0):
            wilcoxon_p = float(stats.wilcoxon(diffs, alternative="greater").pvalue)
        else:
            wilcoxon_p = 1.0
    return DetectReport(
        db_size=db_size,
        n_planted=n_planted,
        k=k,
        instances=instances,
        params=params,
        seed=seed,
        mean_bucket_size=float(np.mean(bucket_sizes)),
        max_bucket_size=int(np.max(bucket_sizes)),
        mean_bucket_count=float(np.mean(bucket_counts)),
        recall=recall,
        background_rate=float(np.mean(backgrounds)),
        false_candidate_rate=(1.0 - planted_hits / co_bucketed) if co_bucketed else 0.0,
        wilcoxon_p=wilcoxon_p,
        recall_per_instance=recalls,
        background_per_instance=backgrounds,
        candidates_scanned=scanned,
        reducible_candidates=reducible,
        sampled_buckets=sampled,
    )
