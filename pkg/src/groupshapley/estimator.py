"""Two-regime Monte Carlo estimator for the faithful group Shapley value.

Small coalition sizes get the full hypergeometric grid of conditional mean
utilities; large sizes collapse to a single paired difference at the expected
overlap, which is where almost all of the budget savings come from.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .combinatorics import (
    HypergeomParams,
    log_family_size,
    sample_paired_tuples,
    sample_subsets_with_intersection,
)
from .exact import _family_masks
from .games import Game, augment_with_null
from .metrics import ConvergenceCurve, Recorder

log = logging.getLogger(__name__)


@dataclass
class EstimatorConfig:
    """Knobs for the two-regime estimator.

    size_threshold: coalition sizes below this use the full overlap grid.
    grid_samples: Monte Carlo draws per grid point (small-size regime).
    pair_samples: paired draws per size (large-size regime).
    exhaustive_small_sizes: enumerate a grid family outright when it has no
        more than grid_samples subsets, giving the exact conditional mean.
    checkpoint_interval: evaluations between convergence-curve checkpoints
        (None disables the curve).
    """

    size_threshold: int
    grid_samples: int
    pair_samples: int
    seed: int | None = None
    exhaustive_small_sizes: bool = False
    checkpoint_interval: int | None = None

    def validate(self, n: int) -> None:
        if not (1 <= self.size_threshold <= n):
            raise ValueError(f"size_threshold must be in 1..{n}")
        if self.grid_samples < 1 or self.pair_samples < 1:
            raise ValueError("sample counts must be >= 1")


@dataclass
class GroupValueEstimate:
    """Result of one estimator run."""

    value: float
    per_size_terms: np.ndarray  # entry s-1 is the size-s contribution
    evaluations_used: int
    curve: ConvergenceCurve
    std_error: float = 0.0

    def to_jsonable(self) -> dict:
        return {
            "value": self.value,
            "per_size_terms": self.per_size_terms.tolist(),
            "evaluations_used": self.evaluations_used,
            "std_error": self.std_error,
            "curve": self.curve.to_jsonable(),
        }


def _paired_overlap_range(n: int, s0: int, s: int) -> tuple[int, int]:
    """Overlap values for which a paired tuple exists: the hypergeometric
    support shrunk so both residual pools stay non-empty."""
    lo = max(0, s + s0 - n + 1)
    hi = min(s, s0 - 1)
    return lo, hi


def estimate_mean_utility(
    game: Game,
    members,
    s: int,
    s1: int,
    samples: int,
    rng: np.random.Generator,
    exhaustive: bool = False,
) -> float:
    """Monte Carlo mean of the utility over subsets of size s with the given
    overlap; enumerates the whole family instead when ``exhaustive`` is set
    and the family is no larger than ``samples``."""
    members = np.array(sorted(set(int(i) for i in members)), dtype=np.intp)
    n, s0 = game.n, len(members)
    lo, hi = HypergeomParams(n, s0, s).support()
    if s1 < lo or s1 > hi:
        raise ValueError(f"overlap {s1} infeasible (support [{lo}, {hi}])")
    if exhaustive and log_family_size(n, s0, s, s1) <= math.log(samples):
        masks = _family_masks(n, members, s, s1)
        return float(game.evaluate_masks(masks).mean())
    masks = sample_subsets_with_intersection(rng, n, members, s, s1, samples)
    return float(game.evaluate_masks(masks).mean())


def estimate_mean_utility_gap(
    game: Game,
    members,
    s: int,
    s1: int,
    samples: int,
    rng: np.random.Generator,
    return_variance: bool = False,
):
    """Paired Monte Carlo estimate of the change in conditional mean utility
    when one more member replaces a non-member: averages
    U(S ∪ {member}) - U(S ∪ {non-member}) over shared base subsets S."""
    members = np.array(sorted(set(int(i) for i in members)), dtype=np.intp)
    n = game.n
    masks, z1, z2 = sample_paired_tuples(rng, n, members, s, s1, samples)
    rows = np.arange(samples)
    with_in = masks.copy()
    with_in[rows, z1] = True
    with_out = masks.copy()
    with_out[rows, z2] = True
    diffs = game.evaluate_masks(with_in) - game.evaluate_masks(with_out)
    mean = float(diffs.mean())
    if return_variance:
        var = float(diffs.var(ddof=1)) if samples > 1 else 0.0
        return mean, var
    return mean


def predicted_evaluations(n: int, s0: int, config: EstimatorConfig) -> int:
    """Closed-form utility-evaluation count of :func:`estimate_group_value`
    in pure sampling mode (no exhaustive enumeration)."""
    if s0 == 0:
        return 0
    if s0 == n:
        return 2
    total = 2
    for s in range(1, n):
        if s < config.size_threshold:
            lo, hi = HypergeomParams(n, s0, s).support()
            total += config.grid_samples * (hi - lo + 1)
        else:
            lo, hi = _paired_overlap_range(n, s0, s)
            if lo <= hi:
                total += 2 * config.pair_samples
    return total


def estimate_group_value(
    game: Game,
    members,
    config: EstimatorConfig,
    rng: np.random.Generator | None = None,
) -> GroupValueEstimate:
    """Two-regime estimate of the faithful group Shapley value of ``members``.

    Sizes below the threshold use per-overlap mean-utility estimates combined
    with exact hypergeometric weights; larger sizes use a single paired
    difference at the expected overlap (clamped into the feasible range, with
    infeasible sizes contributing zero).
    """
    members = np.array(sorted(set(int(i) for i in members)), dtype=np.intp)
    n = game.n
    s0 = len(members)
    if len(members) and (members[0] < 0 or members[-1] >= n):
        raise ValueError("member index out of range")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    recorder = Recorder(config.checkpoint_interval)
    start = game.eval_counter

    if s0 == 0:
        return GroupValueEstimate(0.0, np.zeros(max(n - 1, 0)), 0, recorder.curve)

    u_full = game.evaluate(range(n))
    u_empty = game.evaluate([])
    if s0 == n:
        value = u_full - u_empty
        recorder.update(game.eval_counter - start, value)
        return GroupValueEstimate(
            value, np.zeros(n - 1), game.eval_counter - start, recorder.curve
        )

    config.validate(n)
    alpha0 = s0 / n
    running = alpha0 * (u_full - u_empty)
    recorder.update(game.eval_counter - start, running)
    per_size = np.zeros(n - 1)
    variance_total = 0.0

    for s in range(1, n):
        if s < config.size_threshold:
            params = HypergeomParams(n, s0, s)
            lo, probs = params.pmf_vector()
            term = 0.0
            for j, p in enumerate(probs):
                s1 = lo + j
                mu = estimate_mean_utility(
                    game, members, s, s1, config.grid_samples, rng,
                    exhaustive=config.exhaustive_small_sizes,
                )
                term += p * (n / (n - s)) * (s1 / s - alpha0) * mu
                recorder.update(game.eval_counter - start, running + term)
        else:
            lo, hi = _paired_overlap_range(n, s0, s)
            if lo > hi:
                log.debug("size %d has no feasible paired overlap; term set to 0", s)
                per_size[s - 1] = 0.0
                continue
            target = math.floor(s * alpha0)
            s1 = min(max(target, lo), hi)
            gap, var = estimate_mean_utility_gap(
                game, members, s, s1, config.pair_samples, rng, return_variance=True
            )
            coef = (n / (n - 1)) * alpha0 * (1 - alpha0)
            term = coef * gap
            variance_total += (coef**2) * var / config.pair_samples
            recorder.update(game.eval_counter - start, running + term)
        per_size[s - 1] = term
        running += term

    return GroupValueEstimate(
        running,
        per_size,
        game.eval_counter - start,
        recorder.curve,
        std_error=math.sqrt(variance_total),
    )


def choose_parameters(
    n: int,
    s0: int,
    epsilon: float,
    delta: float,
    upsilon: float,
    budget_cap: int | None = None,
) -> EstimatorConfig:
    """Accuracy-driven parameter choice: threshold and sample sizes scaled for
    an (epsilon, delta)-approximation, all hidden constants set to 1. With a
    budget cap, both sample sizes are deflated proportionally."""
    if not (0 < epsilon < 1) or not (0 < delta < 1):
        raise ValueError("epsilon and delta must lie in (0, 1)")
    if upsilon <= 0:
        raise ValueError("upsilon must be positive")
    alpha0 = s0 / n
    log_term = math.log(n / delta)
    s_bar = math.ceil(epsilon ** (-1.0 / upsilon))
    s_bar = max(1, min(s_bar, n))
    m1 = math.ceil(epsilon ** (-(4 + 2 * upsilon) / upsilon) * log_term)
    m2 = math.ceil(max(1.0, epsilon**-2 * (alpha0 * (1 - alpha0)) ** 2 * log_term**3))
    m1, m2 = max(1, m1), max(1, m2)
    config = EstimatorConfig(size_threshold=s_bar, grid_samples=m1, pair_samples=m2)
    if budget_cap is not None:
        predicted = predicted_evaluations(n, s0, config)
        if predicted > budget_cap:
            factor = budget_cap / predicted
            config.grid_samples = max(1, int(m1 * factor))
            config.pair_samples = max(1, int(m2 * factor))
            log.info("budget cap deflated sample sizes by factor %.4g", factor)
    return config


def estimate_group_value_augmented(
    game: Game,
    members,
    B: int,
    samples: int,
    null_sampler,
    config: EstimatorConfig | None = None,
    rng: np.random.Generator | None = None,
) -> GroupValueEstimate:
    """Paired-difference estimate over every coalition size, with the utility
    calls inside the differences padded up to B items by fresh non-informative
    draws when the input is smaller than B.

    The efficiency endpoint term uses the raw game's full-set and empty-set
    utilities; only the paired differences go through the padded wrapper.
    """
    members = np.array(sorted(set(int(i) for i in members)), dtype=np.intp)
    n = game.n
    s0 = len(members)
    if len(members) and (members[0] < 0 or members[-1] >= n):
        raise ValueError("member index out of range")
    if rng is None:
        rng = np.random.default_rng(config.seed if config else None)
    interval = config.checkpoint_interval if config else None
    recorder = Recorder(interval)
    start = game.eval_counter

    if s0 == 0:
        return GroupValueEstimate(0.0, np.zeros(max(n - 1, 0)), 0, recorder.curve)
    u_full = game.evaluate(range(n))
    u_empty = game.evaluate([])
    if s0 == n:
        value = u_full - u_empty
        recorder.update(game.eval_counter - start, value)
        return GroupValueEstimate(
            value, np.zeros(n - 1), game.eval_counter - start, recorder.curve
        )

    wrapped = augment_with_null(game, B, null_sampler=null_sampler, rng=rng)
    alpha0 = s0 / n
    running = alpha0 * (u_full - u_empty)
    recorder.update(game.eval_counter - start, running)
    per_size = np.zeros(n - 1)
    variance_total = 0.0
    coef = (n / (n - 1)) * alpha0 * (1 - alpha0)

    for s in range(1, n):
        lo, hi = _paired_overlap_range(n, s0, s)
        if lo > hi:
            log.debug("size %d has no feasible paired overlap; term set to 0", s)
            continue
        s1 = min(max(math.floor(s * alpha0), lo), hi)
        gap, var = estimate_mean_utility_gap(
            wrapped, members, s, s1, samples, rng, return_variance=True
        )
        term = coef * gap
        variance_total += (coef**2) * var / samples
        per_size[s - 1] = term
        running += term
        recorder.update(
            game.eval_counter - start + wrapped.eval_counter, running
        )

    return GroupValueEstimate(
        running,
        per_size,
        game.eval_counter - start + wrapped.eval_counter,
        recorder.curve,
        std_error=math.sqrt(variance_total),
    )
