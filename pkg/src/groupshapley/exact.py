"""Brute-force oracles: exact Shapley values, group values, conditional mean
utilities, and the size-decomposition identity, plus the axiom checker.

Everything here enumerates subsets, so it is capped (default n = 20, i.e. at
most ~1M utility evaluations) and meant as ground truth for the estimators.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .combinatorics import HypergeomParams
from .games import Game, SOUGame

DEFAULT_CAP = 20


@dataclass(frozen=True)
class Partition:
    """Disjoint, non-empty index groups covering {0..n-1}."""

    groups: tuple[tuple[int, ...], ...]

    def __init__(self, groups, n: int | None = None):
        canon = tuple(tuple(sorted(g)) for g in groups)
        object.__setattr__(self, "groups", canon)
        flat = [i for g in canon for i in g]
        if any(len(g) == 0 for g in canon):
            raise ValueError("empty group in partition")
        if len(set(flat)) != len(flat):
            raise ValueError("groups overlap")
        if n is not None and sorted(flat) != list(range(n)):
            raise ValueError(f"groups do not cover 0..{n - 1}")

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def n(self) -> int:
        return sum(len(g) for g in self.groups)


def mod_partition(n: int, k: int) -> Partition:
    """Groups players by index residue: group j holds {i : i ≡ j (mod k)}."""
    return Partition([range(j, n, k) for j in range(k)], n=n)


def _all_masks(n: int) -> np.ndarray:
    ids = np.arange(1 << n, dtype=np.int64)
    return ((ids[:, None] >> np.arange(n)) & 1).astype(bool)


def utility_table(game: Game, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Evaluates every subset once; entry m is the utility of the bitmask m."""
    n = game.n
    if n > cap:
        raise ValueError(f"n={n} exceeds brute-force cap {cap}")
    return game.evaluate_masks(_all_masks(n))


def exact_shapley_values(game: Game, cap: int = DEFAULT_CAP) -> np.ndarray:
    """All n individual Shapley values by full enumeration (2^n evaluations)."""
    n = game.n
    table = utility_table(game, cap=cap)
    sizes = _all_masks(n).sum(axis=1)
    # Permutation weights |S|! (n-|S|-1)! / n!, computed in log-space.
    log_w = np.array(
        [math.lgamma(s + 1) + math.lgamma(n - s) - math.lgamma(n + 1) for s in range(n)]
    )
    weights = np.exp(log_w)
    sv = np.zeros(n)
    ids = np.arange(1 << n, dtype=np.int64)
    for i in range(n):
        without = ids[(ids >> i) & 1 == 0]
        marginals = table[without | (1 << i)] - table[without]
        sv[i] = float(weights[sizes[without]] @ marginals)
    return sv


def exact_group_shapley(game: Game, partition: Partition, k: int) -> float:
    """Group-as-player Shapley value of group k: enumerates coalitions of the
    other groups and averages the target group's marginal contributions."""
    groups = partition.groups
    if not (0 <= k < len(groups)):
        raise ValueError(f"group index {k} out of range")
    others = [g for j, g in enumerate(groups) if j != k]
    K = len(others)
    if K + 1 > DEFAULT_CAP:
        raise ValueError(f"too many groups ({K + 1}) for exact enumeration")
    n = game.n
    target = np.zeros(n, dtype=bool)
    target[list(groups[k])] = True
    other_masks = np.zeros((K, n), dtype=bool)
    for j, g in enumerate(others):
        other_masks[j, list(g)] = True

    union_masks = np.zeros((1 << K, n), dtype=bool)
    for bits in range(1 << K):
        for j in range(K):
            if (bits >> j) & 1:
                union_masks[bits] |= other_masks[j]
    with_target = union_masks | target
    u_without = game.evaluate_masks(union_masks)
    u_with = game.evaluate_masks(with_target)

    total = 0.0
    for bits in range(1 << K):
        m = bin(bits).count("1")
        log_w = math.lgamma(m + 1) + math.lgamma(K - m + 1) - math.lgamma(K + 2)
        total += math.exp(log_w) * (u_with[bits] - u_without[bits])
    return total


def exact_faithful_group_shapley(game: Game, members, cap: int = DEFAULT_CAP) -> float:
    """Sum of the members' individual Shapley values."""
    members = sorted(set(int(i) for i in members))
    if members and (members[0] < 0 or members[-1] >= game.n):
        raise ValueError("member index out of range")
    if not members:
        return 0.0
    sv = exact_shapley_values(game, cap=cap)
    return float(sv[members].sum())


def _family_masks(n: int, members: np.ndarray, s: int, s1: int) -> np.ndarray:
    comp = np.setdiff1d(np.arange(n), members)
    masks = []
    for inside in itertools.combinations(members.tolist(), s1):
        for outside in itertools.combinations(comp.tolist(), s - s1):
            m = np.zeros(n, dtype=bool)
            m[list(inside)] = True
            m[list(outside)] = True
            masks.append(m)
    return np.array(masks, dtype=bool)


def exact_mean_utility(game: Game, members, s: int, s1: int) -> float:
    """Average utility over all subsets of size s intersecting the member set
    in exactly s1 points, by enumeration."""
    members = np.array(sorted(set(int(i) for i in members)), dtype=np.intp)
    params = HypergeomParams(game.n, len(members), s)
    lo, hi = params.support()
    if s1 < lo or s1 > hi:
        raise ValueError(f"overlap {s1} infeasible (support [{lo}, {hi}])")
    masks = _family_masks(game.n, members, s, s1)
    return float(game.evaluate_masks(masks).mean())


def exact_size_term(game: Game, members, s: int) -> float:
    """Per-size contribution in the size decomposition of the faithful group
    value: the hypergeometric expectation of the centered-overlap weight times
    the conditional mean utility."""
    n = game.n
    if not (1 <= s <= n - 1):
        raise ValueError(f"size {s} out of range 1..{n - 1}")
    members = np.array(sorted(set(int(i) for i in members)), dtype=np.intp)
    s0 = len(members)
    params = HypergeomParams(n, s0, s)
    lo, probs = params.pmf_vector()
    total = 0.0
    for j, p in enumerate(probs):
        s1 = lo + j
        mu = exact_mean_utility(game, members, s, s1)
        total += p * (n / (n - s)) * (s1 / s - s0 / n) * mu
    return total


def faithful_group_shapley_by_sizes(game: Game, members) -> float:
    """Faithful group value via its coalition-size decomposition: the
    efficiency share plus the sum of per-size terms. Agrees with
    :func:`exact_faithful_group_shapley` up to rounding."""
    members = sorted(set(int(i) for i in members))
    if not members:
        return 0.0
    n = game.n
    s0 = len(members)
    u_full = game.evaluate(range(n))
    u_empty = game.evaluate([])
    total = (s0 / n) * (u_full - u_empty)
    for s in range(1, n):
        total += exact_size_term(game, members, s)
    return total


def size_profile_term(profile, n: int, s0: int, s: int) -> float:
    """Same as :func:`exact_size_term` but for games whose utility depends only
    on (overlap, size); exact at any n via the hypergeometric pmf."""
    params = HypergeomParams(n, s0, s)
    lo, probs = params.pmf_vector()
    total = 0.0
    for j, p in enumerate(probs):
        s1 = lo + j
        total += p * (n / (n - s)) * (s1 / s - s0 / n) * profile(s1, s)
    return total


# ---------------------------------------------------------------------------
# Axiom checking


@dataclass
class AxiomResult:
    passed: bool
    max_deviation: float
    detail: str = ""


@dataclass
class AxiomReport:
    results: dict[str, AxiomResult] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def to_json(self) -> str:
        return json.dumps(
            {
                name: {
                    "passed": bool(r.passed),
                    "max_deviation": float(r.max_deviation),
                    "detail": r.detail,
                }
                for name, r in self.results.items()
            },
            indent=2,
        )


def fgsv_valuation(game: Game, partition: Partition, k: int) -> float:
    """Faithful group valuation: sum of members' exact Shapley values."""
    return exact_faithful_group_shapley(game, partition.groups[k])


def gsv_valuation(game: Game, partition: Partition, k: int) -> float:
    """Group-as-player valuation, exact."""
    return exact_group_shapley(game, partition, k)


class _MaskTransformGame(Game):
    """Applies a fixed mask transform before delegating to the base utility."""

    def __init__(self, base: Game, transform):
        super().__init__(base.n)
        self.base = base
        self.transform = transform

    def _value(self, mask: np.ndarray) -> float:
        return self.base._value(self.transform(mask))


class _ComboGame(Game):
    """Linear combination of several games' utilities."""

    def __init__(self, parts: list[tuple[float, Game]]):
        super().__init__(parts[0][1].n)
        self.parts = parts

    def _value(self, mask: np.ndarray) -> float:
        return sum(a * g._value(mask) for a, g in self.parts)


class _SymmetricPairGame(Game):
    """Utility that provably treats two equal-size groups interchangeably: it
    sees them only through the combined membership count."""

    def __init__(self, base: Game, g1, g2):
        super().__init__(base.n)
        self.base = base
        self.pair = np.zeros(base.n, dtype=bool)
        self.pair[list(g1)] = True
        self.pair[list(g2)] = True

    def _value(self, mask: np.ndarray) -> float:
        t = int((mask & self.pair).sum())
        outside = mask & ~self.pair
        return 0.1 * t * t + t + self.base._value(outside)


def check_axioms(
    valuation,
    game: Game,
    partitions: list[Partition],
    second_game: Game | None = None,
    tol: float = 1e-10,
) -> AxiomReport:
    """Empirically checks the five group-valuation axioms for ``valuation``,
    a callable (game, partition, k) -> float.

    Constructs the witness games it needs (a dummy group, a symmetrized pair,
    a linear combination) from ``game`` and, for linearity, ``second_game``.
    """
    if not partitions:
        raise ValueError("need at least one partition")
    report = AxiomReport()
    base_part = partitions[0]

    # Null player: make the last group of the base partition ignored by the
    # utility; its valuation must be zero.
    dummy_idx = len(base_part.groups) - 1
    drop = np.zeros(game.n, dtype=bool)
    drop[list(base_part.groups[dummy_idx])] = True
    null_game = _MaskTransformGame(game, lambda m, d=drop: m & ~d)
    dev = abs(valuation(null_game, base_part, dummy_idx))
    report.results["null_player"] = AxiomResult(dev <= tol, dev)

    # Symmetry: two equal-size groups that the utility sees identically.
    sizes = [len(g) for g in base_part.groups]
    pair = None
    for a in range(len(sizes)):
        for b in range(a + 1, len(sizes)):
            if sizes[a] == sizes[b]:
                pair = (a, b)
                break
        if pair:
            break
    if pair is None:
        report.results["symmetry"] = AxiomResult(True, 0.0, "no equal-size groups to test")
    else:
        a, b = pair
        sym_game = _SymmetricPairGame(game, base_part.groups[a], base_part.groups[b])
        va = valuation(sym_game, base_part, a)
        vb = valuation(sym_game, base_part, b)
        dev = abs(va - vb)
        report.results["symmetry"] = AxiomResult(dev <= tol, dev)

    # Linearity: valuation of a1*U1 + a2*U2 equals the combination.
    if second_game is None:
        second_game = _MaskTransformGame(game, lambda m: m[::-1].copy())
    a1, a2 = 0.7, -1.3
    combo = _ComboGame([(a1, game), (a2, second_game)])
    max_dev = 0.0
    for k in range(len(base_part.groups)):
        lhs = valuation(combo, base_part, k)
        rhs = a1 * valuation(game, base_part, k) + a2 * valuation(second_game, base_part, k)
        max_dev = max(max_dev, abs(lhs - rhs))
    report.results["linearity"] = AxiomResult(max_dev <= tol, max_dev)

    # Efficiency: group values sum to U(full) - U(empty) for every partition.
    u_full = game.evaluate(range(game.n))
    u_empty = game.evaluate([])
    max_dev = 0.0
    for part in partitions:
        total = sum(valuation(game, part, k) for k in range(len(part.groups)))
        max_dev = max(max_dev, abs(total - (u_full - u_empty)))
    report.results["efficiency"] = AxiomResult(max_dev <= tol, max_dev)

    # Faithfulness: a group present in two partitions gets the same value.
    max_dev = 0.0
    tested = False
    for i in range(len(partitions)):
        for j in range(i + 1, len(partitions)):
            gi = {g: k for k, g in enumerate(partitions[i].groups)}
            for k2, g in enumerate(partitions[j].groups):
                if g in gi:
                    tested = True
                    vi = valuation(game, partitions[i], gi[g])
                    vj = valuation(game, partitions[j], k2)
                    max_dev = max(max_dev, abs(vi - vj))
    detail = "" if tested else "no shared group across partitions"
    report.results["faithfulness"] = AxiomResult(max_dev <= tol and tested, max_dev, detail)
    return report
