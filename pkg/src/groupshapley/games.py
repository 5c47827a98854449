"""Cooperative games: the utility-function abstraction and concrete game types.

A game evaluates a real-valued utility on any index subset of {0..n-1} and
counts every evaluation; budget experiments rely on that counter being honest,
so no game caches utilities.
"""

from __future__ import annotations

import csv
import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class UnsupportedGameError(TypeError):
    """Raised when an operation needs a capability the game type lacks."""


class Game:
    """Base class: pure utility over index subsets plus an evaluation counter.

    Subclasses implement ``_value(mask)`` for a boolean membership vector and
    may override ``_values(masks)`` with a vectorized version.
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("player count must be positive")
        self._n = int(n)
        self._evals = 0
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self._n

    @property
    def eval_counter(self) -> int:
        return self._evals

    def _count(self, k: int) -> None:
        with self._lock:
            self._evals += k

    def mask_from_indices(self, S: Iterable[int]) -> np.ndarray:
        idx = list(S)
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate indices in subset")
        mask = np.zeros(self._n, dtype=bool)
        for i in idx:
            i = int(i)
            if i < 0 or i >= self._n:
                raise ValueError(f"index {i} out of range for n={self._n}")
            mask[i] = True
        return mask

    def evaluate(self, S: Iterable[int]) -> float:
        mask = self.mask_from_indices(S)
        self._count(1)
        return float(self._value(mask))

    def evaluate_mask(self, mask: np.ndarray) -> float:
        self._count(1)
        return float(self._value(np.asarray(mask, dtype=bool)))

    def evaluate_masks(self, masks: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks, dtype=bool)
        self._count(len(masks))
        return self._values(masks)

    def _value(self, mask: np.ndarray) -> float:
        raise NotImplementedError

    def _values(self, masks: np.ndarray) -> np.ndarray:
        return np.array([self._value(m) for m in masks], dtype=float)

    # Optional capability: evaluate with extra synthetic items appended.
    def _padded_value(self, mask: np.ndarray, pad: int, rng: np.random.Generator) -> float:
        raise UnsupportedGameError(
            f"{type(self).__name__} does not support synthetic augmentation"
        )

    def to_config(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} is not serializable")


class SOUGame(Game):
    """Sum-of-unanimity game: a coalition collects a coefficient for every
    tracked subset it fully contains. Individual Shapley values are closed-form.
    """

    def __init__(self, n: int, subsets: Sequence[Sequence[int]], coefficients: Sequence[float]):
        super().__init__(n)
        if len(subsets) != len(coefficients):
            raise ValueError("need one coefficient per subset")
        if len(subsets) == 0:
            raise ValueError("need at least one subset")
        self.subsets = [np.array(sorted(set(a)), dtype=np.intp) for a in subsets]
        for a, raw in zip(self.subsets, subsets):
            if len(a) == 0:
                raise ValueError("empty unanimity subset")
            if len(a) != len(list(raw)):
                raise ValueError("duplicate indices in unanimity subset")
            if a[0] < 0 or a[-1] >= n:
                raise ValueError("unanimity subset index out of range")
        self.coefficients = np.asarray(coefficients, dtype=float)
        member = np.zeros((len(self.subsets), n), dtype=bool)
        for j, a in enumerate(self.subsets):
            member[j, a] = True
        self._member = member.astype(np.float64)
        self._sizes = member.sum(axis=1).astype(np.float64)
        self._seed = None  # set by sou_generate for serialization

    def _value(self, mask: np.ndarray) -> float:
        hits = self._member @ mask.astype(np.float64)
        return float(self.coefficients[hits == self._sizes].sum())

    def _values(self, masks: np.ndarray) -> np.ndarray:
        hits = masks.astype(np.float64) @ self._member.T
        return (hits == self._sizes) @ self.coefficients

    def exact_shapley(self, i: int) -> float:
        """Closed-form Shapley value of one player: sum of coefficient/|subset|
        over tracked subsets containing the player."""
        if i < 0 or i >= self.n:
            raise ValueError(f"player {i} out of range")
        total = 0.0
        for a, alpha in zip(self.subsets, self.coefficients):
            if i in a:
                total += alpha / len(a)
        return total

    def exact_shapley_vector(self) -> np.ndarray:
        out = np.zeros(self.n)
        for a, alpha in zip(self.subsets, self.coefficients):
            out[a] += alpha / len(a)
        return out

    def to_config(self) -> dict:
        if self._seed is not None:
            return {"type": "sou", "n": self.n, "d": len(self.subsets), "seed": self._seed}
        return {
            "type": "sou_explicit",
            "n": self.n,
            "subsets": [a.tolist() for a in self.subsets],
            "coefficients": self.coefficients.tolist(),
        }


def sou_generate(n: int, d: int, seed) -> SOUGame:
    """Random sum-of-unanimity game: each tracked subset gets a size uniform on
    1..n and that many players without replacement; its coefficient is the mean
    of the member weights (i mod 4)/4. Deterministic given the seed."""
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    rng = np.random.default_rng(seed)
    subsets = []
    coefs = []
    weights = (np.arange(n) % 4) / 4.0
    for _ in range(d):
        size = int(rng.integers(1, n + 1))
        members = rng.choice(n, size=size, replace=False)
        subsets.append(np.sort(members))
        coefs.append(float(weights[members].mean()))
    game = SOUGame(n, subsets, coefs)
    game._seed = seed if isinstance(seed, int) else None
    return game


class SizeOnlyGame(Game):
    """Utility depending on coalition size only: U(S) = size_utility(|S|)."""

    def __init__(self, n: int, size_utility: Callable[[int], float], name: str | None = None):
        super().__init__(n)
        self.size_utility = size_utility
        self.name = name

    def _value(self, mask: np.ndarray) -> float:
        return float(self.size_utility(int(mask.sum())))

    def _values(self, masks: np.ndarray) -> np.ndarray:
        sizes = masks.sum(axis=1)
        return np.array([self.size_utility(int(s)) for s in sizes], dtype=float)

    # Null items only inflate the coalition size here.
    def _padded_value(self, mask: np.ndarray, pad: int, rng) -> float:
        return float(self.size_utility(int(mask.sum()) + pad))

    def to_config(self) -> dict:
        if self.name is None:
            raise NotImplementedError("size-only game without a registered name")
        return {"type": "size_only", "n": self.n, "name": self.name}


class IntersectionSizeGame(Game):
    """Utility depending only on (|S ∩ members|, |S|), via ``profile(s1, s)``.

    Useful for games whose conditional mean utility is available in closed
    form, which makes large-n exact computations cheap.
    """

    def __init__(self, n: int, members: Sequence[int], profile: Callable[[int, int], float]):
        super().__init__(n)
        self.members = np.array(sorted(set(members)), dtype=np.intp)
        if len(self.members) and (self.members[0] < 0 or self.members[-1] >= n):
            raise ValueError("member index out of range")
        self.profile = profile
        self._member_mask = np.zeros(n, dtype=bool)
        self._member_mask[self.members] = True

    def _value(self, mask: np.ndarray) -> float:
        s = int(mask.sum())
        s1 = int((mask & self._member_mask).sum())
        return float(self.profile(s1, s))

    def _values(self, masks: np.ndarray) -> np.ndarray:
        sizes = masks.sum(axis=1)
        overlaps = masks[:, self._member_mask].sum(axis=1)
        return np.array(
            [self.profile(int(a), int(b)) for a, b in zip(overlaps, sizes)], dtype=float
        )


class RegressionGame(Game):
    """Ridge regression trained on the selected rows; utility is negative mean
    squared error on a held-out test set.

    Coalitions with fewer rows than predictors fall back to the null utility
    (the negative variance of the test responses, i.e. the mean predictor);
    wrap with :func:`augment_with_null` for a principled treatment of small
    coalitions.
    """

    def __init__(self, X_train, y_train, X_test, y_test, lam: float = 0.01):
        X_train = np.asarray(X_train, dtype=float)
        y_train = np.asarray(y_train, dtype=float)
        self.X_test = np.asarray(X_test, dtype=float)
        self.y_test = np.asarray(y_test, dtype=float)
        if lam < 0:
            raise ValueError("ridge penalty must be non-negative")
        if X_train.ndim != 2 or self.X_test.ndim != 2:
            raise ValueError("predictor matrices must be 2-D")
        super().__init__(X_train.shape[0])
        self.X_train = X_train
        self.y_train = y_train
        self.lam = float(lam)
        self.null_utility = -float(np.var(self.y_test))

    @property
    def num_predictors(self) -> int:
        return self.X_train.shape[1]

    def _fit_and_score(self, X: np.ndarray, y: np.ndarray) -> float:
        p = X.shape[1]
        if X.shape[0] < p:
            return self.null_utility
        gram = X.T @ X + self.lam * np.eye(p)
        try:
            beta = np.linalg.solve(gram, X.T @ y)
        except np.linalg.LinAlgError:
            beta = np.linalg.lstsq(X, y, rcond=None)[0]
        resid = self.X_test @ beta - self.y_test
        return -float(np.mean(resid**2))

    def _value(self, mask: np.ndarray) -> float:
        if not mask.any():
            return self.null_utility
        return self._fit_and_score(self.X_train[mask], self.y_train[mask])

    def _padded_value(self, mask: np.ndarray, pad: int, rng: np.random.Generator) -> float:
        Xn, yn = self.default_null_sampler(rng, pad)
        X = np.vstack([self.X_train[mask], Xn])
        y = np.concatenate([self.y_train[mask], yn])
        return self._fit_and_score(X, y)

    def default_null_sampler(self, rng: np.random.Generator, count: int):
        """Non-informative items: empirical predictors paired with independently
        resampled responses (response shuffling)."""
        xi = rng.integers(0, len(self.y_train), size=count)
        yi = rng.integers(0, len(self.y_train), size=count)
        return self.X_train[xi], self.y_train[yi]


class NullAugmentedGame(Game):
    """Wrapper that pads small coalitions with fresh non-informative items up to
    the target size; coalitions at or above the threshold pass through.

    The fresh draws make the wrapped game stochastic: the purity guarantee of
    the base class is deliberately waived here.
    """

    def __init__(self, base: Game, threshold: int, null_sampler=None, rng=None):
        if threshold < 1:
            raise ValueError("augmentation threshold must be >= 1")
        # Probe the capability up front so misuse fails at construction.
        if type(base)._padded_value is Game._padded_value:
            raise UnsupportedGameError(
                f"{type(base).__name__} does not support synthetic augmentation"
            )
        super().__init__(base.n)
        self.base = base
        self.threshold = int(threshold)
        self.null_sampler = null_sampler
        self.rng = rng if rng is not None else np.random.default_rng()

    def _value(self, mask: np.ndarray) -> float:
        size = int(mask.sum())
        if size >= self.threshold:
            return self.base._value(mask)
        pad = self.threshold - size
        if self.null_sampler is not None and isinstance(self.base, RegressionGame):
            Xn, yn = self.null_sampler(self.rng, pad)
            X = np.vstack([self.base.X_train[mask], Xn])
            y = np.concatenate([self.base.y_train[mask], yn])
            return self.base._fit_and_score(X, y)
        return self.base._padded_value(mask, pad, self.rng)


def augment_with_null(game: Game, B: int, null_sampler=None, rng=None) -> Game:
    """Returns a game evaluating U(S ∪ {B-|S| fresh null items}) when |S| < B
    and U(S) otherwise. Raises :class:`UnsupportedGameError` for game types
    that cannot absorb synthetic items."""
    return NullAugmentedGame(game, B, null_sampler=null_sampler, rng=rng)


def load_regression_csv(path, test_fraction: float, lam: float, seed) -> RegressionGame:
    """Builds a ridge-regression game from a CSV with a header row, numeric
    columns, and the response in the last column. The response is centered and
    standardized over the full file; the train/test split is deterministic
    given the seed."""
    if not (0 < test_fraction < 1):
        raise ValueError("test_fraction must be in (0, 1)")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty CSV")
        width = len(header)
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns")
            try:
                rows.append([float(v) for v in rec])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from exc
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError(f"{path}: need at least one predictor and a response")
    X, y = data[:, :-1], data[:, -1]
    y = y - y.mean()
    std = y.std()
    if std > 0:
        y = y / std
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    n_test = int(round(test_fraction * len(y)))
    if n_test < 2 or len(y) - n_test < 2:
        raise ValueError("fewer than 2 rows in one of the splits")
    test_idx, train_idx = order[:n_test], order[n_test:]
    return RegressionGame(X[train_idx], y[train_idx], X[test_idx], y[test_idx], lam=lam)


# Named size-utility functions usable from serialized configs.
SIZE_UTILITIES: dict[str, Callable[[int], float]] = {
    "saturating2": lambda s: 1.0 - 2.0 ** (-s),
    "saturating3": lambda s: 1.0 - 3.0 ** (-s),
    "linear": lambda s: float(s),
    "cubic": lambda s: float(s) ** 3,
    "sqrt": lambda s: float(s) ** 0.5,
    "log1p": lambda s: float(np.log1p(s)),
}


def game_from_config(cfg: dict) -> Game:
    """Rebuilds a game from its JSON-friendly description."""
    kind = cfg.get("type")
    if kind == "sou":
        return sou_generate(int(cfg["n"]), int(cfg["d"]), cfg["seed"])
    if kind == "sou_explicit":
        return SOUGame(int(cfg["n"]), cfg["subsets"], cfg["coefficients"])
    if kind == "size_only":
        name = cfg["name"]
        if name not in SIZE_UTILITIES:
            raise ValueError(f"unknown size-utility name {name!r}")
        return SizeOnlyGame(int(cfg["n"]), SIZE_UTILITIES[name], name=name)
    if kind == "regression_csv":
        return load_regression_csv(
            cfg["path"], float(cfg["test_fraction"]), float(cfg["lambda"]), cfg["seed"]
        )
    raise ValueError(f"unknown game type {kind!r}")
