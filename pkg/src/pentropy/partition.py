"""Finite partitions, their entropy, and label distributions of joins.

Entropy is in nats throughout.  A join over an iterate set ``I`` is the
partition whose cell containing ``x`` is the tuple of labels of
``T^p x`` for ``p`` in ``I``; its law is a :class:`LabelDistribution`.

Sampling is batched with a fixed batch size.  Batch ``b`` of a run with
seed ``s`` draws from the stream ``default_rng([s, b])``, and counts are
merged by summation, so results do not depend on how batches are
scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from scipy.special import entr

from .errors import CombinatorialExplosionError, InvalidDistributionError

DEFAULT_SUPPORT_CAP = 10 ** 6
BATCH_SIZE = 2 ** 16
PARTITION_SUM_TOL = 1e-12
DISTRIBUTION_SUM_TOL = 1e-9


def entropy(masses: Iterable[float], tol: float = DISTRIBUTION_SUM_TOL) -> float:
    """``-sum p ln p`` with ``0 ln 0 = 0``.

    Raises:
        InvalidDistributionError: on a negative mass or a total off by more
            than ``tol``.
    """
    p = np.asarray(list(masses) if not isinstance(masses, np.ndarray) else masses, dtype=float)
    if p.size == 0:
        raise InvalidDistributionError("empty distribution")
    if np.any(p < 0):
        raise InvalidDistributionError("negative mass")
    if abs(p.sum() - 1.0) > tol:
        raise InvalidDistributionError(f"masses sum to {p.sum()!r}, not 1")
    return float(entr(p).sum())


def miller_madow(counts: np.ndarray) -> tuple[float, float]:
    """Bias-corrected plug-in entropy of a count vector, with a standard error.

    The estimate is ``H_plugin + (K_obs - 1) / (2 n)``.  The error combines
    the delta-method variance ``Var(ln p) / n`` with the chi-square
    fluctuation ``sqrt(2 (K_obs - 1)) / (2 n)`` that dominates when the
    distribution is close to uniform.
    """
    c = np.asarray(counts, dtype=float)
    c = c[c > 0]
    n = c.sum()
    if n <= 0:
        raise InvalidDistributionError("no samples")
    p = c / n
    logp = np.log(p)
    h = float(-(p * logp).sum())
    k = len(c)
    var_delta = max(float((p * logp ** 2).sum()) - h * h, 0.0) / n
    var_chi = 2.0 * (k - 1) / (4.0 * n * n)
    return h + (k - 1) / (2.0 * n), math.sqrt(var_delta + var_chi)


@dataclass(frozen=True)
class Partition:
    """Finite partition given by distinct cell labels and their masses."""

    labels: tuple
    masses: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if not self.labels:
            raise InvalidDistributionError("a partition needs at least one cell")
        if len(self.labels) != len(self.masses):
            raise InvalidDistributionError("one mass per label")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidDistributionError("labels must be pairwise distinct")
        if any(not 0.0 <= m <= 1.0 for m in self.masses):
            raise InvalidDistributionError("cell masses must lie in [0, 1]")
        if abs(math.fsum(self.masses) - 1.0) > PARTITION_SUM_TOL:
            raise InvalidDistributionError(f"cell masses sum to {math.fsum(self.masses)!r}")

    @classmethod
    def from_masses(cls, masses: Sequence[float], name: str = "") -> "Partition":
        """Cells labelled ``0, 1, ...``."""
        return cls(tuple(range(len(masses))), tuple(masses), name)

    @property
    def n_cells(self) -> int:
        return len(self.labels)

    @property
    def id(self) -> str:
        return self.name or f"partition{list(self.masses)}"

    def entropy(self) -> float:
        return entropy(self.masses, tol=PARTITION_SUM_TOL)

    def is_nontrivial(self) -> bool:
        return sum(m > 0 for m in self.masses) >= 2


@dataclass
class LabelDistribution:
    """Law of the label tuple ``(xi(T^p x))_{p in iterates}``.

    ``counts`` and ``n_samples`` are set for empirical distributions.
    """

    arity: int
    support: dict[tuple, float]
    iterates: tuple[int, ...] = ()
    n_samples: int | None = None
    counts: dict[tuple, int] | None = field(default=None, repr=False)

    def __post_init__(self):
        total = math.fsum(self.support.values())
        if self.support and abs(total - 1.0) > DISTRIBUTION_SUM_TOL:
            raise InvalidDistributionError(f"label masses sum to {total!r}")
        if any(len(t) != self.arity for t in self.support):
            raise InvalidDistributionError("tuple length differs from arity")

    @property
    def exact(self) -> bool:
        return self.n_samples is None

    def entropy(self) -> float:
        """Plug-in entropy of the stored masses."""
        return entropy(np.fromiter(self.support.values(), float))

    def estimate(self) -> tuple[float, float]:
        """``(entropy, standard error)``; Miller-Madow when empirical."""
        if self.exact:
            return self.entropy(), 0.0
        return miller_madow(np.fromiter(self.counts.values(), float))

    def marginal(self, position: int) -> dict:
        out: dict = {}
        for t, m in self.support.items():
            out[t[position]] = out.get(t[position], 0.0) + m
        return out

    def tv_distance(self, other: "LabelDistribution") -> float:
        keys = self.support.keys() | other.support.keys()
        return 0.5 * math.fsum(
            abs(self.support.get(k, 0.0) - other.support.get(k, 0.0)) for k in keys
        )


def draw_batched(
    n: int,
    seed: int,
    fn: Callable[[int, np.random.Generator], np.ndarray],
    batch_size: int = BATCH_SIZE,
) -> Iterator[np.ndarray]:
    """Yield ``fn(m, rng_b)`` for consecutive batches covering ``n`` draws."""
    if n < 1:
        raise ValueError("n_samples must be >= 1")
    for b, start in enumerate(range(0, n, batch_size)):
        m = min(batch_size, n - start)
        yield fn(m, np.random.default_rng([int(seed), b]))


def _check_cap(n_cells: int, arity: int, cap: int) -> int:
    # exact integer power; float would overflow silently for large arity
    support = n_cells ** arity
    if support > cap:
        raise CombinatorialExplosionError(
            f"join support {n_cells}^{arity} = {support} exceeds cap {cap}; "
            "reduce |P_j| or the number of cells"
        )
    return support


def normalize_iterates(iterates: Iterable[int]) -> tuple[int, ...]:
    it = tuple(sorted({int(p) for p in iterates}))
    if not it:
        raise ValueError("iterate set must be nonempty")
    return it


def exact_join_distribution(system, partition, iterates: Iterable[int]) -> LabelDistribution:
    """Exact law of the join over ``iterates``.

    Raises:
        UnsupportedOperationError: the system has no exact join for this
            partition.
    """
    it = normalize_iterates(iterates)
    codes = system.exact_join(partition, it)
    labels = system.labels(partition)
    support = {tuple(labels[c] for c in t): float(m) for t, m in codes.items() if m > 0}
    return LabelDistribution(len(it), support, it)


def sampled_join_distribution(
    system,
    partition,
    iterates: Iterable[int],
    n_samples: int,
    seed: int,
    support_cap: int = DEFAULT_SUPPORT_CAP,
    batch_size: int = BATCH_SIZE,
) -> LabelDistribution:
    """Empirical law of the join from ``n_samples`` draws of the initial point.

    Raises:
        CombinatorialExplosionError: ``cells ** |iterates|`` exceeds
            ``support_cap``.
    """
    it = normalize_iterates(iterates)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    k = system.n_cells(partition)
    support = _check_cap(k, len(it), support_cap)
    weights = k ** np.arange(len(it) - 1, -1, -1, dtype=np.int64)
    counts = np.zeros(support, dtype=np.int64)

    def batch(m, rng):
        codes = system.sample_codes(partition, it, m, rng)
        return np.bincount(codes @ weights, minlength=support)

    for c in draw_batched(n_samples, seed, batch, batch_size):
        counts += c
    labels = system.labels(partition)
    nz = np.flatnonzero(counts)
    digits = np.stack([(nz // w) % k for w in weights], axis=1) if len(nz) else nz
    tup_counts = {tuple(labels[d] for d in row): int(counts[i]) for row, i in zip(digits, nz)}
    support_map = {t: c / n_samples for t, c in tup_counts.items()}
    return LabelDistribution(len(it), support_map, it, n_samples, tup_counts)


def join_entropy_bound(partition_entropy: float, arity: int) -> float:
    """Subadditivity bound ``H(join) <= |I| H(xi)``."""
    return arity * partition_entropy

