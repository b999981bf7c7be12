"""Measure-preserving systems with exact or sampled access to join labels.

Each system understands its own kind of partition and works with integer
cell codes ``0 .. n_cells - 1``; :mod:`pentropy.partition` turns codes back
into labels.

* :class:`IdentitySystem` -- any :class:`~pentropy.partition.Partition`.
* :class:`BernoulliShift` -- :class:`CoordinatePartition` (words on a window).
* :class:`RotationSystem` -- :class:`ArcPartition` (finite unions of arcs).
* :class:`GaussianSystem` -- :class:`~pentropy.gaussian.CylinderPartition`.
* :class:`RankOneSystem` -- :class:`LevelPartition` of a tower stage.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .errors import (
    CombinatorialExplosionError,
    NeedsDeeperStageError,
    UnsupportedOperationError,
)
from .gaussian import (
    CylinderPartition,
    GaussianSampler,
    cross_differences,
    sample_cylinder_codes,
    CERT_TOL,
)
from .partition import DEFAULT_SUPPORT_CAP, Partition, entropy
from .rank_one import TowerConstruction, XMark, _resolving_stage

ARC_DPS = 60


class SystemModel:
    """Interface shared by all systems."""

    kind = "abstract"
    exact_capable = False
    support_cap = DEFAULT_SUPPORT_CAP

    def labels(self, partition) -> tuple:
        raise NotImplementedError

    def n_cells(self, partition) -> int:
        return len(self.labels(partition))

    def marginal(self, partition) -> Partition:
        raise NotImplementedError

    def exact_join(self, partition, iterates: Sequence[int]) -> dict[tuple, float]:
        raise UnsupportedOperationError(f"{self.kind} system has no exact joins")

    def exact_join_entropy(self, partition, iterates: Sequence[int]) -> float:
        masses = np.fromiter(self.exact_join(partition, iterates).values(), float)
        return entropy(masses)

    def sample_codes(self, partition, iterates, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


def _product_join(marginal: Sequence[float], arity: int, cap: int) -> dict[tuple, float]:
    k = len(marginal)
    if k ** arity > cap:
        raise CombinatorialExplosionError(f"product join {k}^{arity} exceeds cap {cap}")
    out = {}
    for t in itertools.product(range(k), repeat=arity):
        m = math.prod(marginal[c] for c in t)
        if m > 0:
            out[t] = m
    return out


# -- identity ------------------------------------------------------------------


class IdentitySystem(SystemModel):
    """``T = id``: every join collapses onto the partition itself."""

    kind = "identity"
    exact_capable = True

    def labels(self, partition: Partition) -> tuple:
        return partition.labels

    def marginal(self, partition: Partition) -> Partition:
        return partition

    def exact_join(self, partition, iterates):
        return {(c,) * len(iterates): m for c, m in enumerate(partition.masses) if m > 0}

    def exact_join_entropy(self, partition, iterates):
        return partition.entropy()

    def sample_codes(self, partition, iterates, n, rng):
        p = np.asarray(partition.masses)
        c = rng.choice(len(p), size=n, p=p / p.sum())
        return np.repeat(c[:, None], len(iterates), axis=1)


# -- Bernoulli shift -------------------------------------------------------------


@dataclass(frozen=True)
class CoordinatePartition:
    """Cells indexed by the word ``(x_c)_{c in coords}``, optionally relabelled."""

    coords: tuple[int, ...] = (0,)
    relabel: tuple | None = None
    name: str = ""

    @property
    def id(self) -> str:
        return self.name or f"coords{list(self.coords)}"


def generator_partition() -> CoordinatePartition:
    return CoordinatePartition((0,), name="generator")


class BernoulliShift(SystemModel):
    """Two-sided shift with i.i.d. coordinates of law ``probs``."""

    kind = "bernoulli"
    exact_capable = True

    def __init__(self, probs: Sequence[float], support_cap: int = DEFAULT_SUPPORT_CAP):
        probs = tuple(float(p) for p in probs)
        Partition.from_masses(probs)  # validates
        self.probs = probs
        self.support_cap = support_cap

    def _words(self, partition):
        return list(itertools.product(range(len(self.probs)), repeat=len(partition.coords)))

    def _cells(self, partition) -> tuple[tuple, np.ndarray]:
        words = self._words(partition)
        raw = [w if partition.relabel is None else partition.relabel[i] for i, w in enumerate(words)]
        labels = tuple(dict.fromkeys(raw))
        index = {lab: i for i, lab in enumerate(labels)}
        return labels, np.array([index[r] for r in raw], dtype=np.int64)

    def labels(self, partition):
        return self._cells(partition)[0]

    def marginal(self, partition) -> Partition:
        labels, table = self._cells(partition)
        masses = np.zeros(len(labels))
        for i, w in enumerate(self._words(partition)):
            masses[table[i]] += math.prod(self.probs[s] for s in w)
        return Partition(labels, tuple(masses), partition.id)

    def _translates_disjoint(self, partition, iterates) -> bool:
        seen: set = set()
        for p in iterates:
            block = {c + p for c in partition.coords}
            if seen & block:
                return False
            seen |= block
        return True

    def exact_join(self, partition, iterates):
        if self._translates_disjoint(partition, iterates):
            return _product_join(self.marginal(partition).masses, len(iterates), self.support_cap)
        union = sorted({c + p for p in iterates for c in partition.coords})
        A = len(self.probs)
        if A ** len(union) > self.support_cap:
            raise CombinatorialExplosionError(
                f"{A}^{len(union)} words on overlapping translates exceed cap"
            )
        pos = {u: i for i, u in enumerate(union)}
        _, table = self._cells(partition)
        radix = A ** np.arange(len(partition.coords) - 1, -1, -1)
        out: dict = {}
        for word in itertools.product(range(A), repeat=len(union)):
            m = math.prod(self.probs[s] for s in word)
            if m == 0:
                continue
            t = tuple(
                int(table[int(np.dot([word[pos[c + p]] for c in partition.coords], radix))])
                for p in iterates
            )
            out[t] = out.get(t, 0.0) + m
        return out

    def exact_join_entropy(self, partition, iterates):
        if self._translates_disjoint(partition, iterates):
            # product measure: entropy is additive over independent translates
            return len(iterates) * self.marginal(partition).entropy()
        return super().exact_join_entropy(partition, iterates)

    def sample_codes(self, partition, iterates, n, rng):
        union = sorted({c + p for p in iterates for c in partition.coords})
        pos = {u: i for i, u in enumerate(union)}
        A = len(self.probs)
        x = rng.choice(A, size=(n, len(union)), p=np.asarray(self.probs))
        _, table = self._cells(partition)
        out = np.empty((n, len(iterates)), dtype=np.int64)
        for k, p in enumerate(iterates):
            idx = np.zeros(n, dtype=np.int64)
            for c in partition.coords:
                idx = idx * A + x[:, pos[c + p]]
            out[:, k] = table[idx]
        return out

    def describe(self):
        return {"kind": self.kind, "probs": list(self.probs)}


# -- circle rotation ------------------------------------------------------------


def golden_mean() -> mpmath.mpf:
    with mpmath.workdps(ARC_DPS):
        return (mpmath.sqrt(5) - 1) / 2


def parse_angle(angle):
    """``"golden"``, a rational string ``"p/q"``, a Fraction, or a float."""
    if isinstance(angle, mpmath.mpf):
        return angle
    if isinstance(angle, str):
        if angle in ("golden", "golden_mean"):
            return golden_mean()
        if angle == "sqrt2":
            with mpmath.workdps(ARC_DPS):
                return mpmath.sqrt(2) - 1
        return Fraction(angle)
    if isinstance(angle, (int, Fraction)):
        return Fraction(angle)
    return Fraction(float(angle))


@dataclass(frozen=True)
class ArcPartition:
    """Arcs ``[e_i, e_{i+1})`` (cyclically) of the circle ``[0, 1)``.

    ``arc_labels`` may repeat, so a cell can be a union of arcs.
    """

    endpoints: tuple[Fraction, ...]
    arc_labels: tuple | None = None
    name: str = ""

    def __post_init__(self):
        e = tuple(Fraction(x) for x in self.endpoints)
        if not e or list(e) != sorted(set(e)) or e[0] < 0 or e[-1] >= 1:
            raise ValueError("endpoints must be distinct, sorted, in [0, 1)")
        object.__setattr__(self, "endpoints", e)
        if self.arc_labels is not None and len(self.arc_labels) != len(e):
            raise ValueError("one label per arc")

    @property
    def id(self) -> str:
        return self.name or f"arcs{[str(x) for x in self.endpoints]}"

    def labels(self) -> tuple:
        raw = self.arc_labels if self.arc_labels is not None else tuple(range(len(self.endpoints)))
        return tuple(dict.fromkeys(raw))

    def arc_cells(self) -> list[int]:
        raw = self.arc_labels if self.arc_labels is not None else tuple(range(len(self.endpoints)))
        index = {lab: i for i, lab in enumerate(self.labels())}
        return [index[r] for r in raw]


def two_arc_partition(cut=Fraction(1, 2)) -> ArcPartition:
    return ArcPartition((Fraction(0), Fraction(cut)), ("a", "b"), name=f"arcs[0,{cut})")


def dyadic_arc_partition(level: int) -> ArcPartition:
    return ArcPartition(
        tuple(Fraction(i, 2 ** level) for i in range(2 ** level)), name=f"dyadic{level}"
    )


class RotationSystem(SystemModel):
    """Rotation ``x -> x + angle (mod 1)`` of the circle with Lebesgue measure.

    Rational angles use exact fractions; irrational ones are carried with
    ``ARC_DPS`` (60) significant digits, which fixes the order of all arc
    endpoints that occur here.
    """

    kind = "rotation"
    exact_capable = True

    def __init__(self, angle="golden"):
        self.angle = parse_angle(angle)
        self.exact_rational = isinstance(self.angle, Fraction)

    def labels(self, partition: ArcPartition):
        return partition.labels()

    def marginal(self, partition: ArcPartition) -> Partition:
        e = partition.endpoints
        cells = partition.arc_cells()
        masses = [Fraction(0)] * len(partition.labels())
        for i, c in enumerate(cells):
            nxt = e[i + 1] if i + 1 < len(e) else e[0] + 1
            masses[c] += nxt - e[i]
        return Partition(partition.labels(), tuple(float(m) for m in masses), partition.id)

    def _shift(self, p: int):
        if self.exact_rational:
            return (p * self.angle) % 1
        x = p * self.angle
        return x - mpmath.floor(x)

    def exact_join(self, partition: ArcPartition, iterates):
        """Sweep over ``x in [0, 1)``: the label of ``x + p*angle`` changes only
        where that point crosses an endpoint, i.e. at ``x = e - p*angle``."""
        with mpmath.workdps(ARC_DPS):
            return self._sweep(partition, iterates)

    def _sweep(self, partition, iterates):
        cells = partition.arc_cells()
        m = len(partition.endpoints)
        if self.exact_rational:
            E = list(partition.endpoints)
            one, zero = Fraction(1), Fraction(0)
            tie = 0
        else:
            E = [mpmath.mpf(x.numerator) / x.denominator for x in partition.endpoints]
            one, zero = mpmath.mpf(1), mpmath.mpf(0)
            tie = mpmath.mpf(10) ** (-(ARC_DPS - 10))
        cur, events = [], []
        for k, p in enumerate(iterates):
            s = self._shift(p)
            cur.append((bisect.bisect_right(E, s) - 1) % m)
            for i, e in enumerate(E):
                x = e - s
                if x < 0:
                    x += one
                events.append((x, k, i))
        events.sort(key=lambda t: t[0])
        out: dict = {}
        pos = zero
        idx = 0
        while idx < len(events):
            x = events[idx][0]
            if x - pos > tie:
                t = tuple(cells[a] for a in cur)
                out[t] = out.get(t, zero) + (x - pos)
                pos = x
            while idx < len(events) and events[idx][0] - x <= tie:
                _, k, i = events[idx]
                cur[k] = i
                idx += 1
        if one - pos > tie:
            t = tuple(cells[a] for a in cur)
            out[t] = out.get(t, zero) + (one - pos)
        return {t: float(v) for t, v in out.items()}

    def sample_codes(self, partition, iterates, n, rng):
        E = np.array([float(x) for x in partition.endpoints])
        cells = np.array(partition.arc_cells())
        with mpmath.workdps(ARC_DPS):
            shifts = [float(self._shift(p)) for p in iterates]
        x = rng.random(n)
        out = np.empty((n, len(iterates)), dtype=np.int64)
        for k, s in enumerate(shifts):
            y = np.mod(x + s, 1.0)
            out[:, k] = cells[(np.searchsorted(E, y, side="right") - 1) % len(E)]
        return out

    def describe(self):
        a = str(self.angle) if self.exact_rational else mpmath.nstr(self.angle, 30)
        return {"kind": self.kind, "angle": a}


# -- Gaussian automorphism ------------------------------------------------------------


class GaussianSystem(SystemModel):
    """Shift on the stationary Gaussian sequence of a spectral measure.

    Exact joins exist only when the translated cylinders are certified
    independent (every cross covariance is zero) and the cylinder masses
    are exact; the join is then the product of marginals.
    """

    kind = "gaussian"

    def __init__(self, sampler: GaussianSampler, support_cap: int = DEFAULT_SUPPORT_CAP):
        self.sampler = sampler
        self.support_cap = support_cap

    def labels(self, partition: CylinderPartition):
        return partition.labels()

    def n_cells(self, partition: CylinderPartition) -> int:
        return partition.n_cells

    def marginal(self, partition: CylinderPartition) -> Partition:
        masses, _exact = partition.cell_masses(self.sampler)
        return Partition(partition.labels(), tuple(masses), partition.id)

    def _certified(self, partition, iterates) -> bool:
        diffs = cross_differences(partition.coords, iterates)
        return not diffs or bool(np.all(np.abs(self.sampler.r(diffs)) <= CERT_TOL))

    def exact_join(self, partition, iterates):
        masses, exact = partition.cell_masses(self.sampler)
        if not (exact and self._certified(partition, iterates)):
            raise UnsupportedOperationError(
                "Gaussian joins are exact only for certified-independent translates"
            )
        return _product_join(list(masses), len(iterates), self.support_cap)

    def exact_join_entropy(self, partition, iterates):
        masses, exact = partition.cell_masses(self.sampler)
        if not (exact and self._certified(partition, iterates)):
            raise UnsupportedOperationError(
                "Gaussian joins are exact only for certified-independent translates"
            )
        return len(iterates) * entropy(masses)

    def sample_codes(self, partition, iterates, n, rng):
        return sample_cylinder_codes(self.sampler, partition, list(iterates), n, rng)

    def describe(self):
        return {"kind": self.kind, "sampler": self.sampler.to_dict()}


# -- rank-one tower -------------------------------------------------------------


@dataclass(frozen=True)
class LevelPartition:
    """Labels on the levels of one tower stage; mass outside it is ``outside``."""

    stage: int
    level_labels: tuple
    outside_label: str = "outside"
    name: str = ""

    @property
    def id(self) -> str:
        return self.name or f"levels@{self.stage}"

    def labels(self) -> tuple:
        return tuple(dict.fromkeys(self.level_labels)) + (self.outside_label,)


class RankOneSystem(SystemModel):
    """Rank-one map observed from normalized Lebesgue measure on one stage.

    The tower lives on an infinite-measure space, so this is a finite window:
    initial points are uniform on the stage-``stage`` tower and iterates
    that land in later spacers get the ``outside`` label.  The window is not
    invariant; the distributions are exact for that initial law.
    """

    kind = "rank_one"
    exact_capable = True

    def __init__(self, construction: TowerConstruction):
        self.construction = construction

    def labels(self, partition: LevelPartition):
        return partition.labels()

    def marginal(self, partition: LevelPartition) -> Partition:
        labels = partition.labels()
        index = {lab: i for i, lab in enumerate(labels)}
        masses = np.zeros(len(labels))
        for lab in partition.level_labels:
            masses[index[lab]] += 1.0
        masses /= len(partition.level_labels)
        return Partition(labels, tuple(masses), partition.id)

    def _table(self, partition, iterates):
        tc = self.construction
        if len(partition.level_labels) != tc.heights[partition.stage]:
            raise ValueError("one label per level of the stage")
        mark = XMark(partition.stage)
        K, _runs, resolved = _resolving_stage(tc, mark, list(iterates), None)
        if not resolved:
            raise NeedsDeeperStageError(f"iterates leave stage {K}; build deeper stages")
        anc = tc.ancestor_map(partition.stage, K)
        domain = np.flatnonzero(anc >= 0)
        labels = partition.labels()
        index = {lab: i for i, lab in enumerate(labels)}
        level_code = np.array([index[lab] for lab in partition.level_labels] + [len(labels) - 1])
        codes = np.stack([level_code[anc[domain + p]] for p in iterates], axis=1)
        return codes

    def exact_join(self, partition, iterates):
        codes = self._table(partition, iterates)
        tuples, counts = np.unique(codes, axis=0, return_counts=True)
        total = counts.sum()
        return {tuple(int(c) for c in t): n / total for t, n in zip(tuples, counts)}

    def sample_codes(self, partition, iterates, n, rng):
        codes = self._table(partition, iterates)
        return codes[rng.integers(0, len(codes), size=n)]

    def describe(self):
        return {"kind": self.kind, "construction": self.construction.to_dict()}
