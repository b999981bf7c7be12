"""Rank-one cutting-and-stacking towers with exact rational levels.

Stage 0 is the single level ``[0, 1)``.  Going from stage n to n+1 the
tower of height ``h_n`` is cut into ``r_n`` equal columns, ``s_{n,i}``
spacer levels are put on top of column ``i`` and the columns are stacked
left to right, so ``h_{n+1} = r_n h_n + sum_i s_{n,i}``.  Fresh spacer
intervals are always taken to the right of everything used so far, which
makes the union of stages an infinite-measure space once spacers keep
coming.  ``T`` moves every non-top level one level up.

Everything is exact: endpoints are :class:`fractions.Fraction`, heights are
Python integers.  ``check_disjoint`` decides whether the translates
``T^p X_j``, ``p in P_j``, are pairwise disjoint by an interval sweep over
exact endpoints and returns exact overlap witnesses when they are not.
"""

from __future__ import annotations

import bisect
import heapq
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import NeedsDeeperStageError, StageLimitError, SynthesisFailure

DEFAULT_MEASURE_BOUND = 10 ** 6
MAX_LEVELS = 5 * 10 ** 6


@dataclass(frozen=True)
class Stage:
    index: int
    height: int
    width: Fraction
    cuts: int | None = None
    spacers: tuple[int, ...] | None = None

    @property
    def measure(self) -> Fraction:
        return self.height * self.width


@dataclass(frozen=True)
class OrbitPoint:
    stage: int
    level: int
    offset: Fraction

    def __post_init__(self):
        object.__setattr__(self, "offset", Fraction(self.offset))


@dataclass(frozen=True)
class XMark:
    """``X_j``: the stage-``stage`` levels listed in ``levels`` (all if None)."""

    stage: int
    levels: tuple[int, ...] | None = None


class TowerConstruction:
    def __init__(self, measure_bound=DEFAULT_MEASURE_BOUND):
        self.measure_bound = Fraction(measure_bound)
        self.heights: list[int] = [1]
        self.widths: list[Fraction] = [Fraction(1)]
        self.cuts: list[int] = []
        self.spacers: list[tuple[int, ...]] = []
        self._col_starts: list[tuple[int, ...]] = []
        self._spacer_origin: list[Fraction] = []
        self._cursor = Fraction(1)
        self.x_marks: dict[int, XMark] = {}

    @property
    def n_stages(self) -> int:
        return len(self.heights)

    @property
    def last(self) -> int:
        return len(self.heights) - 1

    def stage(self, n: int) -> Stage:
        cuts = self.cuts[n] if n < len(self.cuts) else None
        sp = self.spacers[n] if n < len(self.spacers) else None
        return Stage(n, self.heights[n], self.widths[n], cuts, sp)

    def total_measure(self, n: int) -> Fraction:
        return self.heights[n] * self.widths[n]

    def build_stage(self, r: int, spacers: Sequence[int]) -> Stage:
        """Cut the top stage into ``r`` columns and stack them with spacers."""
        spacers = tuple(int(s) for s in spacers)
        if r < 2:
            raise ValueError("cut count must be >= 2")
        if len(spacers) != r or any(s < 0 for s in spacers):
            raise ValueError("need r nonnegative spacer counts")
        h = self.heights[-1]
        w = self.widths[-1] / r
        height = r * h + sum(spacers)
        if height * w > self.measure_bound:
            raise StageLimitError(
                f"stage {self.n_stages} measure {height * w} exceeds bound {self.measure_bound}"
            )
        starts, pos = [], 0
        for s in spacers:
            starts.append(pos)
            pos += h + s
        self.cuts.append(r)
        self.spacers.append(spacers)
        self._col_starts.append(tuple(starts))
        self._spacer_origin.append(self._cursor)
        self._cursor += sum(spacers) * w
        self.heights.append(height)
        self.widths.append(w)
        return self.stage(self.last)

    def truncate(self, n_stages: int) -> None:
        """Drop stages ``n_stages`` and beyond (and marks that refer to them)."""
        del self.heights[n_stages:], self.widths[n_stages:]
        t = n_stages - 1
        if t < len(self.cuts):
            self._cursor = self._spacer_origin[t]
        del self.cuts[t:], self.spacers[t:], self._col_starts[t:], self._spacer_origin[t:]
        self.x_marks = {j: m for j, m in self.x_marks.items() if m.stage < n_stages}

    # -- level geometry ----------------------------------------------------

    def locate(self, n: int, k: int) -> tuple[str, int, int]:
        """Origin of level ``k`` of stage ``n >= 1``.

        Returns ``("col", i, parent_level)`` or ``("spacer", i, global_index)``.
        """
        if not 0 <= k < self.heights[n]:
            raise IndexError(f"level {k} outside stage {n}")
        t = n - 1
        starts = self._col_starts[t]
        i = bisect.bisect_right(starts, k) - 1
        within = k - starts[i]
        h = self.heights[t]
        if within < h:
            return ("col", i, within)
        return ("spacer", i, sum(self.spacers[t][:i]) + within - h)

    def level_interval(self, n: int, k: int) -> tuple[Fraction, Fraction]:
        cols = []
        m, lvl = n, k
        left = Fraction(0)
        while m > 0:
            kind, i, rest = self.locate(m, lvl)
            if kind == "col":
                cols.append(i)
                lvl = rest
                m -= 1
            else:
                left = self._spacer_origin[m - 1] + rest * self.widths[m]
                break
        for i in reversed(cols):
            m += 1
            left += i * self.widths[m]
        return left, left + self.widths[n]

    def ancestor_map(self, m: int, K: int) -> np.ndarray:
        """For each level of stage K, its stage-m level, or -1 for later spacers."""
        if K < m:
            raise ValueError("K must be >= m")
        if self.heights[K] > MAX_LEVELS:
            raise StageLimitError(f"stage {K} has {self.heights[K]} levels (> {MAX_LEVELS})")
        cur = np.arange(self.heights[m], dtype=np.int64)
        for t in range(m, K):
            parts = []
            for s in self.spacers[t]:
                parts.append(cur)
                parts.append(np.full(s, -1, dtype=np.int64))
            cur = np.concatenate(parts)
        return cur

    # -- orbits ------------------------------------------------------------

    def point(self, stage: int, level: int, offset) -> OrbitPoint:
        offset = Fraction(offset)
        if not 0 <= offset < self.widths[stage]:
            raise ValueError("offset outside [0, level width)")
        if not 0 <= level < self.heights[stage]:
            raise ValueError("level outside tower")
        return OrbitPoint(stage, level, offset)

    def position(self, p: OrbitPoint) -> Fraction:
        return self.level_interval(p.stage, p.level)[0] + p.offset

    def lift(self, n: int, level: int, offset: Fraction) -> tuple[int, Fraction]:
        if n + 1 > self.last:
            raise NeedsDeeperStageError(f"stage {n + 1} not built")
        w = self.widths[n + 1]
        i = offset // w
        return self._col_starts[n][i] + level, offset - i * w

    def descend(self, n: int, level: int, offset: Fraction) -> tuple[int, Fraction] | None:
        kind, i, rest = self.locate(n, level)
        if kind != "col":
            return None
        return rest, offset + i * self.widths[n]

    def apply_T(self, p: OrbitPoint, steps: int) -> OrbitPoint:
        """Exact image ``T^steps p``, reported at the lowest stage >= ``p.stage``."""
        n, lvl, off = p.stage, p.level, p.offset
        while not 0 <= lvl + steps < self.heights[n]:
            lvl, off = self.lift(n, lvl, off)
            n += 1
        lvl += steps
        while n > p.stage:
            down = self.descend(n, lvl, off)
            if down is None:
                break
            lvl, off = down
            n -= 1
        return OrbitPoint(n, lvl, off)

    def apply_T_interval(
        self, n: int, level: int, a: Fraction, b: Fraction, steps: int
    ) -> list[tuple[int, int, Fraction, Fraction]]:
        """Image of ``[a, b)`` inside a level; pieces ``(stage, level, a', b')``."""
        a, b = Fraction(a), Fraction(b)
        if 0 <= level + steps < self.heights[n]:
            return [(n, level + steps, a, b)]
        if n + 1 > self.last:
            raise NeedsDeeperStageError(f"stage {n + 1} not built")
        w = self.widths[n + 1]
        out = []
        i = a // w
        while i * w < b:
            lo, hi = max(a, i * w), min(b, (i + 1) * w)
            if lo < hi:
                lvl = self._col_starts[n][i] + level
                out.extend(self.apply_T_interval(n + 1, lvl, lo - i * w, hi - i * w, steps))
            i += 1
        return out

    # -- X_j designations ---------------------------------------------------

    def mark_x(self, j: int, stage: int, levels: Iterable[int] | None = None) -> XMark:
        mark = XMark(stage, None if levels is None else tuple(sorted(set(levels))))
        self.x_marks[j] = mark
        return mark

    def marks_nested(self) -> bool:
        """Whether ``X_j`` is contained in ``X_j'`` for all marked ``j < j'``."""
        marks = [m for _, m in sorted(self.x_marks.items())]
        for a, b in zip(marks, marks[1:]):
            K = max(a.stage, b.stage)
            if not np.isin(self.x_levels(a, K), self.x_levels(b, K)).all():
                return False
        return True

    def x_runs(self, mark: XMark, K: int) -> list[tuple[int, int]]:
        """Stage-K copies of ``X`` as sorted runs ``(first_level, length)``."""
        if K < mark.stage:
            raise ValueError("K must be >= the mark's stage")
        if mark.levels is None:
            runs = [(0, self.heights[mark.stage])]
        else:
            runs, lv = [], list(mark.levels)
            start = prev = lv[0]
            for v in lv[1:] + [None]:
                if v is not None and v == prev + 1:
                    prev = v
                    continue
                runs.append((start, prev - start + 1))
                if v is not None:
                    start = prev = v
        for t in range(mark.stage, K):
            runs = [(c + a, n) for c in self._col_starts[t] for a, n in runs]
        return runs

    def x_levels(self, mark: XMark, K: int) -> np.ndarray:
        """Stage-K levels making up ``X``."""
        runs = self.x_runs(mark, K)
        if sum(n for _, n in runs) > MAX_LEVELS:
            raise StageLimitError(f"X has more than {MAX_LEVELS} levels at stage {K}")
        return np.concatenate([np.arange(a, a + n, dtype=np.int64) for a, n in runs])

    def x_measure(self, mark: XMark) -> Fraction:
        count = self.heights[mark.stage] if mark.levels is None else len(mark.levels)
        return count * self.widths[mark.stage]

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "measure_bound": str(self.measure_bound),
            "stages": [{"r": r, "spacers": list(s)} for r, s in zip(self.cuts, self.spacers)],
            "X_marks": [
                {"j": j, "stage": m.stage, "levels": None if m.levels is None else list(m.levels)}
                for j, m in sorted(self.x_marks.items())
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TowerConstruction":
        tc = cls(Fraction(d.get("measure_bound", DEFAULT_MEASURE_BOUND)))
        for st in d.get("stages", []):
            tc.build_stage(st["r"], st["spacers"])
        for m in d.get("X_marks", []):
            tc.mark_x(m["j"], m["stage"], m.get("levels"))
        return tc

    @classmethod
    def from_json(cls, text: str) -> "TowerConstruction":
        return cls.from_dict(json.loads(text))


def build_stage(construction: TowerConstruction, n: int, r: int, spacers: Sequence[int]) -> Stage:
    """Build stage ``n`` (stage ``n - 1`` must be the last one built)."""
    if n != construction.n_stages:
        raise ValueError(f"next buildable stage is {construction.n_stages}, not {n}")
    return construction.build_stage(r, spacers)


def apply_T(construction: TowerConstruction, point: OrbitPoint, steps: int) -> OrbitPoint:
    return construction.apply_T(point, steps)


@dataclass
class DisjointnessVerdict:
    j: int
    P_j: tuple[int, ...]
    disjoint: bool
    stage: int
    resolved: bool
    n_levels: int
    witnesses: list[tuple[int, int, Fraction, Fraction]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "j": self.j,
            "P_j": list(self.P_j),
            "disjoint": self.disjoint,
            "stage": self.stage,
            "resolved": self.resolved,
            "n_levels": self.n_levels,
            "witnesses": [
                {"p": p, "q": q, "interval": [str(a), str(b)]} for p, q, a, b in self.witnesses
            ],
        }


def _resolving_stage(tc: TowerConstruction, mark: XMark, P: Sequence[int], stage: int | None):
    candidates = [stage] if stage is not None else range(mark.stage, tc.n_stages)
    for K in candidates:
        runs = tc.x_runs(mark, K)
        lo, hi = runs[0][0], runs[-1][0] + runs[-1][1] - 1
        if lo + P[0] >= 0 and hi + P[-1] < tc.heights[K]:
            return K, runs, True
    return K, runs, False


def _sweep(items, max_witnesses):
    """Overlaps between differently tagged half-open intervals ``(a, b, tag)``."""
    items = sorted(items)
    witnesses = []
    active: list = []  # heap keyed on right end
    for a, b, p in items:
        while active and active[0][0] <= a:
            heapq.heappop(active)
        for rb, _ra, q in active:
            if q != p and len(witnesses) < max_witnesses:
                witnesses.append((min(p, q), max(p, q), a, min(b, rb)))
        if len(witnesses) >= max_witnesses:
            break
        heapq.heappush(active, (b, a, p))
    return witnesses


RATIONAL_SWEEP_LIMIT = 200_000


def check_disjoint(
    construction: TowerConstruction,
    j: int,
    P_j: Iterable[int],
    x_mark: XMark | None = None,
    stage: int | None = None,
    max_witnesses: int = 8,
    method: str = "auto",
) -> DisjointnessVerdict:
    """Exact verdict on pairwise disjointness of ``T^p X_j``, ``p in P_j``.

    The images are taken at the first stage where all of them are resolved
    (or at ``stage``).  There ``T^p`` shifts levels by ``p``.  With
    ``method="rational"`` every image level is swept as an exact rational
    interval; with ``method="levels"`` the sweep runs over integer level
    ranges, which is equivalent because distinct levels of one stage are
    disjoint intervals, and each witness is the exact interval of the first
    shared level.  ``"auto"`` uses the rational sweep up to
    ``RATIONAL_SWEEP_LIMIT`` intervals.

    An overlap among resolved pieces is a valid witness even when resolution
    is incomplete; a clean but incomplete sweep raises.

    Raises:
        NeedsDeeperStageError: images leave the built stages and no overlap
            was found among the resolved parts.
    """
    mark = x_mark if x_mark is not None else construction.x_marks[j]
    P = sorted({int(p) for p in P_j})
    K, runs, resolved = _resolving_stage(construction, mark, P, stage)
    h = construction.heights[K]
    clipped = []
    for p in P:
        for a, n in runs:
            lo, hi = max(a + p, 0), min(a + n + p, h)
            if lo < hi:
                clipped.append((lo, hi, p))
    n_levels = sum(hi - lo for lo, hi, _ in clipped)
    if method == "auto":
        method = "rational" if n_levels <= RATIONAL_SWEEP_LIMIT else "levels"
    if method == "rational":
        items = []
        for lo, hi, p in clipped:
            for t in range(lo, hi):
                a, b = construction.level_interval(K, t)
                items.append((a, b, p))
        witnesses = _sweep(items, max_witnesses)
    elif method == "levels":
        witnesses = [
            (p, q, *construction.level_interval(K, lo))
            for p, q, lo, _hi in _sweep(clipped, max_witnesses)
        ]
    else:
        raise ValueError(f"unknown method {method!r}")
    if not witnesses and not resolved:
        raise NeedsDeeperStageError(
            f"T^p X_{j} not resolvable within stage {K}; build deeper stages"
        )
    return DisjointnessVerdict(j, tuple(P), not witnesses, K, resolved, n_levels, witnesses)


@dataclass
class IndexDesign:
    """Integer level indices of ``X_j`` at a stage where ``T^p`` acts as ``+p``."""

    j: int
    stage: int
    indices: tuple[int, ...]


def index_design(construction: TowerConstruction, j: int, P_j: Iterable[int]) -> IndexDesign:
    """Coordinates for Gaussian cylinders taken from the tower's level structure.

    At the resolving stage ``T^p`` shifts level ``l`` to ``l + p``, so the
    translated index sets are disjoint exactly when the sets ``T^p X_j`` are.
    """
    mark = construction.x_marks[j]
    P = sorted({int(p) for p in P_j})
    K, _runs, resolved = _resolving_stage(construction, mark, P, None)
    if not resolved:
        raise NeedsDeeperStageError(f"X_{j} images not resolved by stage {K}")
    return IndexDesign(j, K, tuple(int(v) for v in construction.x_levels(mark, K)))


@dataclass
class SidonSynthesis:
    construction: TowerConstruction
    verdicts: list[DisjointnessVerdict]
    escalations: list[tuple[int, int]]
    multipliers: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "parameters": self.construction.to_dict(),
            "verdicts": [v.to_dict() for v in self.verdicts],
            "escalations": [{"j": j, "stage": n} for j, n in self.escalations],
        }


def _initial_gap(entries: Sequence[tuple[int, int]], n: int) -> int:
    # M_n / h_n = L(n) n + 1, with the sequence entry nearest to n standing in for n
    j, L = entries[min(max(n, 1), len(entries)) - 1]
    return L * j + 1


def sidon_spacer_synthesis(
    sequence,
    depth: int,
    r: int = 2,
    measure_bound=DEFAULT_MEASURE_BOUND,
    max_escalations: int = 64,
) -> SidonSynthesis:
    """Spacers ``s_{n,i} = i M_n`` and ``X_j`` marks passing ``check_disjoint``.

    ``X_j`` is the whole stage-``n_j`` tower, ``n_j`` the deepest stage with
    ``h_n <= j``; translates by multiples of ``j`` then never meet inside one
    column copy, and the spacers keep copies in different columns apart.
    ``M_n`` starts at ``(L(n) n + 1) h_n`` and is doubled at stage ``n_j``
    whenever the exact checker finds an overlap for ``j``.

    Raises:
        SynthesisFailure: escalations exhausted or the measure bound hit;
            carries the first failing ``j``.
    """
    entries = [(int(j), int(L)) for j, L in list(sequence.entries)[:depth]]
    if not entries:
        raise ValueError("empty sequence")
    max_j = entries[-1][0]
    mult: dict[int, int] = {}
    escalations: list[tuple[int, int]] = []

    def next_stage(tc):
        n = tc.last
        M = _initial_gap(entries, n) * tc.heights[n] * mult.get(n, 1)
        tc.build_stage(r, [i * M for i in range(1, r + 1)])

    failing = None
    for _ in range(max_escalations + 1):
        tc = TowerConstruction(measure_bound)
        try:
            while tc.heights[-1] <= max_j:
                next_stage(tc)
            next_stage(tc)
        except StageLimitError as exc:
            raise SynthesisFailure(str(exc), failing or entries[0][0]) from exc
        for j, _L in entries:
            n_j = max(n for n in range(tc.n_stages) if tc.heights[n] <= j)
            tc.mark_x(j, n_j)
        verdicts = []
        failing = None
        for j, L in entries:
            P = [j * k for k in range(1, L + 1)]
            while True:
                try:
                    v = check_disjoint(tc, j, P)
                    break
                except NeedsDeeperStageError:
                    try:
                        next_stage(tc)
                    except StageLimitError as exc:
                        raise SynthesisFailure(str(exc), j) from exc
            verdicts.append(v)
            if not v.disjoint:
                failing = j
                n_j = tc.x_marks[j].stage
                mult[n_j] = mult.get(n_j, 1) * 2
                escalations.append((j, n_j))
                break
        if failing is None:
            return SidonSynthesis(tc, verdicts, escalations, dict(mult))
    raise SynthesisFailure(f"no verified construction after {max_escalations} escalations", failing)


def spacer_free_construction(stages: int, r: int = 2) -> TowerConstruction:
    """Control construction with no spacers (heights ``r^n``)."""
    tc = TowerConstruction()
    for _ in range(stages):
        tc.build_stage(r, [0] * r)
    return tc
