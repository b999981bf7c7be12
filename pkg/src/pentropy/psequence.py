"""Progression sequences ``P_j = {j, 2j, ..., L(j) j}`` and the search for
sequences along which a deterministic system has vanishing entropy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence


def materialize(j: int, L: int) -> tuple[int, ...]:
    """``(j, 2j, ..., L j)``."""
    if int(j) != j or int(L) != L or j < 1 or L < 1:
        raise ValueError(f"need positive integers j, L; got j={j!r}, L={L!r}")
    return tuple(j * k for k in range(1, int(L) + 1))


@dataclass(frozen=True)
class ProgressionSequence:
    """Entries ``(j, L(j))`` with ``j`` strictly increasing and ``L`` nondecreasing."""

    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        ent = tuple((int(j), int(L)) for j, L in self.entries)
        for j, L in ent:
            if j < 1 or L < 1:
                raise ValueError(f"entry ({j}, {L}) must be positive")
        for (j0, L0), (j1, L1) in zip(ent, ent[1:]):
            if j1 <= j0:
                raise ValueError("j must be strictly increasing")
            if L1 < L0:
                raise ValueError("L(j) must be nondecreasing")
        object.__setattr__(self, "entries", ent)

    @classmethod
    def from_rule(cls, js: Iterable[int], L: Callable[[int], int]) -> "ProgressionSequence":
        return cls(tuple((j, L(j)) for j in js))

    @classmethod
    def linear(cls, J: int) -> "ProgressionSequence":
        """``L(j) = j`` for ``j = 1..J``."""
        return cls.from_rule(range(1, J + 1), lambda j: j)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.entries)

    @property
    def max_j(self) -> int:
        return self.entries[-1][0] if self.entries else 0

    def progression(self, j: int) -> tuple[int, ...]:
        for jj, L in self.entries:
            if jj == j:
                return materialize(j, L)
        raise KeyError(j)

    def progressions(self) -> Iterator[tuple[int, int, tuple[int, ...]]]:
        for j, L in self.entries:
            yield j, L, materialize(j, L)

    def to_dict(self) -> dict:
        return {"entries": [[j, L] for j, L in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ProgressionSequence":
        return cls(tuple(tuple(e) for e in d["entries"]))

    @classmethod
    def from_json(cls, text: str) -> "ProgressionSequence":
        return cls.from_dict(json.loads(text))


@dataclass
class SearchResult:
    """Outcome of :func:`vanishing_sequence_search`.

    ``witnesses[j]`` maps partition id to ``(h_j, stderr)`` at the accepted
    ``L``.  ``failures`` lists ``(j, L tried last, best h_j per partition)``
    for candidates that never met their threshold.
    """

    sequence: ProgressionSequence
    witnesses: dict[int, dict[str, tuple[float, float]]] = field(default_factory=dict)
    failures: list[tuple[int, int, dict[str, float]]] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return len(self.sequence) > 0 and not self.failures

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "sequence": self.sequence.to_dict(),
            "witnesses": {
                str(j): {pid: list(v) for pid, v in w.items()} for j, w in self.witnesses.items()
            },
            "failures": [
                {"j": j, "L": L, "best_h_j": best} for j, L, best in self.failures
            ],
        }


def vanishing_sequence_search(
    system,
    partitions: Sequence,
    epsilon_schedule: Sequence[float] | float,
    j_candidates: Sequence[int],
    L_bound: int,
    mode: str = "auto",
    n_samples: int = 10 ** 5,
    seed: int = 0,
    L_start: int = 1,
) -> SearchResult:
    """Find ``L(j)`` with ``h_j(system, xi) < eps_j`` for every ``xi`` given.

    For each candidate ``j`` (increasing), ``L`` starts at the previous
    accepted value and doubles until every partition is below ``eps_j``; the
    last attempt is clipped to ``L_bound``.  Candidates that fail are
    recorded in ``failures`` with their best values and left out of the
    returned sequence, which is a structured negative result, not an error.
    The certificate is relative to the given partitions only.
    """
    from .engine import h_j  # late import: engine depends on this module

    js = sorted({int(j) for j in j_candidates})
    if not partitions:
        raise ValueError("partition family is empty")
    if isinstance(epsilon_schedule, (int, float)):
        eps = [float(epsilon_schedule)] * len(js)
    else:
        eps = [float(e) for e in epsilon_schedule]
        if len(eps) < len(js):
            raise ValueError("epsilon_schedule shorter than j_candidates")
    if any(e <= 0 for e in eps):
        raise ValueError("epsilons must be positive")

    entries, witnesses, failures = [], {}, []
    L = max(1, int(L_start))
    for idx, j in enumerate(js):
        best: dict[str, float] = {}
        trial = min(L, L_bound)
        while True:
            vals = {}
            for k, xi in enumerate(partitions):
                v, se = h_j(system, xi, materialize(j, trial), mode=mode,
                            n_samples=n_samples, seed=seed + 7919 * idx + k)
                vals[_pid(xi, k)] = (v, se)
            for pid, (v, _) in vals.items():
                best[pid] = min(best.get(pid, float("inf")), v)
            if all(v < eps[idx] for v, _ in vals.values()):
                entries.append((j, trial))
                witnesses[j] = vals
                L = trial
                break
            if trial >= L_bound:
                failures.append((j, trial, best))
                break
            trial = min(2 * trial, L_bound)
    return SearchResult(ProgressionSequence(tuple(entries)), witnesses, failures)


def _pid(xi, k: int) -> str:
    return getattr(xi, "id", None) or f"partition{k}"
