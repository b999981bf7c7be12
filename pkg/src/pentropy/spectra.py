"""Spectral measures on the circle [0, 1) and their Fourier coefficients.

A :class:`SpectralMeasure` is a probability measure made of three parts:

* atoms ``(location, mass)``,
* a piecewise-constant density,
* a weighted, truncated Riesz product ``prod_k (1 + a_k cos(2 pi n_k x))``
  over lacunary frequencies ``n_{k+1} >= 3 n_k``.

The coefficients ``r(n) = int exp(2 pi i n x) dsigma(x)`` are real because
every admissible measure is symmetric under ``x -> 1 - x``.  They are the
covariance function of the stationary Gaussian sequence driven by the
measure, and ``r(n)**m`` are the coefficients of the m-fold convolution
power, which governs the degree-m Hermite chaos.

The diagnostics here work on finite coefficient data only:
``wiener_continuity_test`` estimates the sum of squared atom masses, and
``ac_diagnostic`` looks at l2-summability, which certifies a square
integrable density and nothing more.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import InvalidMeasureError

Real = Union[float, Fraction]

MASS_TOL = 1e-12
MAX_DENSITY_PIECES = 2 ** 12
DEFAULT_RIESZ_FACTORS = 12


def _as_exact(x) -> Real:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return float(x)


def _phase(n: np.ndarray, x: Real) -> np.ndarray:
    """Fractional part of ``n * x``; exact integer arithmetic for rational x."""
    n = np.asarray(n, dtype=np.int64)
    if isinstance(x, Fraction):
        num, den = x.numerator, x.denominator
        if abs(num) * max(int(np.abs(n).max(initial=0)), 1) < 2 ** 62:
            return np.mod(n * num, den) / den
        return np.array([float((int(k) * x) % 1) for k in n])
    return np.mod(n * float(x), 1.0)


def _fmt(x: Real):
    if isinstance(x, Fraction):
        return str(x)
    return x


@dataclass(frozen=True)
class RieszProduct:
    """Truncated Riesz product ``prod_k (1 + a_k cos(2 pi n_k x))``.

    The product has unit mass; ``weight`` is its share of the enclosing
    measure.
    """

    freqs: tuple[int, ...]
    coeffs: tuple[float, ...]
    weight: float = 1.0

    def __post_init__(self):
        if len(self.freqs) != len(self.coeffs):
            raise InvalidMeasureError("riesz freqs and coeffs differ in length")
        for a in self.coeffs:
            if not -1.0 <= a <= 1.0:
                raise InvalidMeasureError(f"riesz coefficient {a} outside [-1, 1]")
        for k, n in enumerate(self.freqs):
            if n < 1:
                raise InvalidMeasureError("riesz frequencies must be positive")
            if k and n < 3 * self.freqs[k - 1]:
                raise InvalidMeasureError(
                    f"riesz frequencies not lacunary: {n} < 3 * {self.freqs[k - 1]}"
                )
        if self.weight < 0:
            raise InvalidMeasureError("negative riesz weight")

    @cached_property
    def _expansion(self) -> tuple[np.ndarray, np.ndarray]:
        # signed-frequency sums, largest factor first so the pruning bound is tight
        freqs = np.zeros(1, dtype=np.int64)
        coefs = np.ones(1)
        for n, a in sorted(zip(self.freqs, self.coeffs), reverse=True):
            half = a / 2.0
            freqs = np.concatenate([freqs, freqs + n, freqs - n])
            coefs = np.concatenate([coefs, coefs * half, coefs * half])
            keep = coefs != 0.0
            freqs, coefs = freqs[keep], coefs[keep]
        return freqs, coefs

    def coefficients(self, n_max: int) -> np.ndarray:
        """Unweighted coefficients ``c(0..n_max)`` of the product."""
        freqs, coefs = self._expansion
        out = np.zeros(n_max + 1)
        sel = (freqs >= 0) & (freqs <= n_max)
        np.add.at(out, freqs[sel], coefs[sel])
        return out

    def coefficient(self, m: int) -> float:
        """Single coefficient by pruned descent through the factors."""
        m = abs(int(m))
        order = sorted(zip(self.freqs, self.coeffs), reverse=True)
        tails = [sum(n for n, _ in order[k + 1:]) for k in range(len(order))]

        def descend(rem: int, k: int) -> float:
            if k == len(order):
                return 1.0 if rem == 0 else 0.0
            n, a = order[k]
            total = 0.0
            for eps in (-1, 0, 1):
                nxt = rem - eps * n
                if abs(nxt) <= tails[k]:
                    total += (a / 2.0 if eps else 1.0) * descend(nxt, k + 1)
            return total

        return descend(m, 0)

    def density(self, x: np.ndarray) -> np.ndarray:
        out = np.ones_like(np.asarray(x, dtype=float))
        for n, a in zip(self.freqs, self.coeffs):
            out = out * (1.0 + a * np.cos(2 * np.pi * n * x))
        return out


@dataclass(frozen=True)
class SpectralMeasure:
    """Symmetric probability measure on the circle.

    Attributes:
        atoms: ``(location, mass)`` pairs with locations in [0, 1).
        density_breaks: ``0 = b_0 < ... < b_k = 1``; empty for no density.
        density_values: nonnegative constant value on each ``[b_i, b_{i+1})``.
        riesz: optional weighted Riesz-product component.
        label: free-form name used in reports.
    """

    atoms: tuple[tuple[Real, float], ...] = ()
    density_breaks: tuple[Real, ...] = ()
    density_values: tuple[float, ...] = ()
    riesz: RieszProduct | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(
            self, "atoms", tuple((_as_exact(x), float(m)) for x, m in self.atoms)
        )
        object.__setattr__(
            self, "density_breaks", tuple(_as_exact(b) for b in self.density_breaks)
        )
        object.__setattr__(
            self, "density_values", tuple(float(v) for v in self.density_values)
        )
        self._validate()

    def _validate(self):
        for x, m in self.atoms:
            if not 0 <= x < 1:
                raise InvalidMeasureError(f"atom location {x} outside [0, 1)")
            if m < 0:
                raise InvalidMeasureError(f"negative atom mass {m}")
        b, v = self.density_breaks, self.density_values
        if b or v:
            if len(b) != len(v) + 1:
                raise InvalidMeasureError("density needs len(breaks) == len(values) + 1")
            if len(v) > MAX_DENSITY_PIECES:
                raise InvalidMeasureError(f"more than {MAX_DENSITY_PIECES} density pieces")
            if b[0] != 0 or b[-1] != 1 or any(b[i] >= b[i + 1] for i in range(len(v))):
                raise InvalidMeasureError("density breaks must increase from 0 to 1")
            if any(val < 0 for val in v):
                raise InvalidMeasureError("density must be nonnegative")
        if abs(self.total_mass - 1.0) > MASS_TOL:
            raise InvalidMeasureError(f"total mass {self.total_mass!r} != 1")
        if not self._is_symmetric():
            raise InvalidMeasureError("measure is not symmetric under x -> 1 - x")

    def _is_symmetric(self) -> bool:
        def reflect(x):
            return (1 - x) % 1 if isinstance(x, Fraction) else (1.0 - x) % 1.0

        pool = list(self.atoms)
        for x, m in self.atoms:
            rx = reflect(x)
            for i, (y, w) in enumerate(pool):
                if abs(float(y) - float(rx)) <= 1e-12 and abs(w - m) <= 1e-12:
                    pool.pop(i)
                    break
            else:
                return False
        b, v = self.density_breaks, self.density_values
        if v:
            rb = [float(1 - t) for t in reversed(b)]
            if not np.allclose(rb, [float(t) for t in b], atol=1e-12):
                return False
            if not np.allclose(v, v[::-1], atol=1e-12):
                return False
        return True

    @property
    def atom_mass(self) -> float:
        return float(sum(m for _, m in self.atoms))

    @property
    def density_mass(self) -> float:
        b = self.density_breaks
        return float(
            sum(val * float(b[i + 1] - b[i]) for i, val in enumerate(self.density_values))
        )

    @property
    def total_mass(self) -> float:
        w = self.riesz.weight if self.riesz is not None else 0.0
        return self.atom_mass + self.density_mass + w

    @property
    def atom_mass_squared(self) -> float:
        """Sum of squared atom masses; the Wiener limit of the coefficient means."""
        merged: dict[float, float] = {}
        for x, m in self.atoms:
            merged[float(x)] = merged.get(float(x), 0.0) + m
        return float(sum(m * m for m in merged.values()))

    def fourier(self, n_max: int) -> np.ndarray:
        return fourier(self, n_max)

    def coefficient(self, n: int) -> float:
        n = abs(int(n))
        return float(fourier_at(self, np.array([n]))[0])

    def to_dict(self) -> dict:
        b = self.density_breaks
        return {
            "label": self.label,
            "atoms": [[_fmt(x), m] for x, m in self.atoms],
            "density_pieces": [
                [_fmt(b[i]), _fmt(b[i + 1]), val] for i, val in enumerate(self.density_values)
            ],
            "riesz": None
            if self.riesz is None
            else {"freqs": list(self.riesz.freqs), "coeffs": list(self.riesz.coeffs)},
            "weights": {"riesz": 0.0 if self.riesz is None else self.riesz.weight},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralMeasure":
        pieces = d.get("density_pieces") or []
        breaks: list = []
        values: list = []
        for a, b, val in pieces:
            if not breaks:
                breaks.append(_as_exact(a))
            elif _as_exact(a) != breaks[-1]:
                raise InvalidMeasureError("density pieces must be contiguous")
            breaks.append(_as_exact(b))
            values.append(val)
        riesz = None
        if d.get("riesz"):
            w = (d.get("weights") or {}).get("riesz", 1.0)
            riesz = RieszProduct(
                tuple(int(n) for n in d["riesz"]["freqs"]),
                tuple(float(a) for a in d["riesz"]["coeffs"]),
                float(w),
            )
        return cls(
            atoms=tuple((x, m) for x, m in d.get("atoms", [])),
            density_breaks=tuple(breaks),
            density_values=tuple(values),
            riesz=riesz,
            label=d.get("label", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "SpectralMeasure":
        return cls.from_dict(json.loads(text))


def fourier_at(sigma: SpectralMeasure, n: np.ndarray) -> np.ndarray:
    """Coefficients ``r(n)`` at arbitrary (nonnegative) integer frequencies."""
    n = np.abs(np.asarray(n, dtype=np.int64))
    out = np.zeros(n.shape)
    for x, m in sigma.atoms:
        out += m * np.cos(2 * np.pi * _phase(n, x))
    if sigma.density_values:
        b = sigma.density_breaks
        nz = n != 0
        acc = np.zeros(n.shape)
        for i, val in enumerate(sigma.density_values):
            if val == 0.0:
                continue
            acc += val * (
                np.sin(2 * np.pi * _phase(n, b[i + 1])) - np.sin(2 * np.pi * _phase(n, b[i]))
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            out += np.where(nz, acc / (2 * np.pi * np.where(nz, n, 1)), sigma.density_mass)
    if sigma.riesz is not None and sigma.riesz.weight:
        top = int(n.max(initial=0))
        table = sigma.riesz.coefficients(top)
        out += sigma.riesz.weight * table[n]
    return out


def fourier(sigma: SpectralMeasure, n_max: int) -> np.ndarray:
    """Coefficient array ``r(0), ..., r(n_max)``."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    return fourier_at(sigma, np.arange(n_max + 1))


def convolution_power_coeffs(sigma, m: int, n_max: int | None = None) -> np.ndarray:
    """Coefficients of the m-fold convolution power: ``r(n) ** m``.

    ``sigma`` may be a :class:`SpectralMeasure` (then ``n_max`` is required)
    or an already computed coefficient array.
    """
    if m < 1:
        raise ValueError("convolution power must be >= 1")
    if isinstance(sigma, SpectralMeasure):
        if n_max is None:
            raise ValueError("n_max is required for a SpectralMeasure")
        coeffs = fourier(sigma, n_max)
    else:
        coeffs = np.asarray(sigma, dtype=float)
        if n_max is not None:
            coeffs = coeffs[: n_max + 1]
    return coeffs ** m


def convolve_atoms(a, b) -> tuple[tuple[Real, float], ...]:
    """Explicit convolution of two atomic measures (locations added mod 1)."""
    merged: dict = {}
    for x, m in a:
        for y, w in b:
            z = (_as_exact(x) + _as_exact(y)) % 1
            merged[z] = merged.get(z, 0.0) + m * w
    return tuple(sorted(merged.items(), key=lambda t: float(t[0])))


@dataclass
class WienerReport:
    mean_square: float
    atom_mass_sq_estimate: float
    trend: list[tuple[int, float]] = field(default_factory=list)


def wiener_continuity_test(coeffs, N: int) -> WienerReport:
    """Cesaro mean ``(1/N) sum_{n=1..N} |r(n)|^2`` with its dyadic trend.

    By Wiener's theorem the mean tends to the sum of squared atom masses,
    so it separates atomic from continuous spectral parts.
    """
    r = np.asarray(coeffs, dtype=float)
    if N < 1 or len(r) < N + 1:
        raise ValueError(f"need coefficients r(0..{N})")
    cums = np.cumsum(r[1 : N + 1] ** 2)
    trend = []
    k = 1
    while k <= N:
        trend.append((k, float(cums[k - 1] / k)))
        k *= 2
    ms = float(cums[N - 1] / N)
    return WienerReport(mean_square=ms, atom_mass_sq_estimate=ms, trend=trend)


CERTIFIED_AC = "certified a.c. (L2 density)"
NOT_L2 = "not L2; singularity NOT certified"
INCONCLUSIVE = "inconclusive"


@dataclass
class ACReport:
    power: int
    l2_partial_sums: list[tuple[int, float]]
    increment_ratios: list[float]
    verdict: str
    interpretation: str


def ac_diagnostic(
    coeffs,
    m: int,
    N: int,
    converge_ratio: float = 0.75,
    diverge_ratio: float = 0.95,
    window: int = 3,
) -> ACReport:
    """l2 test for the m-fold convolution power.

    Partial sums ``S(N) = sum_{n=1..N} |r(n)^m|^2`` are sampled at dyadic N.
    The verdict uses the median ratio of the last ``window`` successive
    dyadic increments: below ``converge_ratio`` the sums flatten
    (square-integrable density), at or above ``diverge_ratio`` they keep
    growing (no square-integrable density, which does not imply
    singularity).
    """
    r = np.asarray(coeffs, dtype=float)
    if N < 1 or len(r) < N + 1:
        raise ValueError(f"need coefficients r(0..{N})")
    cums = np.cumsum(np.abs(r[1 : N + 1] ** m) ** 2)
    sums = []
    k = 1
    while k <= N:
        sums.append((k, float(cums[k - 1])))
        k *= 2
    incs = [sums[i][1] - sums[i - 1][1] for i in range(1, len(sums))]
    ratios = []
    for i in range(1, len(incs)):
        if incs[i - 1] > 0:
            ratios.append(incs[i] / incs[i - 1])
        elif incs[i] == 0:
            ratios.append(0.0)
        else:
            ratios.append(math.inf)
    tail = ratios[-window:]
    if incs and all(d == 0 for d in incs[-window:]):
        verdict = "converging"
    elif len(tail) < window:
        verdict = "inconclusive"
    else:
        med = float(np.median(tail))
        if med < converge_ratio:
            verdict = "converging"
        elif med >= diverge_ratio:
            verdict = "diverging"
        else:
            verdict = "inconclusive"
    interp = {"converging": CERTIFIED_AC, "diverging": NOT_L2}.get(verdict, INCONCLUSIVE)
    return ACReport(m, sums, ratios, verdict, interp)


def power_decay_coeffs(exponent: float, n_max: int) -> np.ndarray:
    """Synthetic envelope ``r(0) = 1``, ``r(n) = n ** -exponent``.

    Convex and decreasing to zero, so positive definite (Polya); it is a
    model coefficient sequence, not a measure built from the parts above.
    """
    n = np.arange(n_max + 1, dtype=float)
    out = np.ones(n_max + 1)
    out[1:] = n[1:] ** -exponent
    return out


# -- constructors -----------------------------------------------------------


def lebesgue() -> SpectralMeasure:
    return SpectralMeasure(density_breaks=(0, 1), density_values=(1.0,), label="lebesgue")


def dirac(location: Real = 0) -> SpectralMeasure:
    x = _as_exact(location)
    if x == 0 or x == Fraction(1, 2):
        return SpectralMeasure(atoms=((x, 1.0),), label=f"dirac({_fmt(x)})")
    return atom_pair(x)


def atom_pair(theta: Real) -> SpectralMeasure:
    """``(delta_theta + delta_{-theta}) / 2``."""
    t = _as_exact(theta) % 1
    u = (1 - t) % 1
    if t == u:
        return SpectralMeasure(atoms=((t, 1.0),), label=f"atom_pair({_fmt(t)})")
    return SpectralMeasure(atoms=((t, 0.5), (u, 0.5)), label=f"atom_pair({_fmt(t)})")


def riesz_product(
    freqs: Sequence[int],
    coeffs: Sequence[float] | float = 1.0,
    max_factors: int = DEFAULT_RIESZ_FACTORS,
) -> SpectralMeasure:
    freqs = tuple(int(n) for n in freqs)[:max_factors]
    if isinstance(coeffs, (int, float)):
        coeffs = [float(coeffs)] * len(freqs)
    coeffs = tuple(float(a) for a in coeffs)[: len(freqs)]
    return SpectralMeasure(
        riesz=RieszProduct(freqs, coeffs, 1.0), label=f"riesz({list(freqs)})"
    )


def mixture(*parts: tuple[float, SpectralMeasure], label: str = "") -> SpectralMeasure:
    """Convex combination ``sum_i w_i sigma_i``; at most one Riesz component."""
    atoms: list = []
    riesz = None
    cuts: set = set()
    for w, s in parts:
        atoms.extend((x, w * m) for x, m in s.atoms)
        cuts.update(s.density_breaks)
        if s.riesz is not None:
            if riesz is not None:
                raise InvalidMeasureError("mixture supports a single Riesz component")
            riesz = RieszProduct(s.riesz.freqs, s.riesz.coeffs, w * s.riesz.weight)
    breaks = sorted(cuts, key=float)
    values = []
    for i in range(len(breaks) - 1):
        mid = (breaks[i] + breaks[i + 1]) / 2
        val = 0.0
        for w, s in parts:
            b = s.density_breaks
            for k in range(len(s.density_values)):
                if b[k] <= mid < b[k + 1]:
                    val += w * s.density_values[k]
        values.append(val)
    return SpectralMeasure(
        atoms=tuple(atoms),
        density_breaks=tuple(breaks),
        density_values=tuple(values),
        riesz=riesz,
        label=label or "+".join(s.label for _, s in parts),
    )


def named_measure(name: str) -> SpectralMeasure:
    """Model measures shipped for demos and the CLI.

    These are stand-ins: ``riesz_decay`` is a Riesz product whose
    coefficients are square-summable only after squaring, the finite-data
    analogue of a singular measure with absolutely continuous square.
    """
    if name == "lebesgue":
        return lebesgue()
    if name == "dirac":
        return dirac(0)
    if name == "atom_pair_quarter":
        return atom_pair(Fraction(1, 4))
    if name == "half_atom_half_uniform":
        return mixture((0.5, dirac(0)), (0.5, lebesgue()), label=name)
    if name == "riesz_demo":
        m = riesz_product([3 ** k for k in range(DEFAULT_RIESZ_FACTORS)], 1.0)
        return SpectralMeasure(riesz=m.riesz, label=name)
    if name == "riesz_decay":
        freqs = [3 ** k for k in range(DEFAULT_RIESZ_FACTORS)]
        coeffs = [(k + 1) ** (-1 / 3) for k in range(DEFAULT_RIESZ_FACTORS)]
        m = riesz_product(freqs, coeffs)
        return SpectralMeasure(riesz=m.riesz, label=name)
    if name == "riesz_short":
        # r(n) != 0 only for |n| <= 13
        return SpectralMeasure(riesz=RieszProduct((1, 3, 9), (1.0, 1.0, 1.0), 1.0), label=name)
    if name == "ma1":
        return SpectralMeasure(riesz=RieszProduct((1,), (1.0,), 1.0), label=name)
    if name == "even_zero_density":
        # f(x + 1/2) = 2 - f(x): r(n) = 0 for every even n != 0
        return SpectralMeasure(
            density_breaks=(0, Fraction(1, 4), Fraction(3, 4), 1),
            density_values=(1.5, 0.5, 1.5),
            label=name,
        )
    raise KeyError(f"unknown measure {name!r}")


NAMED_MEASURES = (
    "lebesgue",
    "dirac",
    "atom_pair_quarter",
    "half_atom_half_uniform",
    "riesz_demo",
    "riesz_decay",
    "riesz_short",
    "ma1",
    "even_zero_density",
)
