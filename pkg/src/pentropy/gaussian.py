"""Stationary Gaussian sequences driven by a spectral measure.

The Gaussian automorphism over an orthogonal operator with spectral
measure ``sigma`` is realized through its coordinate process: a centered
stationary Gaussian sequence with covariance ``r(a - b)``.  Only finite
index sets are ever sampled, by dense factorization of the Gram matrix.

Cylinder partitions cut the projection onto a few coordinates with
axis-aligned thresholds.  When every cross covariance between translated
coordinate sets vanishes, the translated cylinders are independent (for a
Gaussian vector, uncorrelated blocks are independent), and
``orthogonality_driven_partition`` says so with a certificate.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import hermite_e
from scipy import special, stats

from .errors import IllConditionedCovarianceError, InvalidMeasureError
from .spectra import SpectralMeasure, fourier_at, named_measure

CLIP_TOL = 1e-8
CERT_TOL = 1e-12
DEFAULT_MAX_DIM = 64
DEFAULT_HORIZON = 2 ** 20


def covariance(sigma: SpectralMeasure, n: int) -> float:
    """``r(n)``: real Fourier coefficient of the (normalized) spectral measure."""
    if not isinstance(sigma, SpectralMeasure):
        raise InvalidMeasureError("covariance needs a SpectralMeasure")
    if abs(sigma.total_mass - 1.0) > 1e-12:
        raise InvalidMeasureError("spectral measure is not normalized")
    return float(fourier_at(sigma, np.array([abs(int(n))]))[0])


class GaussianSampler:
    """Exact finite-dimensional sampler for the stationary Gaussian sequence.

    Args:
        sigma: spectral measure (mass 1, so every marginal is standard normal).
        horizon: largest index difference that may be requested.
        max_dim: largest index set factorized at once.
        clip_tol: eigenvalues in ``[-clip_tol, 0)`` are clipped to zero;
            anything more negative raises.
        seed: default seed recorded in the JSON description.
    """

    def __init__(
        self,
        sigma: SpectralMeasure,
        horizon: int = DEFAULT_HORIZON,
        max_dim: int = DEFAULT_MAX_DIM,
        clip_tol: float = CLIP_TOL,
        seed: int = 0,
        sigma_ref: str | None = None,
    ):
        if abs(sigma.total_mass - 1.0) > 1e-12:
            raise InvalidMeasureError("spectral measure is not normalized")
        self.sigma = sigma
        self.horizon = int(horizon)
        self.max_dim = int(max_dim)
        self.clip_tol = float(clip_tol)
        self.seed = int(seed)
        self.sigma_ref = sigma_ref
        self._r: dict[int, float] = {}
        self._factors: dict[tuple[int, ...], np.ndarray] = {}

    def r(self, n) -> np.ndarray:
        n = np.abs(np.atleast_1d(np.asarray(n, dtype=np.int64)))
        missing = sorted({int(k) for k in n.ravel()} - self._r.keys())
        if missing:
            vals = fourier_at(self.sigma, np.array(missing))
            self._r.update(zip(missing, (float(v) for v in vals)))
        return np.vectorize(self._r.__getitem__, otypes=[float])(n)

    def gram(self, indices: Sequence[int]) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        diff = idx[:, None] - idx[None, :]
        if len(idx) and np.abs(diff).max() > self.horizon:
            raise ValueError(f"index span exceeds horizon {self.horizon}")
        return self.r(diff).reshape(diff.shape)

    def factor(self, indices: Sequence[int]) -> np.ndarray:
        """Square root ``A`` with ``A @ A.T`` equal to the clipped Gram matrix."""
        idx = [int(i) for i in indices]
        if len(idx) > self.max_dim:
            raise ValueError(f"{len(idx)} indices exceed max_dim={self.max_dim}")
        key = tuple(i - idx[0] for i in idx) if idx else ()
        if key not in self._factors:
            C = self.gram(idx)
            w, V = np.linalg.eigh(C)
            if len(w) and w.min() < -self.clip_tol:
                raise IllConditionedCovarianceError(
                    f"smallest eigenvalue {w.min():.3e} below -{self.clip_tol}"
                )
            self._factors[key] = V * np.sqrt(np.clip(w, 0.0, None))
        return self._factors[key]

    def sample(self, indices: Sequence[int], n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` draws of the vector ``(X_i)_{i in indices}``, shape ``(n, len(indices))``."""
        A = self.factor(indices)
        z = rng.standard_normal((n, A.shape[1]))
        return z @ A.T

    def to_dict(self) -> dict:
        ref = self.sigma_ref if self.sigma_ref is not None else self.sigma.to_dict()
        return {"sigma_ref": ref, "horizon": self.horizon, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianSampler":
        ref = d["sigma_ref"]
        if isinstance(ref, str):
            sigma = named_measure(ref)
        else:
            sigma = SpectralMeasure.from_dict(ref)
            ref = None
        return cls(
            sigma,
            horizon=d.get("horizon", DEFAULT_HORIZON),
            seed=d.get("seed", 0),
            sigma_ref=ref,
        )


def white_noise_sampler(**kwargs) -> GaussianSampler:
    return GaussianSampler(named_measure("lebesgue"), sigma_ref="lebesgue", **kwargs)


def sample_trajectory(
    sampler: GaussianSampler,
    indices: Sequence[int],
    seed: int,
    n_draws: int | None = None,
) -> np.ndarray:
    """One draw (or ``n_draws`` draws) of the sequence at ``indices``."""
    rng = np.random.default_rng(seed)
    out = sampler.sample(indices, 1 if n_draws is None else n_draws, rng)
    return out[0] if n_draws is None else out


def trajectory_to_csv(indices: Sequence[int], values: Sequence[float]) -> str:
    buf = io.StringIO()
    buf.write("index,value\n")
    for i, v in zip(indices, values):
        buf.write(f"{int(i)},{float(v)!r}\n")
    return buf.getvalue()


@dataclass(frozen=True)
class CylinderPartition:
    """Partition of trajectories by thresholds on a few coordinates.

    Cell of a trajectory ``x``: the tuple of bin indices
    ``searchsorted(thresholds[k], x[coords[k]])``; this is the cylinder
    ``{x : pi(x) in A}`` for the box ``A``.  Cells are coded in mixed radix.
    """

    coords: tuple[int, ...]
    thresholds: tuple[tuple[float, ...], ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        object.__setattr__(
            self, "thresholds", tuple(tuple(float(t) for t in th) for th in self.thresholds)
        )
        if not self.coords:
            raise ValueError("cylinder needs at least one coordinate")
        if len(self.coords) != len(self.thresholds):
            raise ValueError("one threshold list per coordinate")
        if len(set(self.coords)) != len(self.coords):
            raise ValueError("coordinates must be distinct")
        for th in self.thresholds:
            if list(th) != sorted(set(th)) or not all(math.isfinite(t) for t in th):
                raise ValueError(f"thresholds must be finite and strictly increasing: {th}")

    @property
    def radix(self) -> tuple[int, ...]:
        return tuple(len(th) + 1 for th in self.thresholds)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.radix))

    @property
    def id(self) -> str:
        return self.name or f"cyl{list(self.coords)}:{[list(t) for t in self.thresholds]}"

    def codes(self, values: np.ndarray) -> np.ndarray:
        """Cell codes for an array of shape ``(n, len(coords))``."""
        code = np.zeros(values.shape[0], dtype=np.int64)
        for k, th in enumerate(self.thresholds):
            code = code * self.radix[k] + np.searchsorted(th, values[:, k], side="right")
        return code

    def cell_label(self, code: int) -> tuple[int, ...]:
        digits = []
        for base in reversed(self.radix):
            code, d = divmod(code, base)
            digits.append(d)
        return tuple(reversed(digits))

    def labels(self) -> tuple:
        return tuple(self.cell_label(c) for c in range(self.n_cells))

    def cell_masses(self, sampler: GaussianSampler) -> tuple[np.ndarray, bool]:
        """Gaussian mass of every cell and whether it is exact.

        Exact when the chosen coordinates are mutually uncorrelated (then the
        box masses factor into normal CDF differences); otherwise the
        multivariate normal CDF is used and the result is renormalized.
        """
        edges = [np.concatenate([[-np.inf], th, [np.inf]]) for th in self.thresholds]
        per_axis = [np.diff(special.ndtr(e)) for e in edges]
        C = sampler.gram(self.coords)
        if np.all(np.abs(C - np.diag(np.diag(C))) <= CERT_TOL):
            masses = per_axis[0]
            for p in per_axis[1:]:
                masses = np.multiply.outer(masses, p)
            return masses.ravel(), True
        mvn = stats.multivariate_normal(mean=np.zeros(len(self.coords)), cov=C, allow_singular=True)
        out = np.zeros(self.n_cells)
        for code in range(self.n_cells):
            digits = self.cell_label(code)
            lo = np.array([edges[k][d] for k, d in enumerate(digits)])
            hi = np.array([edges[k][d + 1] for k, d in enumerate(digits)])
            out[code] = max(float(mvn.cdf(hi, lower_limit=lo)), 0.0)
        return out / out.sum(), False


def sign_cylinder(coord: int = 0) -> CylinderPartition:
    return CylinderPartition((coord,), ((0.0,),), name=f"sign[{coord}]")


def threshold_cylinder(coords: Iterable[int] | int = 0, cells: int = 2) -> CylinderPartition:
    """Cylinder with ``cells`` equal-mass bins on each listed coordinate."""
    if isinstance(coords, int):
        coords = (coords,)
    coords = tuple(coords)
    if cells < 2:
        raise ValueError("need at least 2 cells per coordinate")
    th = tuple(float(special.ndtri(i / cells)) for i in range(1, cells))
    return CylinderPartition(coords, (th,) * len(coords), name=f"q{cells}{list(coords)}")


def translated_indices(cylinder: CylinderPartition, P_j: Iterable[int]) -> tuple[list[int], np.ndarray]:
    """Sorted union of translated coordinates and the column map per translate."""
    P = [int(p) for p in P_j]
    union = sorted({c + p for p in P for c in cylinder.coords})
    pos = {v: i for i, v in enumerate(union)}
    cols = np.array([[pos[c + p] for c in cylinder.coords] for p in P], dtype=np.int64)
    return union, cols


def sample_cylinder_codes(
    sampler: GaussianSampler,
    cylinder: CylinderPartition,
    P_j: Sequence[int],
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Cell codes of ``T^p`` cylinders, shape ``(n, len(P_j))``."""
    union, cols = translated_indices(cylinder, P_j)
    x = sampler.sample(union, n, rng)
    return np.stack([cylinder.codes(x[:, c]) for c in cols], axis=1)


@dataclass
class IndependenceResult:
    tv_distance: float
    tolerance: float
    independent: bool
    support_size: int
    n_samples: int


def independence_test(
    sampler: GaussianSampler,
    cylinder: CylinderPartition,
    P_j: Sequence[int],
    n_samples: int,
    seed: int,
    tolerance: float | None = None,
    support_cap: int = 10 ** 6,
) -> IndependenceResult:
    """Total variation between the joint law of the translated cylinders and
    the product of its (empirical) marginals.

    The default tolerance is ``5 * sqrt(support / n_samples)``.
    """
    from .partition import draw_batched

    P = [int(p) for p in P_j]
    k = cylinder.n_cells
    support = k ** len(P)
    if support > support_cap:
        from .errors import CombinatorialExplosionError

        raise CombinatorialExplosionError(
            f"{k}^{len(P)} = {support} tuples exceed cap {support_cap}"
        )
    weights = k ** np.arange(len(P) - 1, -1, -1, dtype=np.int64)
    counts = np.zeros(support, dtype=np.int64)

    def batch(m, rng):
        codes = sample_cylinder_codes(sampler, cylinder, P, m, rng)
        return np.bincount(codes @ weights, minlength=support)

    for c in draw_batched(n_samples, seed, batch):
        counts += c
    joint = (counts / n_samples).reshape((k,) * len(P))
    product = np.ones(())
    for axis in range(len(P)):
        other = tuple(a for a in range(len(P)) if a != axis)
        product = np.multiply.outer(product, joint.sum(axis=other))
    tv = 0.5 * float(np.abs(joint - product).sum())
    if len(P) == 1:
        tv = 0.0
    tol = 5.0 * math.sqrt(support / n_samples) if tolerance is None else tolerance
    return IndependenceResult(tv, tol, tv < tol, support, n_samples)


def hermite_chaos_covariance(m: int, rho: float) -> float:
    """Normalized covariance ``E[He_m(X) He_m(Y)] / m!`` for a standard
    Gaussian pair with correlation ``rho``; equals ``rho ** m``."""
    if m < 1:
        raise ValueError("degree must be >= 1")
    if abs(rho) > 1:
        raise ValueError("|rho| must be <= 1")
    return float(rho) ** m


def hermite_observable(values, degree: int) -> np.ndarray:
    """Normalized probabilists' Hermite polynomial ``He_m(x) / sqrt(m!)``."""
    c = np.zeros(degree + 1)
    c[degree] = 1.0
    return hermite_e.hermeval(np.asarray(values, dtype=float), c) / math.sqrt(math.factorial(degree))


def even_chaos_observable(traj: np.ndarray, lag: int = 1) -> np.ndarray:
    """Degree-2 chaos observables ``He_2(X_t)`` and ``X_t X_{t+lag}`` (rows)."""
    traj = np.atleast_2d(traj)
    sq = hermite_observable(traj, 2)
    prod = traj[:, :-lag] * traj[:, lag:] if traj.shape[1] > lag else np.empty((traj.shape[0], 0))
    return np.concatenate([sq, prod], axis=1)


@dataclass
class CertifiedCylinder:
    cylinder: CylinderPartition
    P_j: tuple[int, ...]
    certified: bool
    max_cross_covariance: float
    offending_differences: list[int] = field(default_factory=list)


def cross_differences(coords: Sequence[int], P_j: Sequence[int]) -> list[int]:
    """Index differences between distinct translates ``coords + p``, ``coords + q``."""
    P = [int(p) for p in P_j]
    diffs = {
        (a + p) - (b + q)
        for p, q in itertools.permutations(P, 2)
        for a in coords
        for b in coords
    }
    return sorted(d for d in diffs if d >= 0) if diffs else []


def orthogonality_driven_partition(
    sampler: GaussianSampler,
    design,
    P_j: Sequence[int],
    thresholds: Sequence[Sequence[float]] | None = None,
    max_coords: int | None = None,
) -> CertifiedCylinder:
    """Cylinder on the designed coordinates, certified when translates are
    exactly uncorrelated.

    ``design`` is an iterable of coordinate indices, or any object with an
    ``indices`` attribute (e.g. an index design exported from a rank-one
    tower).  The certificate is granted iff ``|r(d)| <= 1e-12`` for every
    difference ``d`` between distinct translates; the partition is returned
    either way.
    """
    coords = list(getattr(design, "indices", design))
    if max_coords is not None:
        coords = coords[:max_coords]
    if thresholds is None:
        thresholds = [(0.0,)] * len(coords)
    cyl = CylinderPartition(tuple(coords), tuple(tuple(t) for t in thresholds))
    diffs = cross_differences(coords, P_j)
    if diffs:
        vals = sampler.r(diffs)
        bad = [d for d, v in zip(diffs, vals) if abs(v) > CERT_TOL]
        worst = float(np.abs(vals).max())
    else:
        bad, worst = [], 0.0
    return CertifiedCylinder(cyl, tuple(int(p) for p in P_j), not bad, worst, bad)


def stationarity_test(
    sampler: GaussianSampler,
    indices: Sequence[int],
    shift: int,
    n_samples: int,
    seed: int,
) -> float:
    """Bonferroni-adjusted smallest KS p-value, ``(X_t)`` vs ``(X_{t+shift})``.

    Compared statistics: each coordinate and each pairwise product.  The
    two samples come from independent streams.
    """
    idx = [int(i) for i in indices]
    a = sampler.sample(idx, n_samples, np.random.default_rng([seed, 0]))
    b = sampler.sample([i + shift for i in idx], n_samples, np.random.default_rng([seed, 1]))
    pvals = [stats.ks_2samp(a[:, k], b[:, k]).pvalue for k in range(len(idx))]
    for k, l in itertools.combinations(range(len(idx)), 2):
        pvals.append(stats.ks_2samp(a[:, k] * a[:, l], b[:, k] * b[:, l]).pvalue)
    return float(min(1.0, min(pvals) * len(pvals)))
