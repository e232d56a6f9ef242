"""Quantile grids, discretization and the TabularLIME perturbation sampler.

Conventions
-----------
* Bins are numbered ``1..p``. Row ``j`` of a grid holds the boundaries
  ``q_{j,0} = -inf < q_{j,1} < ... < q_{j,p} = +inf``.
* Bin ``k`` is the left-closed, right-open interval ``[q_{j,k-1}, q_{j,k})``;
  a value sitting exactly on a boundary goes to the upper bin.
* Sampled coordinates are kept strictly inside their bin, so re-discretizing
  a sample always returns the bin it was drawn from.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from . import _streams
from .errors import DegenerateGrid, NumericalError, UsageError
from .models import Dataset

__all__ = [
    "QuantileGrid",
    "SamplingConfig",
    "PerturbationSet",
    "theoretical_grid",
    "empirical_grid",
    "discretize",
    "sample_bins",
    "sample_truncated_gaussian",
    "truncated_gaussian",
    "perturb",
]

TINY_MASS = 1e-300
MAX_REJECTION_TRIES = 10_000


@dataclass(frozen=True)
class QuantileGrid:
    boundaries: np.ndarray
    source: str = "theoretical"

    def __post_init__(self):
        q = np.array(self.boundaries, dtype=float)
        if q.ndim != 2 or q.shape[1] < 2:
            raise UsageError(f"boundaries must be a d x (p+1) matrix, got shape {q.shape}")
        if not (np.all(q[:, 0] == -np.inf) and np.all(q[:, -1] == np.inf)):
            raise UsageError("outer boundaries must be -inf and +inf")
        inner = q[:, 1:-1]
        if not np.all(np.isfinite(inner)):
            raise UsageError("interior boundaries must be finite")
        if inner.shape[1] > 1 and not np.all(np.diff(inner, axis=1) > 0):
            raise DegenerateGrid("interior boundaries must be strictly increasing")
        if self.source not in ("theoretical", "empirical"):
            raise UsageError(f"unknown grid source {self.source!r}")
        q.setflags(write=False)
        object.__setattr__(self, "boundaries", q)

    @property
    def p(self) -> int:
        return self.boundaries.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.boundaries.shape[0]

    def bin_edges(self, j: int, k: int) -> tuple[float, float]:
        """``(q_{j,k-1}, q_{j,k})`` for feature ``j`` (0-based) and bin ``k`` (1-based)."""
        return float(self.boundaries[j, k - 1]), float(self.boundaries[j, k])


@dataclass(frozen=True)
class SamplingConfig:
    """Inputs of one TabularLIME run.

    ``xi`` is the instance to explain, ``(mu, sigma)`` the isotropic Gaussian
    used for sampling, ``nu`` the kernel bandwidth, ``p`` the number of bins
    and ``n`` the number of perturbations.
    """

    xi: np.ndarray
    mu: np.ndarray
    sigma: float
    nu: float
    p: int = 4
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float).reshape(-1)
        mu = np.array(self.mu, dtype=float).reshape(-1)
        if mu.shape == (1,) and xi.shape[0] > 1:
            mu = np.full_like(xi, mu[0])
        if xi.shape != mu.shape:
            raise UsageError(f"xi has dimension {xi.shape[0]} but mu has {mu.shape[0]}")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(mu))):
            raise UsageError("xi and mu must be finite")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise UsageError(f"sigma must be positive, got {self.sigma}")
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise UsageError(f"nu must be positive, got {self.nu}")
        if int(self.p) < 2:
            raise UsageError(f"need at least 2 bins, got p={self.p}")
        if int(self.n) < 1:
            raise UsageError(f"need at least one sample, got n={self.n}")
        xi.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "seed", _streams.check_seed(self.seed))

    @property
    def dim(self) -> int:
        return self.xi.shape[0]

    def replace(self, **changes) -> "SamplingConfig":
        fields = dict(xi=self.xi, mu=self.mu, sigma=self.sigma, nu=self.nu, p=self.p, n=self.n, seed=self.seed)
        fields.update(changes)
        return SamplingConfig(**fields)

    def to_dict(self) -> dict:
        return {
            "xi": self.xi.tolist(),
            "mu": self.mu.tolist(),
            "sigma": self.sigma,
            "nu": self.nu,
            "p": self.p,
            "n": self.n,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SamplingConfig":
        return cls(**{k: data[k] for k in ("xi", "mu", "sigma", "nu", "p", "n", "seed")})


@dataclass(frozen=True)
class PerturbationSet:
    """Output of :func:`perturb`: bins ``y``, samples ``x``, binary
    features ``z`` and weights ``pi``, one row per perturbation."""

    bins: np.ndarray
    samples: np.ndarray
    features: np.ndarray
    weights: np.ndarray
    xi_bins: np.ndarray

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def to_csv(self, path) -> None:
        d = self.samples.shape[1]
        header = (
            [f"y_{j + 1}" for j in range(d)]
            + [f"x_{j + 1}" for j in range(d)]
            + [f"z_{j + 1}" for j in range(d)]
            + ["pi"]
        )
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for y, x, z, w in zip(self.bins, self.samples, self.features, self.weights):
                writer.writerow(
                    [str(int(v)) for v in y]
                    + [format(v, ".17g") for v in x]
                    + [str(int(v)) for v in z]
                    + [format(w, ".17g")]
                )


def theoretical_grid(mu, sigma: float, p: int) -> QuantileGrid:
    """Gaussian quantiles ``q_{j,k} = mu_j + sigma * Phi^{-1}(k/p)``."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    p = int(p)
    if p < 1:
        raise UsageError(f"need at least one bin, got p={p}")
    if not sigma > 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    std_q = special.ndtri(np.arange(p + 1) / p)  # -inf ... +inf
    inner = mu[:, None] + sigma * std_q[None, 1:-1]
    d = mu.shape[0]
    q = np.hstack([np.full((d, 1), -np.inf), inner, np.full((d, 1), np.inf)])
    return QuantileGrid(q, "theoretical")


def empirical_grid(data, p: int) -> QuantileGrid:
    """Per-feature empirical ``k/p`` quantiles (linear interpolation)."""
    rows = np.asarray(data.rows if isinstance(data, Dataset) else data, dtype=float)
    if rows.ndim != 2:
        raise UsageError("empirical_grid expects an (m, d) table")
    p = int(p)
    if p < 2:
        raise UsageError(f"need at least 2 bins, got p={p}")
    m, d = rows.shape
    if m < p:
        raise UsageError(f"{m} rows cannot define {p} quantile bins")
    inner = np.quantile(rows, np.arange(1, p) / p, axis=0, method="linear").T
    collapsed = [j for j in range(d) if np.any(np.diff(inner[j]) <= 0)]
    if collapsed:
        raise DegenerateGrid(
            f"duplicate quantiles (collapsed bins) for feature(s) {[j + 1 for j in collapsed]}"
        )
    q = np.hstack([np.full((d, 1), -np.inf), inner, np.full((d, 1), np.inf)])
    return QuantileGrid(q, "empirical")


def discretize(x, grid: QuantileGrid) -> np.ndarray:
    """Bin indices in ``1..p`` of a point ``(d,)`` or of rows ``(n, d)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != grid.dim:
        raise UsageError(f"grid has dimension {grid.dim}, input has {x.shape[-1]}")
    if np.any(np.isnan(x)):
        raise UsageError("cannot discretize NaN")
    flat = x.reshape(-1, grid.dim)
    out = np.empty(flat.shape, dtype=np.int64)
    for j in range(grid.dim):
        out[:, j] = np.searchsorted(grid.boundaries[j, 1:-1], flat[:, j], side="right") + 1
    return out.reshape(x.shape)


def sample_bins(n: int, d: int, p: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(1, p + 1, size=(n, d))


def _rejection_tail(a: float, b: float, rng: np.random.Generator) -> float:
    """Standard normal conditioned on ``[a, b)`` with ``a > 0`` far in the tail."""
    for _ in range(MAX_REJECTION_TRIES):
        if np.isinf(b) or b - a > 1.0 / a:
            rate = 0.5 * (a + np.sqrt(a * a + 4.0))
            x = a + rng.exponential(1.0 / rate)
            if x < b and rng.random() <= np.exp(-0.5 * (x - rate) ** 2):
                return x
        else:
            x = a + (b - a) * rng.random()
            if rng.random() <= np.exp(0.5 * (a * a - x * x)):
                return x
    raise NumericalError(f"rejection sampler failed on [{a}, {b}) after {MAX_REJECTION_TRIES} tries")


def truncated_gaussian(mu, sigma, lo, hi, u, rng=None) -> np.ndarray:
    """Vectorized inverse-CDF draw of ``N(mu, sigma^2)`` restricted to ``(lo, hi)``.

    ``u`` holds the uniforms driving the inverse CDF. Intervals entirely on
    the upper side are mirrored to the lower side so both CDF values stay
    small and precise. Cells with mass below ``1e-300`` fall back to a
    rejection sampler driven by ``rng``.
    """
    mu, lo, hi, u = np.broadcast_arrays(
        np.asarray(mu, float), np.asarray(lo, float), np.asarray(hi, float), np.asarray(u, float)
    )
    if np.any(lo >= hi):
        raise UsageError("truncation interval needs lo < hi")
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    flip = a > 0
    lo_s = np.where(flip, -b, a)
    hi_s = np.where(flip, -a, b)
    cdf_lo = special.ndtr(lo_s)
    mass = special.ndtr(hi_s) - cdf_lo
    with np.errstate(invalid="ignore", divide="ignore"):
        z = special.ndtri(cdf_lo + u * mass)
    z = np.where(flip, -z, z)

    tiny = ~(mass >= TINY_MASS)
    if np.any(tiny):
        if rng is None:
            raise NumericalError("far-tail truncation cell needs an rng for the rejection fallback")
        for idx in zip(*np.nonzero(tiny)):
            if a[idx] > 0:
                z[idx] = _rejection_tail(a[idx], b[idx], rng)
            else:
                z[idx] = -_rejection_tail(-b[idx], -a[idx], rng)

    x = mu + sigma * z
    # keep strictly inside the bin so the boundary convention cannot misfile a draw
    return np.clip(x, np.nextafter(lo, np.inf), np.nextafter(hi, -np.inf))


def sample_truncated_gaussian(mu_j: float, sigma: float, lo: float, hi: float, rng: np.random.Generator) -> float:
    """One draw of ``N(mu_j, sigma^2)`` conditioned on ``(lo, hi)``."""
    if not lo < hi:
        raise UsageError(f"truncation interval needs lo < hi, got ({lo}, {hi})")
    return float(truncated_gaussian(mu_j, sigma, lo, hi, rng.random(), rng))


def _perturb_block(config: SamplingConfig, grid: QuantileGrid, xi_bins, block: int, rows: int):
    rng = _streams.block_generator(config.seed, block)
    d = config.dim
    bins = sample_bins(rows, d, grid.p, rng)
    u = rng.random((rows, d))
    cols = np.arange(d)[None, :]
    lo = grid.boundaries[cols, bins - 1]
    hi = grid.boundaries[cols, bins]
    samples = truncated_gaussian(config.mu[None, :], config.sigma, lo, hi, u, rng)
    features = (bins == xi_bins[None, :]).astype(np.int8)
    sq = np.sum((samples - config.xi[None, :]) ** 2, axis=1)
    weights = np.exp(-sq / (2.0 * config.nu * config.nu))
    return bins, samples, features, weights


def perturb(config: SamplingConfig, grid: QuantileGrid, workers: int | None = None) -> PerturbationSet:
    """Draw ``config.n`` TabularLIME perturbations around ``config.xi``.

    Rows are generated in fixed-size blocks, each with its own counter-based
    stream derived from ``config.seed``; the result is identical for any
    ``workers``.
    """
    if grid.dim != config.dim:
        raise UsageError(f"grid has dimension {grid.dim}, config has {config.dim}")
    if grid.p != config.p:
        raise UsageError(f"grid has {grid.p} bins, config asks for {config.p}")
    xi_bins = discretize(config.xi, grid)
    parts = _streams.ordered_map(
        lambda blk: _perturb_block(config, grid, xi_bins, blk[0], blk[2] - blk[1]),
        _streams.blocks(config.n),
        workers,
    )
    bins, samples, features, weights = (np.concatenate(col) for col in zip(*parts))
    for arr in (bins, samples, features, weights, xi_bins):
        arr.setflags(write=False)
    return PerturbationSet(bins, samples, features, weights, xi_bins)
