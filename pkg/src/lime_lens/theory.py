"""Closed-form expectations for TabularLIME with a linear black box.

With Gaussian sampling ``N(mu, sigma^2 I)``, exponential weights of bandwidth
``nu`` and theoretical quantile bins, the population normal equations of the
surrogate fit are ``Sigma beta = Gamma`` with

    Sigma = C_d [[1, alpha^T], [alpha, M]],   M_jj = alpha_j, M_jk = alpha_j alpha_k
    Gamma = C_d (f(mu~), alpha_j f(mu~) - a_j theta_j)_j

where ``mu~ = (nu^2 mu + sigma^2 xi) / (nu^2 + sigma^2)`` and
``sigma~ = nu sigma / sqrt(nu^2 + sigma^2)``. Feature indices ``j`` are
0-based throughout; coefficient vectors put the intercept at index 0, so
feature ``j`` lives at ``beta[j + 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NearDegenerateBin, UsageError
from .integrals import erf_bracket
from .sampling import QuantileGrid, SamplingConfig, discretize

__all__ = [
    "ShrunkParams",
    "TheoryReport",
    "shrunk_params",
    "bin_edges_of_xi",
    "alphas",
    "thetas",
    "alpha",
    "theta",
    "sigma_matrix",
    "sigma_inverse",
    "gamma_vector",
    "beta_closed_form",
    "local_error_center",
    "v_crit",
    "sample_size_terms",
    "sample_size_bound",
    "expected_weighted_sqnorm",
    "theory_report",
]

ENDPOINT_GUARD = 1e-12
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ShrunkParams:
    mu_tilde: np.ndarray
    sigma_tilde: float
    c_d: float
    a_d: float | None = None


def _check(config: SamplingConfig, grid: QuantileGrid | None = None):
    if grid is not None and grid.dim != config.dim:
        raise UsageError(f"grid has dimension {grid.dim}, config has {config.dim}")


def _scaling_constant(config: SamplingConfig) -> float:
    s2 = config.nu**2 + config.sigma**2
    d = config.dim
    gap = float(np.sum((config.xi - config.mu) ** 2))
    return (config.nu**2 / s2) ** (d / 2) * math.exp(-gap / (2.0 * s2))


def _mu_sigma_tilde(config: SamplingConfig):
    s2 = config.nu**2 + config.sigma**2
    mu_t = (config.nu**2 * config.mu + config.sigma**2 * config.xi) / s2
    return mu_t, config.nu * config.sigma / math.sqrt(s2)


def shrunk_params(config: SamplingConfig, grid: QuantileGrid | None = None) -> ShrunkParams:
    """``mu~``, ``sigma~``, ``C_d`` and, when ``grid`` is given,
    ``A_d = max_j 1 / (alpha_j (1 - alpha_j))``."""
    _check(config, grid)
    mu_t, sigma_t = _mu_sigma_tilde(config)
    a_d = None
    if grid is not None:
        al = alphas(config, grid)
        with np.errstate(divide="ignore"):
            a_d = float(np.max(1.0 / (al * _complements(config, grid))))
    mu_t.setflags(write=False)
    return ShrunkParams(mu_t, sigma_t, _scaling_constant(config), a_d)


def bin_edges_of_xi(config: SamplingConfig, grid: QuantileGrid):
    """``(q_minus, q_plus)`` arrays bounding each coordinate of ``xi``."""
    _check(config, grid)
    k = discretize(config.xi, grid)
    rows = np.arange(config.dim)
    return grid.boundaries[rows, k - 1], grid.boundaries[rows, k]


def alphas(config: SamplingConfig, grid: QuantileGrid) -> np.ndarray:
    mu_t, sigma_t = _mu_sigma_tilde(config)
    q_lo, q_hi = bin_edges_of_xi(config, grid)
    scale = sigma_t * math.sqrt(2.0)
    return np.asarray(erf_bracket((q_lo - mu_t) / scale, (q_hi - mu_t) / scale), dtype=float)


def _complements(config: SamplingConfig, grid: QuantileGrid) -> np.ndarray:
    """``1 - alpha_j`` as the mass of the two tails outside the bin, which
    keeps full precision when ``alpha_j`` is close to 1."""
    mu_t, sigma_t = _mu_sigma_tilde(config)
    q_lo, q_hi = bin_edges_of_xi(config, grid)
    scale = sigma_t * math.sqrt(2.0)
    below = erf_bracket(-np.inf, (q_lo - mu_t) / scale)
    above = erf_bracket((q_hi - mu_t) / scale, np.inf)
    return np.asarray(below, dtype=float) + np.asarray(above, dtype=float)


def thetas(config: SamplingConfig, grid: QuantileGrid) -> np.ndarray:
    mu_t, sigma_t = _mu_sigma_tilde(config)
    q_lo, q_hi = bin_edges_of_xi(config, grid)

    def density(q):
        with np.errstate(invalid="ignore"):
            out = sigma_t / _SQRT2PI * np.exp(-((q - mu_t) ** 2) / (2.0 * sigma_t**2))
        return np.where(np.isinf(q), 0.0, out)

    return density(q_hi) - density(q_lo)


def alpha(j: int, config: SamplingConfig, grid: QuantileGrid) -> float:
    """Weighted probability mass of the bin containing ``xi_j``, normalised by ``C_d``."""
    return float(alphas(config, grid)[j])


def theta(j: int, config: SamplingConfig, grid: QuantileGrid) -> float:
    return float(thetas(config, grid)[j])


def sigma_matrix(config: SamplingConfig, grid: QuantileGrid) -> np.ndarray:
    al = alphas(config, grid)
    d = al.shape[0]
    out = np.empty((d + 1, d + 1))
    out[0, 0] = 1.0
    out[0, 1:] = al
    out[1:, 0] = al
    out[1:, 1:] = np.outer(al, al)
    out[1:, 1:][np.diag_indices(d)] = al
    return _scaling_constant(config) * out


def _guard(al: np.ndarray, co: np.ndarray) -> None:
    bad = np.nonzero((al < ENDPOINT_GUARD) | (co < ENDPOINT_GUARD))[0]
    if bad.size:
        raise NearDegenerateBin(
            f"alpha within {ENDPOINT_GUARD:g} of 0 or 1 for feature(s) {[int(j) + 1 for j in bad]}: "
            f"{al[bad].tolist()}; the bandwidth is pathological relative to the bin"
        )


def sigma_inverse(config: SamplingConfig, grid: QuantileGrid) -> np.ndarray:
    """Arrowhead inverse of :func:`sigma_matrix` (no numerical inversion)."""
    al = alphas(config, grid)
    co = _complements(config, grid)
    _guard(al, co)
    d = al.shape[0]
    out = np.zeros((d + 1, d + 1))
    out[0, 0] = 1.0 + np.sum(al / co)
    out[0, 1:] = -1.0 / co
    out[1:, 0] = out[0, 1:]
    out[1:, 1:][np.diag_indices(d)] = 1.0 / (al * co)
    return out / _scaling_constant(config)


def _linear_parts(model, config):
    try:
        a = np.asarray(model.a, dtype=float)
        b = float(model.b)
    except AttributeError:
        raise UsageError("closed-form coefficients need a linear model with attributes a and b") from None
    if a.shape != (config.dim,):
        raise UsageError(f"model has dimension {a.shape[0]}, config has {config.dim}")
    mu_t, _ = _mu_sigma_tilde(config)
    return a, float(a @ mu_t + b)


def gamma_vector(model, config: SamplingConfig, grid: QuantileGrid) -> np.ndarray:
    a, f_mu_t = _linear_parts(model, config)
    al = alphas(config, grid)
    th = thetas(config, grid)
    return _scaling_constant(config) * np.concatenate([[f_mu_t], al * f_mu_t - a * th])


def beta_closed_form(model, config: SamplingConfig, grid: QuantileGrid) -> np.ndarray:
    """Expected surrogate coefficients of a linear ``f = a . x + b``:

    ``beta_0 = f(mu~) + sum_j a_j theta_j / (1 - alpha_j)`` and
    ``beta_j = -a_j theta_j / (alpha_j (1 - alpha_j))``.
    """
    a, f_mu_t = _linear_parts(model, config)
    al = alphas(config, grid)
    co = _complements(config, grid)
    _guard(al, co)
    th = thetas(config, grid)
    intercept = f_mu_t + float(np.sum(a * th / co))
    return np.concatenate([[intercept], -a * th / (al * co)])


def local_error_center(model, config: SamplingConfig, grid: QuantileGrid) -> float:
    """Limit of the surrogate prediction at ``xi``: ``f(mu~) - sum_j a_j theta_j / alpha_j``."""
    a, f_mu_t = _linear_parts(model, config)
    al = alphas(config, grid)
    _guard(al, _complements(config, grid))
    return f_mu_t - float(np.sum(a * thetas(config, grid) / al))


def v_crit(j: int, config: SamplingConfig, grid: QuantileGrid) -> float | None:
    """Squared bandwidth at which ``theta_j`` vanishes, or ``None``.

    ``None`` when the bin of ``xi_j`` is unbounded, when the bin midpoint
    coincides with ``mu_j`` (denominator below 1e-14), or when the formula
    is not a positive finite number.
    """
    q_lo, q_hi = bin_edges_of_xi(config, grid)
    lo, hi = float(q_lo[j]), float(q_hi[j])
    if math.isinf(lo) or math.isinf(hi):
        return None
    num = 2.0 * config.xi[j] - lo - hi
    den = -2.0 * config.mu[j] + lo + hi
    if abs(den) < 1e-14:
        return None
    value = config.sigma**2 * num / den
    if not (math.isfinite(value) and value > 0):
        return None
    return float(value)


def sample_size_terms(model, config: SamplingConfig, grid: QuantileGrid, epsilon: float, eta: float):
    """The three lower bounds on ``n`` whose maximum guarantees
    ``|beta_hat - beta| <= epsilon`` with probability at least ``1 - eta``."""
    if not epsilon > 0:
        raise UsageError(f"epsilon must be positive, got {epsilon}")
    if not 0 < eta < 1:
        raise UsageError(f"eta must lie in (0, 1), got {eta}")
    a, f_mu_t = _linear_parts(model, config)
    sp = shrunk_params(config, grid)
    d, c, big_a = config.dim, sp.c_d, sp.a_d
    grad2 = float(a @ a)
    first = 288 * grad2 * config.sigma**2 * d**2 * big_a**2 / (epsilon**2 * c**2) * math.log(12 * d / eta)
    second = 18 * d**2 * big_a**2 / c**2 * math.log(24 * d**2 / eta)
    third = (
        648 * d**5 * big_a**4 * (3 * f_mu_t**2 + sp.sigma_tilde**2 * grad2)
        / (c**2 * epsilon**2)
        * math.log(24 * d**2 / eta)
    )
    return first, second, third


def sample_size_bound(model, config: SamplingConfig, grid: QuantileGrid, epsilon: float, eta: float) -> int:
    return int(math.ceil(max(sample_size_terms(model, config, grid, epsilon, eta))))


def expected_weighted_sqnorm(config: SamplingConfig) -> float:
    """``E[pi |x - xi|^2]`` under ``x ~ N(mu, sigma^2 I)``."""
    nu2, s2 = config.nu**2, config.sigma**2
    gap = float(np.sum((config.xi - config.mu) ** 2))
    bracket = nu2**2 / (nu2 + s2) ** 2 * gap + nu2 * s2 * config.dim / (nu2 + s2)
    return _scaling_constant(config) * bracket


@dataclass(frozen=True)
class TheoryReport:
    config: SamplingConfig
    shrunk: ShrunkParams
    alpha: np.ndarray
    theta: np.ndarray
    sigma_matrix: np.ndarray
    sigma_inverse: np.ndarray | None
    v_crit: tuple
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    local_error_center: float | None = None
    sample_size: int | None = None

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else np.asarray(x).tolist()

        return {
            "beta": arr(self.beta),
            "prediction_at_xi": self.local_error_center,
            "config": self.config.to_dict(),
            "mu_tilde": arr(self.shrunk.mu_tilde),
            "sigma_tilde": self.shrunk.sigma_tilde,
            "c_d": self.shrunk.c_d,
            "a_d": self.shrunk.a_d,
            "alpha": arr(self.alpha),
            "theta": arr(self.theta),
            "sigma_matrix": arr(self.sigma_matrix),
            "sigma_inverse": arr(self.sigma_inverse),
            "gamma": arr(self.gamma),
            "local_error_center": self.local_error_center,
            "v_crit": list(self.v_crit),
            "sample_size": self.sample_size,
        }


def theory_report(
    config: SamplingConfig,
    grid: QuantileGrid,
    model=None,
    epsilon: float | None = None,
    eta: float | None = None,
) -> TheoryReport:
    """Every closed-form quantity for ``config``. Model-dependent fields
    stay ``None`` without a linear ``model``; the sample-size bound needs
    ``epsilon`` and ``eta`` as well."""
    sp = shrunk_params(config, grid)
    al = alphas(config, grid)
    try:
        inv = sigma_inverse(config, grid)
    except NearDegenerateBin:
        if model is not None:
            raise
        inv = None
    gam = beta = centre = size = None
    if model is not None:
        gam = gamma_vector(model, config, grid)
        beta = beta_closed_form(model, config, grid)
        centre = local_error_center(model, config, grid)
        if epsilon is not None and eta is not None:
            size = sample_size_bound(model, config, grid, epsilon, eta)
    return TheoryReport(
        config=config,
        shrunk=sp,
        alpha=al,
        theta=thetas(config, grid),
        sigma_matrix=sigma_matrix(config, grid),
        sigma_inverse=inv,
        v_crit=tuple(v_crit(j, config, grid) for j in range(config.dim)),
        gamma=gam,
        beta=beta,
        local_error_center=centre,
        sample_size=size,
    )
