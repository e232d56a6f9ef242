"""One-dimensional Gaussian-product integrals and a quadrature oracle.

All integrals share the integrand

    x**order * exp(-(x - xi)**2 / (2 nu**2) - (x - mu)**2 / (2 sigma**2)) / (sigma sqrt(2 pi))

over ``(lo, hi)``. Orders 0 and 1 have closed forms on any interval; order 2
is only provided on the whole line.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import NumericalError, UsageError

__all__ = ["IntegralSpec", "erf_bracket", "gauss_closed", "gauss_quadrature", "full_line_mass"]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def erf_bracket(u_lo, u_hi):
    """``(erf(u_hi) - erf(u_lo)) / 2`` without cancellation in the tails.

    When both arguments share a sign the complementary error function is
    used, so far-tail intervals keep full relative precision. Infinite
    arguments are fine.
    """
    u_lo = np.asarray(u_lo, dtype=float)
    u_hi = np.asarray(u_hi, dtype=float)
    upper = u_lo >= 0
    lower = u_hi <= 0
    out = 0.5 * (special.erf(u_hi) - special.erf(u_lo))
    out = np.where(upper, 0.5 * (special.erfc(u_lo) - special.erfc(u_hi)), out)
    out = np.where(lower, 0.5 * (special.erfc(-u_hi) - special.erfc(-u_lo)), out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class IntegralSpec:
    xi: float
    mu: float
    nu: float
    sigma: float
    lo: float = -math.inf
    hi: float = math.inf
    order: int = 0

    def __post_init__(self):
        if not (self.nu > 0 and self.sigma > 0):
            raise UsageError("nu and sigma must be positive")
        if not self.lo < self.hi:
            raise UsageError(f"need lo < hi, got ({self.lo}, {self.hi})")
        if self.order not in (0, 1, 2):
            raise UsageError(f"order must be 0, 1 or 2, got {self.order}")

    @property
    def full_line(self) -> bool:
        return self.lo == -math.inf and self.hi == math.inf


def full_line_mass(xi, mu, nu, sigma):
    """Order-0 integral over the real line: ``nu / sqrt(nu^2 + sigma^2) * exp(-(xi - mu)^2 / (2 (nu^2 + sigma^2)))``."""
    s2 = nu * nu + sigma * sigma
    return nu / np.sqrt(s2) * np.exp(-((np.asarray(xi) - mu) ** 2) / (2.0 * s2))


def gauss_closed(spec: IntegralSpec) -> float:
    xi, mu, nu, sigma = spec.xi, spec.mu, spec.nu, spec.sigma
    s2 = nu * nu + sigma * sigma
    scale = float(full_line_mass(xi, mu, nu, sigma))

    if spec.order == 2:
        if not spec.full_line:
            raise UsageError("the second-order integral is only available on the whole real line")
        return ((sigma**2 * xi + nu**2 * mu) ** 2 + nu**2 * sigma**2 * s2) / s2**2 * scale

    denom = nu * sigma * math.sqrt(2.0 * s2)

    def arg(x):
        if math.isinf(x):
            return x
        return (nu**2 * (x - mu) + sigma**2 * (x - xi)) / denom

    u_lo, u_hi = arg(spec.lo), arg(spec.hi)
    zeroth = erf_bracket(u_lo, u_hi)
    if spec.order == 0:
        return scale * zeroth

    centre = (sigma**2 * xi + nu**2 * mu) / s2
    width = nu * sigma / (_SQRT2PI * math.sqrt(s2))
    density = math.exp(-u_hi * u_hi) - math.exp(-u_lo * u_lo)
    return scale * (centre * zeroth - width * density)


def gauss_quadrature(spec: IntegralSpec, tol: float = 1e-10) -> float:
    """Adaptive quadrature (QUADPACK) of the integrand on
    ``[min(xi, mu) - 12 s, max(xi, mu) + 12 s]`` intersected with ``(lo, hi)``,
    where ``s = max(nu, sigma)``. The discarded tails are below 1e-30."""
    if tol < 1e-13:
        raise UsageError(f"tol must be at least 1e-13, got {tol}")
    xi, mu, nu, sigma = spec.xi, spec.mu, spec.nu, spec.sigma
    reach = 12.0 * max(nu, sigma)
    a = max(spec.lo, min(xi, mu) - reach)
    b = min(spec.hi, max(xi, mu) + reach)
    if not a < b:
        return 0.0
    order = spec.order
    norm = sigma * _SQRT2PI

    def integrand(x):
        return x**order * math.exp(-((x - xi) ** 2) / (2 * nu * nu) - (x - mu) ** 2 / (2 * sigma * sigma)) / norm

    s2 = nu * nu + sigma * sigma
    peak = (sigma**2 * xi + nu**2 * mu) / s2
    points = [peak] if a < peak < b else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err, info, *rest = integrate.quad(
            integrand, a, b, epsabs=tol, epsrel=0.0, limit=500, points=points, full_output=True
        )
    if rest and err > tol:
        raise NumericalError(f"quadrature did not converge: estimate {value!r}, error {err:.3e}: {rest[0]}")
    return float(value)
