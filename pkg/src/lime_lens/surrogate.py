"""Weighted least-squares surrogate on binary interpretable features."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _streams
from .errors import DegenerateDesign, NumericalError, UsageError
from .models import BlackBoxModel, predict
from .sampling import PerturbationSet, QuantileGrid, SamplingConfig, perturb

__all__ = [
    "Explanation",
    "build_design",
    "weighted_normal_equations",
    "solve_normal_equations",
    "wls_solve",
    "explain",
]

COND_LIMIT = 1e12
GRAM_CHUNK = 8192


@dataclass(frozen=True)
class Explanation:
    """Surrogate coefficients for one run. ``beta_hat[0]`` is the intercept;
    ``prediction_at_xi`` is the surrogate evaluated at the all-ones feature
    vector that encodes ``xi``."""

    beta_hat: np.ndarray
    prediction_at_xi: float
    n_used: int
    condition_number: float
    config_echo: SamplingConfig
    ridge: float = 0.0
    responses: np.ndarray | None = field(default=None, repr=False, compare=False)
    perturbations: PerturbationSet | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat.tolist(),
            "prediction_at_xi": self.prediction_at_xi,
            "n_used": self.n_used,
            "condition_number": self.condition_number,
            "ridge": self.ridge,
            "config": self.config_echo.to_dict(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def build_design(features) -> np.ndarray:
    """Prepend the constant intercept column to the ``n x d`` binary features."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2:
        raise UsageError(f"features must be an n x d matrix, got shape {features.shape}")
    return np.hstack([np.ones((features.shape[0], 1)), features])


def weighted_normal_equations(Z, responses, weights):
    """``(Z^T Pi Z, Z^T Pi y)`` accumulated over fixed row chunks in index
    order, so the floating-point result never depends on threading."""
    Z = np.asarray(Z, dtype=float)
    responses = np.asarray(responses, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n, k = Z.shape
    if responses.shape != (n,) or weights.shape != (n,):
        raise UsageError("Z, responses and weights disagree on the number of rows")
    gram = np.zeros((k, k))
    rhs = np.zeros(k)
    for start in range(0, n, GRAM_CHUNK):
        zc = Z[start:start + GRAM_CHUNK]
        wz = zc * weights[start:start + GRAM_CHUNK, None]
        gram += wz.T @ zc
        rhs += wz.T @ responses[start:start + GRAM_CHUNK]
    return gram, rhs


def _constant_columns(Z, weights) -> list[int]:
    active = np.asarray(weights) > 0
    if not np.any(active):
        return list(range(Z.shape[1]))
    sub = Z[active]
    return [j for j in range(1, Z.shape[1]) if np.all(sub[:, j] == sub[0, j])]


def solve_normal_equations(gram, rhs, n: int, ridge: float = 0.0, Z=None, weights=None):
    """Solve ``(gram + n ridge D) beta = rhs`` where ``D`` is the identity with
    the intercept entry zeroed. Returns ``(beta, condition_number)``."""
    if ridge < 0:
        raise UsageError(f"ridge must be non-negative, got {ridge}")
    k = gram.shape[0]
    system = gram.copy()
    if ridge > 0:
        system[np.arange(1, k), np.arange(1, k)] += n * ridge
    cond = float(np.linalg.cond(system)) if np.all(np.isfinite(system)) else np.inf
    if ridge == 0 and not cond <= COND_LIMIT:
        cols = _constant_columns(Z, weights) if Z is not None else []
        where = f"constant columns {cols}" if cols else "no single constant column (collinear design)"
        raise DegenerateDesign(
            f"weighted normal matrix has condition number {cond:.3e} > {COND_LIMIT:g}: {where}; "
            "the bandwidth is probably too small",
            constant_columns=cols,
        )
    try:
        beta = linalg.cho_solve(linalg.cho_factor(system, lower=True), rhs)
    except linalg.LinAlgError:
        if ridge == 0:
            raise DegenerateDesign("weighted normal matrix is not positive definite") from None
        beta = np.linalg.lstsq(system, rhs, rcond=None)[0]
    residual = np.linalg.norm(system @ beta - rhs)
    scale = np.linalg.norm(system) * np.linalg.norm(beta) + np.linalg.norm(rhs)
    if scale > 0 and residual > 1e-8 * scale:
        raise NumericalError(f"normal equations solved with relative residual {residual / scale:.3e}")
    return beta, cond


def wls_solve(Z, responses, weights, ridge: float = 0.0) -> np.ndarray:
    """Weighted least squares via the normal equations
    ``(Z^T Pi Z + n ridge D) beta = Z^T Pi y``; the intercept is not penalised."""
    Z = np.asarray(Z, dtype=float)
    if ridge == 0 and Z.shape[0] < Z.shape[1]:
        raise UsageError(f"need at least {Z.shape[1]} rows for an unregularised fit, got {Z.shape[0]}")
    gram, rhs = weighted_normal_equations(Z, responses, weights)
    beta, _ = solve_normal_equations(gram, rhs, Z.shape[0], ridge, Z, weights)
    return beta


def explain(
    model: BlackBoxModel,
    config: SamplingConfig,
    grid: QuantileGrid,
    ridge: float = 0.0,
    workers: int | None = None,
    keep_samples: bool = False,
) -> Explanation:
    """Run TabularLIME once: perturb around ``config.xi``, query ``model``,
    and fit the weighted linear surrogate."""
    if model.dim != config.dim:
        raise UsageError(f"model has dimension {model.dim}, config has {config.dim}")
    pert = perturb(config, grid, workers)
    chunks = _streams.blocks(pert.n)
    parts = _streams.ordered_map(lambda c: predict(model, pert.samples[c[1]:c[2]]), chunks, workers)
    responses = np.concatenate(parts)
    bad = np.nonzero(~np.isfinite(responses))[0]
    if bad.size:
        raise NumericalError(f"model returned a non-finite value at sample index {int(bad[0])}")

    Z = build_design(pert.features)
    gram, rhs = weighted_normal_equations(Z, responses, pert.weights)
    beta, cond = solve_normal_equations(gram, rhs, pert.n, ridge, Z, pert.weights)
    beta.setflags(write=False)
    responses.setflags(write=False)
    return Explanation(
        beta_hat=beta,
        prediction_at_xi=float(sum(beta.tolist())),
        n_used=int(np.count_nonzero(pert.weights)),
        condition_number=cond,
        config_echo=config,
        ridge=float(ridge),
        responses=responses if keep_samples else None,
        perturbations=pert if keep_samples else None,
    )
