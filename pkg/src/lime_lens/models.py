"""Black-box regression models, CSV datasets and gradient estimation.

Every model exposes ``dim`` and a batched ``predict(X)`` taking an ``(n, d)``
array. :func:`evaluate` is the single-point entry used by the rest of the
package and is where dimension checks happen.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Protocol

import numpy as np
from scipy import linalg

from .errors import NumericalError, UsageError

__all__ = [
    "BlackBoxModel",
    "LinearModel",
    "KernelRidgeModel",
    "FunctionModel",
    "Dataset",
    "GaussianFit",
    "evaluate",
    "predict",
    "train_kernel_ridge",
    "fit_linear",
    "finite_diff_gradient",
    "load_dataset",
    "save_dataset",
    "fit_gaussian",
]


class BlackBoxModel(Protocol):
    dim: int

    def predict(self, X: np.ndarray) -> np.ndarray: ...


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise UsageError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LinearModel:
    """``f(x) = a . x + b``."""

    a: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen_array(self.a, 1, "a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def predict(self, X):
        return np.asarray(X, dtype=float) @ self.a + self.b


def _gaussian_kernel(X, Y, scale):
    sq = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(Y * Y, axis=1)[None, :]
        - 2.0 * X @ Y.T
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * scale * scale))


@dataclass(frozen=True)
class KernelRidgeModel:
    """Kernel ridge regressor with Gaussian kernel ``exp(-|x-x'|^2 / (2 s^2))``.

    ``dual_coeffs`` solves ``(K + ridge I) c = train_y``; prediction at ``x``
    is ``sum_i c_i k(x, x_i)``.
    """

    train_x: np.ndarray
    dual_coeffs: np.ndarray
    kernel_scale: float
    ridge: float

    def __post_init__(self):
        object.__setattr__(self, "train_x", _frozen_array(self.train_x, 2, "train_x"))
        object.__setattr__(self, "dual_coeffs", _frozen_array(self.dual_coeffs, 1, "dual_coeffs"))
        if self.train_x.shape[0] != self.dual_coeffs.shape[0]:
            raise UsageError("train_x and dual_coeffs disagree on the number of rows")
        if not self.kernel_scale > 0 or not self.ridge > 0:
            raise UsageError("kernel_scale and ridge must be positive")

    @property
    def dim(self) -> int:
        return self.train_x.shape[1]

    def kernel(self, X):
        return _gaussian_kernel(np.asarray(X, dtype=float), self.train_x, self.kernel_scale)

    def predict(self, X):
        return self.kernel(X) @ self.dual_coeffs


@dataclass(frozen=True)
class FunctionModel:
    """Wrap a plain callable. ``fn`` receives an ``(n, d)`` array when
    ``vectorized`` is true, otherwise one row at a time."""

    fn: Callable
    dim: int
    vectorized: bool = True

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self.vectorized:
            return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])
        return np.array([float(self.fn(row)) for row in X])


def predict(model: BlackBoxModel, X) -> np.ndarray:
    """Batched evaluation with a dimension check."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise UsageError(f"model expects inputs of dimension d={model.dim}, got shape {X.shape}")
    return model.predict(X)


def evaluate(model: BlackBoxModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise UsageError(
            f"dimension mismatch: model expects d={model.dim}, given d={x.shape[0] if x.ndim == 1 else x.shape}"
        )
    return float(model.predict(x[None, :])[0])


@dataclass(frozen=True)
class Dataset:
    rows: np.ndarray
    targets: np.ndarray | None = None
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        rows = _frozen_array(self.rows, 2, "rows")
        if rows.shape[0] < 2:
            raise UsageError(f"a dataset needs at least 2 rows, got {rows.shape[0]}")
        object.__setattr__(self, "rows", rows)
        if self.targets is not None:
            targets = _frozen_array(self.targets, 1, "targets")
            if targets.shape[0] != rows.shape[0]:
                raise UsageError("targets length differs from the number of rows")
            object.__setattr__(self, "targets", targets)
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(rows.shape[1]))
        if len(names) != rows.shape[1]:
            raise UsageError(f"expected {rows.shape[1]} feature names, got {len(names)}")
        object.__setattr__(self, "feature_names", names)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def train_kernel_ridge(data, kernel_scale: float, ridge: float) -> KernelRidgeModel:
    """Fit a Gaussian-kernel ridge regressor by a dense Cholesky solve.

    ``data`` is a :class:`Dataset` with targets or a plain ``(X, y)`` pair
    (the latter also allows a single training point).
    """
    if isinstance(data, Dataset):
        if data.targets is None:
            raise UsageError("kernel ridge training needs targets")
        X, y = np.asarray(data.rows), np.asarray(data.targets)
    else:
        X, y = (np.asarray(v, dtype=float) for v in data)
        X = X.reshape(len(y), -1)
    if not kernel_scale > 0 or not ridge > 0:
        raise UsageError("kernel_scale and ridge must be positive")
    K = _gaussian_kernel(X, X, kernel_scale)
    system = K + ridge * np.eye(X.shape[0])
    try:
        factor = linalg.cho_factor(system, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"kernel system is not positive definite: {exc}") from exc
    coeffs = linalg.cho_solve(factor, y, check_finite=False)
    residual = np.linalg.norm(system @ coeffs - y)
    if residual > 1e-8 * max(np.linalg.norm(y), np.finfo(float).tiny):
        raise NumericalError(f"kernel system solved with residual {residual:.3e}")
    return KernelRidgeModel(X, coeffs, float(kernel_scale), float(ridge))


def fit_linear(data: Dataset) -> LinearModel:
    """Ordinary least squares with intercept."""
    if data.targets is None:
        raise UsageError("linear fit needs targets")
    X = np.column_stack([np.asarray(data.rows), np.ones(data.rows.shape[0])])
    coef, *_ = np.linalg.lstsq(X, np.asarray(data.targets), rcond=None)
    return LinearModel(coef[:-1], coef[-1])


def finite_diff_gradient(model: BlackBoxModel, x, h=None) -> np.ndarray:
    """Central-difference gradient.

    ``h`` may be a scalar or per-coordinate vector; the default is
    ``1e-4 * max(1, |x_j|)``. The denominator uses the step actually
    realised in floating point, ``(x_j + h) - (x_j - h)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise UsageError(f"dimension mismatch: model expects d={model.dim}, given {x.shape}")
    d = x.shape[0]
    if h is None:
        steps = 1e-4 * np.maximum(1.0, np.abs(x))
    else:
        steps = np.broadcast_to(np.asarray(h, dtype=float), (d,))
    if not np.all(steps > 0):
        raise UsageError("finite-difference step must be positive")
    plus = np.repeat(x[None, :], d, axis=0)
    minus = plus.copy()
    idx = np.arange(d)
    plus[idx, idx] += steps
    minus[idx, idx] -= steps
    values = predict(model, np.vstack([plus, minus]))
    return (values[:d] - values[d:]) / (plus[idx, idx] - minus[idx, idx])


def _parse_cell(cell: str, row: int, col: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise UsageError(f"cannot parse {cell!r} as a number at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise UsageError(f"non-finite value {cell!r} at row {row}, column {col}")
    return value


def load_dataset(path, has_header: bool = False, target_column: str | int | None = None) -> Dataset:
    """Read a comma-separated numeric table.

    ``target_column`` is a header name, or a 0-based column index (also
    accepted when there is no header). Row and column numbers in error
    messages are 1-based and count the header line.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not lines:
        raise UsageError(f"{path} is empty")
    header = None
    if has_header:
        header = [c.strip() for c in lines[0]]
        lines = lines[1:]
        if not lines:
            raise UsageError(f"{path} has a header but no data rows")
    width = len(header) if header is not None else len(lines[0])
    first = 2 if has_header else 1
    table = []
    for i, line in enumerate(lines):
        if len(line) != width:
            raise UsageError(f"row {i + first} has {len(line)} columns, expected {width}")
        table.append([_parse_cell(c.strip(), i + first, j + 1) for j, c in enumerate(line)])
    table = np.array(table, dtype=float)
    names = header or [f"x{j + 1}" for j in range(width)]

    if target_column is None:
        return Dataset(table, None, tuple(names))
    if isinstance(target_column, str) and header is not None and target_column in header:
        t = header.index(target_column)
    else:
        try:
            t = int(target_column)
        except (TypeError, ValueError):
            raise UsageError(f"unknown target column {target_column!r}") from None
        if not 0 <= t < width:
            raise UsageError(f"target column index {t} out of range for {width} columns")
    keep = [j for j in range(width) if j != t]
    return Dataset(table[:, keep], table[:, t], tuple(names[j] for j in keep))


def save_dataset(data: Dataset, path, has_header: bool = False) -> None:
    """Write ``data`` as CSV (targets last) with 17 significant digits."""
    table = np.asarray(data.rows)
    names = list(data.feature_names)
    if data.targets is not None:
        table = np.column_stack([table, data.targets])
        names.append("target")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if has_header:
            writer.writerow(names)
        for row in table:
            writer.writerow([format(v, ".17g") for v in row])


class GaussianFit(NamedTuple):
    mu: np.ndarray
    sigma: float
    feature_std: np.ndarray


def fit_gaussian(data: Dataset | np.ndarray) -> GaussianFit:
    """Isotropic Gaussian fit: per-feature means and ``sigma`` equal to the
    root of the averaged unbiased variances. Per-feature standard deviations
    are returned for diagnostics only."""
    rows = np.asarray(data.rows if isinstance(data, Dataset) else data, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise UsageError("fit_gaussian needs at least 2 rows")
    var = rows.var(axis=0, ddof=1)
    if np.all(var == 0):
        raise NumericalError("every feature has zero variance")
    return GaussianFit(rows.mean(axis=0), float(np.sqrt(var.mean())), np.sqrt(var))


def as_model(obj: BlackBoxModel | Callable, dim: int | None = None) -> BlackBoxModel:
    if hasattr(obj, "predict") and hasattr(obj, "dim"):
        return obj
    if callable(obj) and dim is not None:
        return FunctionModel(obj, dim)
    raise UsageError("expected a model with .predict and .dim, or a callable plus dim")

