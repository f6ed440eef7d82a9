"""
Non-iterative linear readout: ridge regression on standardized features,
plus the MAPE and Pearson-r evaluation metrics.

The bias is handled by centring the targets and is never penalized; the
weights solve ``(Z^T Z + lam I) w = Z^T (y - mean(y))`` where ``Z`` holds the
z-scored features.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from . import serialize
from .errors import DatasetParseError, MetricError, NumericalError, ParameterError

DEFAULT_LAMBDA = 1e-6
CV_GRID = (1e-10, 1e-8, 1e-6, 1e-4, 1e-2)
MAPE_GUARD = 1e-12


@dataclass
class ReadoutModel:
    weights: np.ndarray
    bias: float
    lam: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    task: str = ""
    probe: Optional[dict] = None

    @property
    def dim(self) -> int:
        return self.weights.size

    def standardize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ParameterError(f"feature length {x.shape[-1]} does not match model dimension {self.dim}")
        return (x - self.feature_mean) / self.feature_std

    def predict(self, x) -> np.ndarray | float:
        """Affine prediction for one feature vector (float) or a stack of them (array)."""
        y = self.standardize(x) @ self.weights + self.bias
        return float(y) if np.ndim(y) == 0 else y

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "lambda": self.lam,
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "probe": self.probe or {},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReadoutModel":
        w = np.asarray(d["weights"], dtype=float)
        mu = np.asarray(d["feature_mean"], dtype=float)
        sd = np.asarray(d["feature_std"], dtype=float)
        if not (w.ndim == 1 and w.shape == mu.shape == sd.shape):
            raise ParameterError("model weights and normalization vectors must have equal length")
        return cls(w, float(d["bias"]), float(d["lambda"]), mu, sd, str(d.get("task", "")), d.get("probe") or None)

    def save(self, path, extra: Optional[dict] = None) -> None:
        d = self.to_dict()
        if extra:
            d.update(extra)
        Path(path).write_text(serialize.dumps(d) + "\n")

    @classmethod
    def load(cls, path) -> "ReadoutModel":
        try:
            d = serialize.loads(Path(path).read_text())
            return cls.from_dict(d)
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetParseError(path, None, f"not a readout model file: {exc}") from exc


def predict(model: ReadoutModel, x):
    return model.predict(x)


def _check_xy(features, targets):
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2:
        raise ParameterError(f"features must be a 2-D matrix, got shape {x.shape}")
    if y.ndim != 1 or y.size != x.shape[0]:
        raise ParameterError(f"{x.shape[0]} feature rows but targets have shape {y.shape}")
    if x.shape[0] < 1:
        raise ParameterError("at least one training row is required")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ParameterError("features and targets must be finite")
    return x, y


def fit_ridge(features, targets, lam: float = DEFAULT_LAMBDA, task: str = "",
              probe: Optional[dict] = None) -> ReadoutModel:
    """Closed-form ridge regression with an unpenalized bias.

    Constant feature columns get unit scale and zero weight.

    Raises
    ------
    NumericalError
        If ``lam == 0`` and the standardized design is rank deficient.
    """
    x, y = _check_xy(features, targets)
    if not (lam >= 0 and np.isfinite(lam)):
        raise ParameterError(f"lambda must be finite and >= 0, got {lam!r}")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    # roundoff in the mean leaves ~1e-17 spread on a constant column
    active = sd > 1e-12 * np.maximum(np.abs(mu), np.finfo(float).tiny)
    sd = np.where(active, sd, 1.0)
    z = ((x - mu) / sd)[:, active]
    y_mean = float(y.mean())
    w = np.zeros(x.shape[1])
    if z.shape[1]:
        gram = z.T @ z + lam * np.eye(z.shape[1])
        rhs = z.T @ (y - y_mean)
        if lam == 0 and np.linalg.matrix_rank(z) < z.shape[1]:
            raise NumericalError("normal equations are singular with lambda=0; use lambda > 0")
        try:
            w[active] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"ridge system is not positive definite ({exc}); use lambda > 0") from exc
    return ReadoutModel(w, y_mean, float(lam), mu, sd, task, probe)


def select_lambda(features, targets, grid: Sequence[float] = CV_GRID, folds: int = 5) -> float:
    """Ridge parameter with the lowest k-fold validation mean squared error.

    Folds are contiguous blocks of rows, so the choice is deterministic.
    Ties resolve towards the larger lambda.
    """
    x, y = _check_xy(features, targets)
    k = min(folds, x.shape[0])
    if k < 2:
        raise ParameterError("cross-validation needs at least two rows")
    blocks = np.array_split(np.arange(x.shape[0]), k)
    best, best_err = None, np.inf
    for lam in sorted(grid):
        err = 0.0
        for b in blocks:
            train = np.setdiff1d(np.arange(x.shape[0]), b)
            m = fit_ridge(x[train], y[train], lam)
            err += float(np.sum((m.predict(x[b]) - y[b]) ** 2))
        if err <= best_err:
            best, best_err = lam, err
    return float(best)


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    mape: float
    pearson_r: float
    n_samples: int

    def to_dict(self) -> dict:
        r = None if np.isnan(self.pearson_r) else self.pearson_r
        return {"mape": self.mape, "pearson_r": r, "n_samples": self.n_samples}


def _pair(truth, pred):
    t = np.asarray(truth, dtype=float).ravel()
    p = np.asarray(pred, dtype=float).ravel()
    if t.shape != p.shape:
        raise ParameterError(f"length mismatch: {t.size} truths vs {p.size} predictions")
    return t, p


def mape(truth, pred) -> float:
    """Mean absolute percentage error, in percent."""
    t, p = _pair(truth, pred)
    if t.size == 0:
        raise MetricError("MAPE of an empty sample")
    if np.any(np.abs(t) <= MAPE_GUARD):
        raise MetricError("MAPE is undefined when a true value is zero")
    return float(100.0 * np.mean(np.abs((p - t) / t)))


def pearson(truth, pred) -> float:
    """Population covariance over the product of population standard deviations."""
    t, p = _pair(truth, pred)
    if t.size < 2:
        raise MetricError("Pearson r needs at least two samples")
    dt, dp = t - t.mean(), p - p.mean()
    st, sp = np.sqrt(np.mean(dt * dt)), np.sqrt(np.mean(dp * dp))
    if st == 0 or sp == 0:
        raise MetricError("Pearson r is undefined for a constant vector")
    return float(np.clip(np.mean(dt * dp) / (st * sp), -1.0, 1.0))


def evaluate(truth, pred, mape_floor: Optional[float] = None) -> Metrics:
    """MAPE and Pearson r; ``mape_floor`` drops |truth| below it from MAPE only.

    Pearson r is reported as NaN when undefined.
    """
    t, p = _pair(truth, pred)
    keep = np.abs(t) >= mape_floor if mape_floor is not None else np.ones(t.size, bool)
    try:
        r = pearson(t, p)
    except MetricError:
        r = float("nan")
    return Metrics(mape(t[keep], p[keep]), r, int(t.size))
