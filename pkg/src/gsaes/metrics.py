"""Evaluation protocol: correlation metrics, logistic fitting, calibration,
trivial predictors, and multi-seed aggregation.

PLCC is reported after a monotone 4-parameter logistic remap fitted by least
squares (the standard quality-assessment protocol); SRCC and KRCC are
computed on raw predictions.  Degenerate inputs (zero variance, failed fits)
report 0 with a flag instead of raising so multi-seed sweeps never abort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats


class AggregationError(ValueError):
    """A metrics report is missing a field required for aggregation."""


@dataclass
class MetricsReport:
    """Metrics for one run. ``plcc`` is the logistic-fitted value; ``plcc_raw``
    skips the fit.  ``degenerate`` marks zero-variance inputs or a failed fit."""

    plcc: float
    srcc: float
    krcc: float
    mae: float
    rmse: float
    n: int
    plcc_raw: float = 0.0
    logistic_params: np.ndarray | None = None
    degenerate: bool = False

    def as_dict(self):
        params = None
        if self.logistic_params is not None:
            params = [float(v) for v in self.logistic_params]
        return {
            "plcc": self.plcc,
            "srcc": self.srcc,
            "krcc": self.krcc,
            "mae": self.mae,
            "rmse": self.rmse,
            "n": self.n,
            "plcc_raw": self.plcc_raw,
            "logistic_params": params,
            "degenerate": self.degenerate,
        }


def _check_lengths(x, y, minimum=2):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < minimum:
        raise ValueError(f"need at least {minimum} samples, got {len(x)}")
    return x, y


def _degenerate(x):
    return float(np.std(x)) == 0.0


def pearson(x, y):
    """Product-moment correlation; 0 when either input has zero variance."""
    x, y = _check_lengths(x, y)
    if _degenerate(x) or _degenerate(y):
        return 0.0
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / denom


def spearman(x, y):
    """Rank correlation with average ranks for ties."""
    x, y = _check_lengths(x, y)
    if _degenerate(x) or _degenerate(y):
        return 0.0
    return pearson(stats.rankdata(x, method="average"),
                   stats.rankdata(y, method="average"))


def kendall(x, y):
    """Kendall tau-b (tie-corrected)."""
    x, y = _check_lengths(x, y)
    if _degenerate(x) or _degenerate(y):
        return 0.0
    tau = stats.kendalltau(x, y, variant="b").statistic
    if not np.isfinite(tau):
        return 0.0
    return float(tau)


def mae(predictions, targets):
    p, t = _check_lengths(predictions, targets, minimum=1)
    return float(np.mean(np.abs(p - t)))


def rmse(predictions, targets):
    p, t = _check_lengths(predictions, targets, minimum=1)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def _logistic(x, b1, b2, b3, b4):
    return b1 * (0.5 - 1.0 / (1.0 + np.exp(b2 * (x - b3)))) + b4


def logistic_fit_plcc(predictions, targets):
    """Pearson correlation after a monotone 4-parameter logistic remap.

    The remap ``g(x) = b1 (1/2 - 1/(1 + exp(b2 (x - b3)))) + b4`` is fitted to
    (predictions, targets) by least squares and PLCC is computed between
    ``g(predictions)`` and the targets.  Returns ``(plcc, params, degenerate)``;
    on zero-variance inputs or a failed fit the raw Pearson value is returned
    with ``degenerate=True``.
    """
    p, t = _check_lengths(predictions, targets, minimum=5)
    if _degenerate(p) or _degenerate(t):
        return 0.0, None, True
    init = np.array(
        [t.max() - t.min(), 1.0 / max(np.std(p), 1e-12), p.mean(), t.mean()],
        dtype=np.float64,
    )
    try:
        params, _ = optimize.curve_fit(_logistic, p, t, p0=init, maxfev=20000)
        fitted = _logistic(p, *params)
        if not np.all(np.isfinite(fitted)) or _degenerate(fitted):
            return pearson(p, t), None, True
        return pearson(fitted, t), np.asarray(params), False
    except (RuntimeError, optimize.OptimizeWarning, FloatingPointError):
        return pearson(p, t), None, True


def linear_calibration(train_predictions, train_targets):
    """Least-squares affine remap (a, b) fitted only on training data.

    Constant predictions degrade to ``(0, mean(train_targets))``.  The fitted
    parameters are meant to be frozen and applied to held-out predictions;
    test targets never participate.
    """
    p, t = _check_lengths(train_predictions, train_targets)
    if _degenerate(p):
        return 0.0, float(np.mean(t))
    a, b = np.polyfit(p, t, deg=1)
    return float(a), float(b)


def trivial_predictor(train_targets, kind="mean"):
    """Constant predictor equal to the train mean or median."""
    t = np.asarray(train_targets, dtype=np.float64).reshape(-1)
    if len(t) == 0:
        raise ValueError("trivial_predictor: empty training targets")
    if kind == "mean":
        return float(np.mean(t))
    if kind == "median":
        return float(np.median(t))
    raise ValueError(f"unknown trivial predictor kind {kind!r}")


def compute_metrics(predictions, targets):
    """Assemble a full MetricsReport for one run."""
    p, t = _check_lengths(predictions, targets, minimum=1)
    degenerate = len(p) >= 2 and (_degenerate(p) or _degenerate(t))
    raw_plcc = pearson(p, t) if len(p) >= 2 else 0.0
    if len(p) >= 5:
        fitted_plcc, params, fit_degenerate = logistic_fit_plcc(p, t)
    else:
        fitted_plcc, params, fit_degenerate = raw_plcc, None, len(p) < 2
    return MetricsReport(
        plcc=fitted_plcc,
        srcc=spearman(p, t) if len(p) >= 2 else 0.0,
        krcc=kendall(p, t) if len(p) >= 2 else 0.0,
        mae=mae(p, t),
        rmse=rmse(p, t),
        n=len(p),
        plcc_raw=raw_plcc,
        logistic_params=params,
        degenerate=bool(degenerate or fit_degenerate),
    )


AGGREGATE_FIELDS = ("plcc", "srcc", "krcc", "mae", "rmse")


def aggregate_seed_runs(reports):
    """Per-metric mean and population standard deviation across seed runs."""
    if not reports:
        raise AggregationError("no reports to aggregate")
    out = {}
    for name in AGGREGATE_FIELDS:
        values = []
        for rep in reports:
            value = getattr(rep, name, None) if not isinstance(rep, dict) else rep.get(name)
            if value is None:
                raise AggregationError(f"report missing metric field {name!r}")
            values.append(float(value))
        arr = np.asarray(values)
        out[name] = (float(arr.mean()), float(arr.std()))
    return out


def format_mean_std(pair, digits=3):
    mean_v, std_v = pair
    return f"{mean_v:.{digits}f}±{std_v:.{digits}f}"
