"""Error metrics and signal analyses used by the evaluation harness."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
from scipy import signal

from ffsteer.errors import ZeroVariance

DEFAULT_RHO_MIN = 0.003
DEFAULT_JERK_CUTOFF_HZ = 10.0


@dataclass(frozen=True)
class MetricSet:
    """RMSE, MAE and fraction of variance unexplained over ``n`` samples."""

    rmse: float
    mae: float
    fvu: float
    n: int

    def to_dict(self) -> dict:
        d = asdict(self)
        # JSON has no NaN; an undefined FVU is reported as null
        if not math.isfinite(d["fvu"]):
            d["fvu"] = None
        return d


def compute_metrics(y_true, y_pred, allow_zero_variance: bool = False) -> MetricSet:
    """Compare a prediction against ground truth.

    FVU uses the mean of ``y_true`` itself as the reference predictor.

    Args:
        y_true: Ground-truth series.
        y_pred: Predicted series of the same length.
        allow_zero_variance: Return ``fvu = nan`` instead of raising when
            ``y_true`` is constant. Used for pure error signals where only
            RMSE and MAE are meaningful.

    Raises:
        ValueError: on length mismatch or fewer than two samples.
        ZeroVariance: if ``y_true`` is constant and ``allow_zero_variance`` is false.
    """
    y = np.asarray(y_true, dtype=float)
    yh = np.asarray(y_pred, dtype=float)
    if y.shape != yh.shape or y.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-D and of equal length")
    if len(y) < 2:
        raise ValueError("need at least two samples")
    r = yh - y
    sse = float(np.sum(r * r))
    dev = y - np.mean(y)
    sst = float(np.sum(dev * dev))
    if sst == 0.0:
        if not allow_zero_variance:
            raise ZeroVariance("y_true is constant; FVU is undefined")
        fvu = float("nan")
    else:
        fvu = sse / sst
    return MetricSet(
        rmse=math.sqrt(sse / len(y)),
        mae=float(np.mean(np.abs(r))),
        fvu=fvu,
        n=int(len(y)),
    )


def cornering_mask(rho, rho_min: float = DEFAULT_RHO_MIN) -> np.ndarray:
    return np.abs(np.asarray(rho, dtype=float)) >= rho_min


def cornering_filter(records: Mapping[str, np.ndarray], rho_min: float = DEFAULT_RHO_MIN, key: str = "rho") -> dict:
    """Keep the records whose kinematic curvature satisfies ``|rho| >= rho_min``.

    ``records`` is a column mapping of equal-length arrays; ``key`` names
    the curvature column.
    """
    mask = cornering_mask(records[key], rho_min)
    return {k: np.asarray(v)[mask] for k, v in records.items()}


def direction_normalized_error(delta_pred, delta_true) -> np.ndarray:
    """sgn(delta) (delta_pred - delta): positive means too much steering."""
    delta_true = np.asarray(delta_true, dtype=float)
    return np.sign(delta_true) * (np.asarray(delta_pred, dtype=float) - delta_true)


@dataclass(frozen=True)
class XcorrResult:
    lag: float
    peak: float
    lags: np.ndarray
    correlation: np.ndarray


def xcorr_lag(a, b, dt: float, max_lag: float) -> XcorrResult:
    """Normalised cross-correlation of two equal-length series.

    The correlation at lag ``k`` samples is ``sum_t a[t] b[t + k]`` over
    the overlap, divided by the full-length norms of the mean-removed
    series, so ``b = a`` peaks at exactly 1. A positive lag means ``b``
    follows ``a``. Ties go to the smallest ``|lag|``.

    Raises:
        ZeroVariance: if either series is constant.
        ValueError: if lengths differ or ``max_lag`` is not below half the duration.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    n = len(a)
    k_max = int(round(max_lag / dt))
    if k_max < 0 or k_max >= n / 2:
        raise ValueError("max_lag must be below half the series duration")
    a = a - a.mean()
    b = b - b.mean()
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        raise ZeroVariance("cross-correlation of a constant series")
    lags = np.arange(-k_max, k_max + 1)
    corr = np.empty(len(lags))
    for i, k in enumerate(lags):
        if k >= 0:
            corr[i] = np.dot(a[: n - k], b[k:])
        else:
            corr[i] = np.dot(a[-k:], b[: n + k])
    corr /= na * nb
    peak = corr.max()
    best = min(lags[corr == peak], key=lambda k: (abs(k), -k))
    return XcorrResult(lag=float(best * dt), peak=float(peak), lags=lags * dt, correlation=corr)


def lowpass_filter(x, dt: float, cutoff_hz: float = DEFAULT_JERK_CUTOFF_HZ, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth low-pass; returns the input unchanged if the cutoff is at or above Nyquist."""
    x = np.asarray(x, dtype=float)
    nyq = 0.5 / dt
    if cutoff_hz <= 0 or cutoff_hz >= nyq:
        return x.copy()
    sos = signal.butter(order, cutoff_hz / nyq, output="sos")
    padlen = min(3 * (2 * len(sos) + 1), len(x) - 1)
    return signal.sosfiltfilt(sos, x, padlen=padlen)


def lateral_jerk_rms(a_y, dt: float, cutoff_hz: float = DEFAULT_JERK_CUTOFF_HZ) -> float:
    """RMS of the central-difference derivative of the low-passed ``a_y``."""
    a_y = np.asarray(a_y, dtype=float)
    if len(a_y) < 3:
        raise ValueError("need at least three samples")
    jerk = np.gradient(lowpass_filter(a_y, dt, cutoff_hz), dt)
    return float(np.sqrt(np.mean(jerk * jerk)))
