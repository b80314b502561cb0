"""Extended handling diagram: velocity-dependent odd polynomial steering deviation.

The steering deviation is modelled as ``(k_v1 v + k_v0)(k_a3 a^3 + k_a1 a)``.
Dividing by ``a`` and substituting ``x = a^2``, ``y = v`` turns it into the
bilinear surface ``z = kt_v1a3 x y + kt_a3 x + kt_v1a1 y + kt_a1``, which is
fitted by ordinary least squares.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from ffsteer.controllers.base import FeedforwardController, FfInput, MIN_VX
from ffsteer.errors import RankDeficient

_COND_LIMIT = 1e10


@dataclass(frozen=True)
class EhdSurface:
    kt_v1a3: float = 0.0
    kt_a3: float = 0.0
    kt_v1a1: float = 0.0
    kt_a1: float = 0.0

    def coefficients(self) -> np.ndarray:
        return np.array([self.kt_v1a3, self.kt_a3, self.kt_v1a1, self.kt_a1])

    def secant_gradient(self, a_y, v_x):
        """z = delta_dev / a_y, the mean understeer gradient up to ``a_y``."""
        x = np.square(a_y)
        return self.kt_v1a3 * x * v_x + self.kt_a3 * x + self.kt_v1a1 * v_x + self.kt_a1

    def delta_dev(self, a_y, v_x):
        return a_y * self.secant_gradient(a_y, v_x)

    def factored(self) -> dict:
        """Closest rank-1 factorisation into (k_v1, k_v0) and (k_a3, k_a1).

        The product form has one degree of freedom less than the bilinear
        surface; ``rank1_residual`` is the Frobenius norm of what the rank-1
        approximation drops. The split of scale between the two factors is
        arbitrary and fixed here by giving them equal norm.
        """
        m = np.array([[self.kt_v1a3, self.kt_a3], [self.kt_v1a1, self.kt_a1]])
        u, s, vt = np.linalg.svd(m)
        a = math.sqrt(s[0]) * u[:, 0]
        b = math.sqrt(s[0]) * vt[0]
        if b[1] < 0:
            a, b = -a, -b
        return {
            "k_a3": float(a[0]),
            "k_a1": float(a[1]),
            "k_v1": float(b[0]),
            "k_v0": float(b[1]),
            "rank1_residual": float(s[1]),
        }


@dataclass(frozen=True)
class EhdFit:
    surface: EhdSurface
    residual_rms: float
    n_samples: int

    def to_dict(self) -> dict:
        d = asdict(self.surface)
        d["residual_rms"] = self.residual_rms
        d["n_samples"] = self.n_samples
        return d

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def from_dict(cls, d: dict) -> "EhdFit":
        surface = EhdSurface(float(d["kt_v1a3"]), float(d["kt_a3"]), float(d["kt_v1a1"]), float(d["kt_a1"]))
        return cls(surface, float(d.get("residual_rms", float("nan"))), int(d.get("n_samples", 0)))

    @classmethod
    def from_json(cls, path: str | Path) -> "EhdFit":
        return cls.from_dict(json.loads(Path(path).read_text()))


def ff_ehd(inp: FfInput, surface: EhdSurface, wheelbase: float) -> float:
    """delta_ack + surface deviation; stateless."""
    v = max(inp.v_x, MIN_VX)
    a = inp.a_y_target
    x = a * a
    z = surface.kt_v1a3 * x * v + surface.kt_a3 * x + surface.kt_v1a1 * v + surface.kt_a1
    return a * wheelbase / (v * v) + a * z


def _regressors(a_y: np.ndarray, v_x: np.ndarray) -> np.ndarray:
    x = a_y * a_y
    return np.column_stack([x * v_x, x, v_x, np.ones_like(x)])


def _solve_ols(X: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Least squares via column-equilibrated normal equations.

    Cholesky is used when the scaled Gram matrix is well conditioned;
    otherwise fall back to an SVD-based solve.
    """
    scale = np.linalg.norm(X, axis=0)
    if np.any(scale == 0.0):
        raise RankDeficient("a regressor column is identically zero")
    Xs = X / scale
    if np.linalg.matrix_rank(Xs) < X.shape[1]:
        raise RankDeficient("regressor matrix is rank deficient (single speed or single |a_y| level?)")
    gram = Xs.T @ Xs
    rhs = Xs.T @ z
    if np.linalg.cond(gram) < _COND_LIMIT:
        coef = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
    else:
        coef = np.linalg.lstsq(Xs, z, rcond=None)[0]
    return coef / scale


def fit_ehd(a_y, v_x, delta_dev, min_ay: float = 1.0) -> EhdFit:
    """Fit the four bilinear coefficients to handling-diagram samples.

    Samples with ``|a_y| < min_ay`` are dropped; the regression target is
    ``z = delta_dev / a_y``. ``residual_rms`` is measured on the steering
    deviation itself, not on ``z``.

    Raises:
        RankDeficient: fewer than four usable samples or collinear regressors.
    """
    a_y = np.asarray(a_y, dtype=float)
    v_x = np.asarray(v_x, dtype=float)
    delta_dev = np.asarray(delta_dev, dtype=float)
    keep = np.abs(a_y) >= min_ay
    a, v, d = a_y[keep], v_x[keep], delta_dev[keep]
    if len(a) < 4:
        raise RankDeficient(f"need >= 4 samples with |a_y| >= {min_ay}, got {len(a)}")
    X = _regressors(a, v)
    coef = _solve_ols(X, d / a)
    surface = EhdSurface(*(float(c) for c in coef))
    resid = surface.delta_dev(a, v) - d
    return EhdFit(surface, float(np.sqrt(np.mean(resid**2))), int(len(a)))


def fit_constant_gradient(a_y, delta_dev, min_ay: float = 1.0) -> tuple[float, float]:
    """Best constant understeer gradient on the same samples; returns (k, rms)."""
    a_y = np.asarray(a_y, dtype=float)
    delta_dev = np.asarray(delta_dev, dtype=float)
    keep = np.abs(a_y) >= min_ay
    a, d = a_y[keep], delta_dev[keep]
    z = d / a
    # same loss as fit_ehd (OLS in z) restricted to the constant model
    k = float(np.mean(z))
    return k, float(np.sqrt(np.mean((k * a - d) ** 2)))


class EhdFF(FeedforwardController):
    name = "ehd"

    def __init__(self, surface: EhdSurface, wheelbase: float):
        self.surface = surface
        self.wheelbase = wheelbase

    def command(self, inp: FfInput, dt: float) -> float:
        return ff_ehd(inp, self.surface, self.wheelbase)
