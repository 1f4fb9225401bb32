"""Cubic decay fits and the statistics derived from them.

Fits use the monomial basis ``f(t) = a0 + a1 t + a2 t^2 + a3 t^3`` with
ordinary (unweighted) least squares.  The relative fitting error is
``||residuals||_2 / ||f||_2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEGREE = 3


class FitError(ValueError):
    pass


class BracketError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    coeffs: np.ndarray  # a0..a3
    covariance: np.ndarray  # 4x4
    relative_fit_error: float
    n_points: int

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def __getitem__(self, k: int) -> float:
        return float(self.coeffs[k])


@dataclass(frozen=True)
class Ratio:
    value: float
    uncertainty: float
    defined: bool = True
    message: str = ""

    def __str__(self) -> str:
        if not self.defined:
            return self.message
        return f"{self.value:.4g} +/- {self.uncertainty:.2g}"


def _split(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("points must be a sequence of (t, f) pairs")
    return arr[:, 0], arr[:, 1]


def fit_cubic(points: Sequence[tuple[float, float]]) -> FitResult:
    t, f = _split(points)
    if len(np.unique(t)) < DEGREE + 2:
        raise FitError(
            f"cubic fit needs at least {DEGREE + 2} distinct t values, got {len(np.unique(t))}"
        )
    design = np.vander(t, DEGREE + 1, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(design, f, rcond=None)
    if rank < DEGREE + 1:
        raise FitError("design matrix is rank deficient")
    resid = f - design @ coeffs
    dof = len(t) - (DEGREE + 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    cov = 0.5 * (cov + cov.T)
    norm_f = float(np.linalg.norm(f))
    rel = float(np.linalg.norm(resid)) / norm_f if norm_f else 0.0
    return FitResult(coeffs, cov, rel, len(t))


def cubic_from_coeffs(coeffs: Sequence[float]) -> FitResult:
    """An exact (zero-covariance) fit, e.g. from published coefficients."""
    return FitResult(np.asarray(coeffs, dtype=float), np.zeros((4, 4)), 0.0, 0)


def first_order_ratio(fa: FitResult, fb: FitResult) -> Ratio:
    """``a1(fa) / a1(fb)`` with first-order error propagation.

    The ratio is reported undefined when the denominator's linear
    coefficient lies within ten standard errors of zero.
    """
    a, b = fa[1], fb[1]
    sa, sb = fa.stderr[1], fb.stderr[1]
    if not abs(b) > 10.0 * sb or b == 0.0:
        return Ratio(math.nan, math.nan, False,
                     "ratio undefined: denominator consistent with 0")
    r = a / b
    unc = math.hypot(sa / b, a * sb / b**2)
    return Ratio(r, unc)


def scale_fit(exp_points, ideal_points) -> tuple[float, float]:
    """Least-squares ``A`` in ``f_exp = A f_ideal`` (line through the origin)."""
    te, fe = _split(exp_points)
    ti, fi = _split(ideal_points)
    if te.shape != ti.shape or not np.allclose(te, ti, rtol=0, atol=1e-12):
        raise ValueError("experimental and ideal data must share the same t grid")
    denom = float(fi @ fi)
    if denom == 0:
        raise ValueError("ideal fidelities are all zero")
    a = float(fe @ fi) / denom
    if len(fe) < 2:
        return a, math.nan
    resid = fe - a * fi
    sigma2 = float(resid @ resid) / (len(fe) - 1)
    return a, math.sqrt(sigma2 / denom)


def crossover_time(fa: FitResult, fb: FitResult, bracket: tuple[float, float],
                   tol: float = 1e-6) -> float:
    """Root of ``fa(t) - fb(t)`` inside ``bracket`` by bisection."""
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise BracketError(f"invalid bracket ({lo}, {hi})")
    diff = np.asarray(fa.coeffs) - np.asarray(fb.coeffs)
    if not np.any(diff):
        raise BracketError("fits are identical; no crossover")

    def g(t):
        return float(np.polynomial.polynomial.polyval(t, diff))

    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    if (g_lo > 0) == (g_hi > 0):
        raise BracketError(f"fits do not cross on ({lo}, {hi})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid == 0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_report(name: str, fit: FitResult) -> str:
    a, e = fit.coeffs, fit.stderr
    lines = [
        f"[{name}]",
        "  f(t) = " + " ".join(
            f"{'+' if a[k] >= 0 else '-'} {abs(a[k]):.6g}{'' if k == 0 else ' t' if k == 1 else f' t^{k}'}"
            for k in range(4)
        ).lstrip("+ "),
        "  coeff   " + " ".join(f"a{k}={a[k]:.12g}" for k in range(4)),
        "  stderr  " + " ".join(f"a{k}={e[k]:.6g}" for k in range(4)),
        f"  relative fit error {fit.relative_fit_error:.6g} ({100 * fit.relative_fit_error:.3g}%)",
        f"  points {fit.n_points}",
    ]
    return "\n".join(lines)


def fit_csv(fit: FitResult) -> str:
    a = fit.coeffs
    vals = [*a, fit.relative_fit_error]
    return "a0,a1,a2,a3,rel_err\n" + ",".join(format(float(v), ".12g") for v in vals) + "\n"
