"""Least-squares fits used by the rate and norm-growth diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LineFit", "fit_line", "fit_loglog", "fit_log_abscissa"]


@dataclass
class LineFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    fit_residual: float  # rms residual of the fit
    data_range: float    # max - min of the ordinates

    @property
    def slope_ci95(self) -> tuple[float, float]:
        half = 1.96 * self.slope_stderr
        return (self.slope - half, self.slope + half)

    def to_dict(self) -> dict:
        lo, hi = self.slope_ci95
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "slope_ci95": [lo, hi],
            "fit_residual": self.fit_residual,
            "data_range": self.data_range,
        }


def fit_line(x: np.ndarray, y: np.ndarray) -> LineFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 points to fit a line")
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    ss_res = float((resid**2).sum())
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    stderr = np.sqrt(ss_res / max(n - 2, 1) / sxx)
    return LineFit(
        slope=slope, intercept=intercept, r_squared=r2,
        slope_stderr=float(stderr),
        fit_residual=float(np.sqrt(ss_res / n)),
        data_range=float(y.max() - y.min()),
    )


def fit_loglog(x: np.ndarray, y: np.ndarray) -> LineFit:
    """Power-law fit y ~ x^slope via least squares in log-log space."""
    return fit_line(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)))


def fit_log_abscissa(x: np.ndarray, y: np.ndarray) -> LineFit:
    """Fit y ~ a + b*|log x| (norm-growth model for shrinking x)."""
    return fit_line(np.abs(np.log(np.asarray(x, float))), np.asarray(y, float))
