"""Two-bubble-plus-mean-field approximate solution and its residual rates.

The approximation couples a scale-d1 regular bubble (a = 2), a scale-d2
singular bubble (a = 4), and the mean-field profile z:

    W1 = P w1 - P w2 / 2 + z,       W2 = P w2 - P w1 / 2 - z / 2,

with concentration scales tied to the coupling strength lam:

    d1 = sqrt((rho - 4*pi) * lam / int e^z) * exp(6*pi*H00 + z(0)/4) / 8,
    d2 = lam^(1/4) * exp(3*pi*H00 - z(0)/8) / 2.

The mismatch fields

    E1 = 2*rho e^W1/int e^W1 - e^w1 - 2*(rho-4*pi) e^z/int e^z,
    E2 = 2*lam e^W2 - |x|^2 e^w2,

decay like lam^((2-p)/(2p)) and lam^((2-p)/(4p)) in L^p, and the full
residual of the system decays like lam^((2-p)/(4p)); sweeps over lam fit
these exponents.  All exponentials are evaluated in shifted log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bubbles import BubbleParams, bubble_radial, min_radial_scale, projected_bubble, regular_part_at_origin
from .domain import Grid, symmetrize
from .elliptic import norms, operator
from .fitting import LineFit, fit_loglog
from .meanfield import MeanFieldSolution

__all__ = [
    "DELTA1_EXPONENT",
    "DELTA2_EXPONENT",
    "AnsatzBundle",
    "ResidualReport",
    "concentration_scales",
    "assemble_ansatz",
    "exp_ratio",
    "scaled_exp",
    "error_fields",
    "residual_fields",
    "residual_sweep",
]

DELTA1_EXPONENT = 0.5
DELTA2_EXPONENT = 0.25

DEFAULT_P_GRID = (1.0, 1.25, 1.5, 1.75, 2.0)


def concentration_scales(lam: float, mf: MeanFieldSolution, h00: float) -> tuple[float, float]:
    """Bubble scales (d1, d2) for coupling lam; d1 ~ sqrt(lam), d2 ~ lam^(1/4)."""
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    z0 = mf.z_at_origin
    d1 = 0.125 * np.sqrt((mf.rho - 4 * np.pi) * lam / mf.mass_integral) * np.exp(
        6 * np.pi * h00 + z0 / 4
    )
    d2 = 0.5 * lam**0.25 * np.exp(3 * np.pi * h00 - z0 / 8)
    return float(d1), float(d2)


@dataclass
class AnsatzBundle:
    """Everything entering the approximate solution at one lam."""

    grid: Grid
    mf: MeanFieldSolution
    lam: float
    rho: float
    delta1: float
    delta2: float
    w1: np.ndarray
    w2: np.ndarray
    h_field: np.ndarray
    h00: float
    pw1: np.ndarray = field(repr=False, default=None)
    pw2: np.ndarray = field(repr=False, default=None)


def assemble_ansatz(grid: Grid, mf: MeanFieldSolution, lam: float) -> AnsatzBundle:
    """Build the bundle; errors name the smallest lam the grid can resolve."""
    h_field, h00 = regular_part_at_origin(grid)
    d1, d2 = concentration_scales(lam, mf, h00)
    scale = min_radial_scale(grid)
    if d1 < 2 * scale:
        lam_min = lam * (2 * scale / d1) ** 2
        raise ValueError(
            f"grid resolves neither bubble at lam={lam:g} (d1={d1:g} < {2*scale:g}); "
            f"smallest admissible lam on this grid is {lam_min:.3e}"
        )
    pw1 = projected_bubble(grid, BubbleParams(2.0, d1))
    pw2 = projected_bubble(grid, BubbleParams(4.0, d2))
    w1 = symmetrize(grid, pw1 - 0.5 * pw2 + mf.z)
    w2 = symmetrize(grid, pw2 - 0.5 * pw1 - 0.5 * mf.z)
    return AnsatzBundle(
        grid=grid, mf=mf, lam=lam, rho=mf.rho, delta1=d1, delta2=d2,
        w1=w1, w2=w2, h_field=h_field, h00=h00, pw1=pw1, pw2=pw2,
    )


def exp_ratio(grid: Grid, values: np.ndarray) -> tuple[np.ndarray, float]:
    """(e^u / int e^u, log int e^u), computed with the max shifted out."""
    m = float(values.max())
    e = np.exp(values - m)
    q = float(grid.weights @ e)
    return e / q, m + np.log(q)


def scaled_exp(grid: Grid, log_scale: float, values: np.ndarray) -> np.ndarray:
    """exp(log_scale + u) elementwise, guarding against overflow."""
    peak = log_scale + float(values.max())
    if peak > 700.0:
        raise OverflowError(
            f"exp overflow (peak exponent {peak:.1f}); lam too small for this grid"
        )
    return np.exp(log_scale + values)


def error_fields(bundle: AnsatzBundle) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise mismatch fields (E1, E2) of the two equations."""
    g, lam, rho = bundle.grid, bundle.lam, bundle.rho
    r = g.r
    dens1, _ = exp_ratio(g, bundle.w1)
    dens_z, _ = exp_ratio(g, bundle.mf.z)
    ew1 = np.exp(bubble_radial(BubbleParams(2.0, bundle.delta1), r))
    e1 = 2 * rho * dens1 - ew1 - 2 * (rho - 4 * np.pi) * dens_z
    xew2 = r**2 * np.exp(bubble_radial(BubbleParams(4.0, bundle.delta2), r))
    e2 = 2 * scaled_exp(g, np.log(lam), bundle.w2) - xew2
    return e1, e2


def residual_fields(bundle: AnsatzBundle) -> tuple[np.ndarray, np.ndarray]:
    """Strong-form residuals (R1, R2) of the approximate solution.

    The Laplacian is the assembled stencil (extended precision), so these
    include discretization error on top of the modelling error; boundary
    entries are zero.
    """
    g, lam, rho = bundle.grid, bundle.lam, bundle.rho
    op = operator(g)
    ni = g.n_interior
    dens1, _ = exp_ratio(g, bundle.w1)
    lam_e2 = scaled_exp(g, np.log(lam), bundle.w2)
    r1 = np.zeros(g.n_nodes)
    r2 = np.zeros(g.n_nodes)
    wl = g.weights[:ni].astype(np.longdouble)
    r1[:ni] = np.asarray(
        op.stiffness_apply_precise(bundle.w1)[:ni] / wl, dtype=float
    ) - 2 * rho * dens1[:ni] + lam_e2[:ni]
    r2[:ni] = np.asarray(
        op.stiffness_apply_precise(bundle.w2)[:ni] / wl, dtype=float
    ) - 2 * lam_e2[:ni] + rho * dens1[:ni]
    return r1, r2


def mass_expansion_gap(bundle: AnsatzBundle) -> float:
    """|int e^W1 - rho/(rho-4pi) int e^z| / sqrt(lam); O(1) when resolved."""
    _, log_q = exp_ratio(bundle.grid, bundle.w1)
    target = bundle.rho / (bundle.rho - 4 * np.pi) * bundle.mf.mass_integral
    return float(abs(np.exp(log_q) - target) / np.sqrt(bundle.lam))


@dataclass
class ResidualReport:
    """Per-lam L^p norms of the mismatch and residual fields plus rate fits."""

    lams: list[float]
    p_grid: list[float]
    e1_norms: np.ndarray  # (n_lam, n_p)
    e2_norms: np.ndarray
    r1_norms: np.ndarray
    r2_norms: np.ndarray
    r_norms: np.ndarray   # component sum, the system residual
    cross_checks: list[float]  # ||R1 - (-E1 + E2/2)||_1 per lam
    mass_gaps: list[float]
    slopes: dict[str, LineFit]

    def rows(self):
        for i, lam in enumerate(self.lams):
            for j, p in enumerate(self.p_grid):
                yield {
                    "lambda": lam, "p": p,
                    "E1_norm": float(self.e1_norms[i, j]),
                    "E2_norm": float(self.e2_norms[i, j]),
                    "R1_norm": float(self.r1_norms[i, j]),
                    "R2_norm": float(self.r2_norms[i, j]),
                }

    def summary_dict(self) -> dict:
        return {
            "lams": self.lams,
            "p_grid": self.p_grid,
            "cross_checks": self.cross_checks,
            "mass_gaps": self.mass_gaps,
            "slopes": {k: v.to_dict() for k, v in self.slopes.items()},
        }


def residual_sweep(
    grid: Grid,
    mf: MeanFieldSolution,
    lams: np.ndarray,
    p_grid=DEFAULT_P_GRID,
) -> ResidualReport:
    """Assemble bundles over a lam schedule and fit the L^1 decay rates."""
    lams = np.asarray(sorted(lams, reverse=True), dtype=float)
    p_grid = list(p_grid)
    shape = (len(lams), len(p_grid))
    tabs = {k: np.zeros(shape) for k in ("e1", "e2", "r1", "r2", "r")}
    cross, gaps = [], []
    for i, lam in enumerate(lams):
        bundle = assemble_ansatz(grid, mf, float(lam))
        e1, e2 = error_fields(bundle)
        r1, r2 = residual_fields(bundle)
        for j, p in enumerate(p_grid):
            tabs["e1"][i, j] = norms(grid, e1, p)[0]
            tabs["e2"][i, j] = norms(grid, e2, p)[0]
            tabs["r1"][i, j] = norms(grid, r1, p)[0]
            tabs["r2"][i, j] = norms(grid, r2, p)[0]
            tabs["r"][i, j] = tabs["r1"][i, j] + tabs["r2"][i, j]
        cross.append(norms(grid, r1 - (-e1 + 0.5 * e2), 1.0)[0])
        gaps.append(mass_expansion_gap(bundle))
    j1 = p_grid.index(1.0)
    slopes = {
        "E1_p1": fit_loglog(lams, tabs["e1"][:, j1]),
        "E2_p1": fit_loglog(lams, tabs["e2"][:, j1]),
        "R_p1": fit_loglog(lams, tabs["r"][:, j1]),
    }
    return ResidualReport(
        lams=[float(x) for x in lams], p_grid=p_grid,
        e1_norms=tabs["e1"], e2_norms=tabs["e2"],
        r1_norms=tabs["r1"], r2_norms=tabs["r2"], r_norms=tabs["r"],
        cross_checks=cross, mass_gaps=gaps, slopes=slopes,
    )
