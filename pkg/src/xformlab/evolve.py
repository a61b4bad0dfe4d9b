"""Forward solver for sigma*u_t = a(x)*u_xx - p(x)*u plus trace extraction
and PDE-residual measurement.

The scheme is the theta=1/2 (Crank-Nicolson) method: one complex
tridiagonal solve per step, unconditionally stable for Re(sigma) >= 0,
second order in both steps.  Backward-parabolic runs (Re sigma < 0) are
rejected: the uniqueness theory covers them but forward simulation of
that regime is ill-posed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import tridiag_march
from .corelab import (
    CauchyTrace,
    CoefficientField,
    EvolutionField,
    Role,
    Sigma,
    SpaceGrid,
    TimeGrid,
    format_float,
)
from .errors import ValidationError


@dataclass(frozen=True)
class DirichletZero:
    pass


@dataclass(frozen=True)
class NeumannZero:
    pass


@dataclass(frozen=True)
class PrescribedTrace:
    series: np.ndarray

    def __post_init__(self):
        series = np.array(self.series, dtype=np.complex128, copy=True)
        series.setflags(write=False)
        object.__setattr__(self, "series", series)


BoundaryCondition = DirichletZero | NeumannZero | PrescribedTrace


@dataclass(frozen=True)
class BoundaryConditionSpec:
    """Left/right boundary treatment.  NeumannZero on the left realizes the
    vanishing-slope data scenario; the right side defaults to DirichletZero
    everywhere in this package so paired experiments stay comparable."""

    left: BoundaryCondition = DirichletZero()
    right: BoundaryCondition = DirichletZero()


def _check_admissible_sigma(sigma: Sigma) -> complex:
    if sigma.re < 0:
        raise ValidationError(
            f"sigma={sigma.value} has negative real part: backward evolution "
            "is not forward well-posed"
        )
    return sigma.value


def _shared_grid(*fields: CoefficientField) -> SpaceGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if not f.grid.matches(grid):
            raise ValidationError("coefficient fields live on different grids")
    return grid


def _bc_series(bc: BoundaryCondition, tgrid: TimeGrid) -> np.ndarray | None:
    if isinstance(bc, PrescribedTrace):
        if bc.series.shape != (tgrid.m + 1,):
            raise ValidationError(
                f"prescribed trace length {bc.series.shape[0]} does not match "
                f"time grid ({tgrid.m + 1})"
            )
        return bc.series
    return None


def _assemble(sigma: complex, a, p, bc: BoundaryConditionSpec, h: float, dt: float,
              tgrid: TimeGrid):
    """Build the tridiagonal M1/M0 systems and per-step extra right sides."""
    n1 = a.shape[0]
    s = sigma / dt
    lam = a / (2.0 * h * h)

    dl = np.zeros(n1, dtype=np.complex128)
    dd = np.zeros(n1, dtype=np.complex128)
    du = np.zeros(n1, dtype=np.complex128)
    el = np.zeros(n1, dtype=np.complex128)
    ed = np.zeros(n1, dtype=np.complex128)
    eu = np.zeros(n1, dtype=np.complex128)

    dl[1:-1] = -lam[1:-1]
    dd[1:-1] = s + 2.0 * lam[1:-1] + 0.5 * p[1:-1]
    du[1:-1] = -lam[1:-1]
    el[1:-1] = lam[1:-1]
    ed[1:-1] = s - 2.0 * lam[1:-1] - 0.5 * p[1:-1]
    eu[1:-1] = lam[1:-1]

    extra = np.zeros((tgrid.m, n1), dtype=np.complex128)

    for side, j, joff in (("left", 0, 1), ("right", n1 - 1, n1 - 2)):
        bc_side = bc.left if side == "left" else bc.right
        if isinstance(bc_side, NeumannZero):
            # second-order ghost elimination: mirror node across the boundary
            dd[j] = s + 2.0 * lam[j] + 0.5 * p[j]
            ed[j] = s - 2.0 * lam[j] - 0.5 * p[j]
            if side == "left":
                du[j] = -2.0 * lam[j]
                eu[j] = 2.0 * lam[j]
            else:
                dl[j] = -2.0 * lam[j]
                el[j] = 2.0 * lam[j]
        else:
            dd[j] = 1.0
            series = _bc_series(bc_side, tgrid)
            if series is not None:
                extra[:, j] = series[1:]
    return dl, dd, du, el, ed, eu, extra


def pde_rows_mask(bc: BoundaryConditionSpec, n1: int) -> np.ndarray:
    """Boolean mask of rows where the evolution equation (and hence the
    potential p) enters the scheme."""
    mask = np.ones(n1, dtype=bool)
    if not isinstance(bc.left, NeumannZero):
        mask[0] = False
    if not isinstance(bc.right, NeumannZero):
        mask[-1] = False
    return mask


def forward_solve(sigma: Sigma, a: CoefficientField, p: CoefficientField,
                  b: CoefficientField, bc: BoundaryConditionSpec,
                  tgrid: TimeGrid) -> EvolutionField:
    """Evolve the initial data b over the time grid.

    Parameters
    ----------
    sigma : Sigma
        Evolution constant with Re >= 0.
    a, p, b : CoefficientField
        Diffusion, potential, and initial data on one shared grid.
    bc : BoundaryConditionSpec
        Left/right boundary treatment.
    tgrid : TimeGrid
        Time axis; one tridiagonal solve per step.
    """
    s = _check_admissible_sigma(sigma)
    if a.role is not Role.DIFFUSION:
        raise ValidationError(f"expected diffusion role for a, got {a.role}")
    grid = _shared_grid(a, p, b)
    dl, dd, du, el, ed, eu, extra = _assemble(
        s, a.values, p.values, bc, grid.h, tgrid.dt, tgrid
    )
    traj = tridiag_march(dl, dd, du, el, ed, eu, extra, b.values.astype(np.complex128))
    return EvolutionField(grid, tgrid, traj)


def extract_cauchy_trace(u: EvolutionField) -> CauchyTrace:
    """Boundary pair (u(t,0), du/dx(t,0)); the slope uses the one-sided
    second-order stencil (-3*u0 + 4*u1 - u2) / (2h)."""
    h = u.sgrid.h
    vals = u.values
    ux0 = (-3.0 * vals[:, 0] + 4.0 * vals[:, 1] - vals[:, 2]) / (2.0 * h)
    return CauchyTrace(u.tgrid, vals[:, 0], ux0)


def _interior_terms(u: EvolutionField, sigma: Sigma, a: CoefficientField,
                    p: CoefficientField):
    vals = u.values
    dt = u.tgrid.dt
    h = u.sgrid.h
    ut = (vals[2:, 1:-1] - vals[:-2, 1:-1]) / (2.0 * dt)
    uxx = (vals[1:-1, 2:] - 2.0 * vals[1:-1, 1:-1] + vals[1:-1, :-2]) / (h * h)
    term_t = sigma.value * ut
    term_x = a.values[1:-1] * uxx
    term_p = p.values[1:-1] * vals[1:-1, 1:-1]
    return term_t, term_x, term_p


def pde_residual(u: EvolutionField, sigma: Sigma, a: CoefficientField,
                 p: CoefficientField) -> float:
    """Max over interior nodes of |sigma*D_t u - a*D_x^2 u + p*u| with
    centered stencils."""
    term_t, term_x, term_p = _interior_terms(u, sigma, a, p)
    return float(np.max(np.abs(term_t - term_x + term_p)))


def residual_scale(u: EvolutionField, sigma: Sigma, a: CoefficientField,
                   p: CoefficientField) -> float:
    """Magnitude of the equation's terms; the natural yardstick for
    pde_residual tolerances."""
    term_t, term_x, term_p = _interior_terms(u, sigma, a, p)
    return float(np.max(np.abs(term_t) + np.abs(term_x) + np.abs(term_p)))


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def evolution_to_csv(u: EvolutionField, path) -> None:
    lines = ["t,x,re,im"]
    for k, t in enumerate(u.tgrid.nodes):
        ts = format_float(t)
        for j, x in enumerate(u.sgrid.nodes):
            v = u.values[k, j]
            lines.append(f"{ts},{format_float(x)},{format_float(v.real)},{format_float(v.imag)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cauchy_to_csv(trace: CauchyTrace, path) -> None:
    lines = ["t,re_u0,im_u0,re_ux0,im_ux0"]
    for t, v, w in zip(trace.tgrid.nodes, trace.u0, trace.ux0):
        lines.append(
            f"{format_float(t)},{format_float(v.real)},{format_float(v.imag)},"
            f"{format_float(w.real)},{format_float(w.imag)}"
        )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
