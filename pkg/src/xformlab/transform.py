"""Volterra transform v = u + Ku and the discrete intertwining check.

The transformed field of a solution of the p-equation satisfies the
q-equation up to the boundary forcing -a(0) K(x,0) u_x(t,0), with both
boundary traces at x=0 preserved; ``intertwining_residual`` measures all
three defects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corelab import (
    CoefficientField,
    EvolutionField,
    Sigma,
    format_float,
)
from .errors import GateError, ValidationError
from .evolve import extract_cauchy_trace, pde_residual, residual_scale
from .goursat import Kernel

#: pde-residual gate: u must satisfy its own equation to within
#: GATE_FACTOR * (dt^2 + h^2) * (term magnitude)
GATE_FACTOR = 10.0


@dataclass(frozen=True)
class IntertwiningReport:
    interior_residual: float
    trace_gap_value: float
    trace_gap_slope: float
    refinement_ratio: float | None = None


def _row_weights(kernel: Kernel) -> np.ndarray:
    """Trapezoid weights of int_0^{x_i} K(x_i, y) . dy per row, dense."""
    n1 = kernel.tri.n + 1
    h = kernel.tri.h
    w = np.tril(np.full((n1, n1), h))
    idx = np.arange(n1)
    w[idx, idx] = h / 2.0
    w[:, 0] = h / 2.0
    w[0, :] = 0.0
    return w


def apply_kernel(kernel: Kernel, v: np.ndarray) -> np.ndarray:
    """Row-wise (Kv)(x_i) = int_0^{x_i} K(x_i,y) v(y) dy by composite
    trapezoid; the first entry is exactly zero."""
    v = np.asarray(v)
    n1 = kernel.tri.n + 1
    if v.shape != (n1,):
        raise ValidationError(f"vector length {v.shape} does not match grid ({n1},)")
    return (kernel.values * _row_weights(kernel)) @ v


def transform_field(u: EvolutionField, kernel: Kernel) -> EvolutionField:
    """Apply v = u + Ku to every time slice."""
    if not u.sgrid.matches(kernel.tri.base):
        raise ValidationError("evolution field and kernel live on different grids")
    op = kernel.values * _row_weights(kernel)
    values = u.values + u.values @ op.T
    return EvolutionField(u.sgrid, u.tgrid, values)


def intertwining_residual(u: EvolutionField, kernel: Kernel, sigma: Sigma,
                          a: CoefficientField, p: CoefficientField,
                          q: CoefficientField,
                          prior: IntertwiningReport | None = None) -> IntertwiningReport:
    """Defect of sigma*v_t - a*v_xx + q*v = -a(0) K(x,0) u_x(t,0) for
    v = u + Ku, plus the boundary-trace gaps at x=0.

    ``u`` must solve the p-equation: its own centered residual is gated
    at GATE_FACTOR * (dt^2 + h^2) * scale.  Passing the report of a
    coarser run as ``prior`` fills ``refinement_ratio``.
    """
    res_u = pde_residual(u, sigma, a, p)
    scale = residual_scale(u, sigma, a, p)
    gate = GATE_FACTOR * (u.tgrid.dt**2 + u.sgrid.h**2) * scale
    if res_u > gate:
        raise GateError(
            f"input field fails its own pde residual gate: {res_u:.3e} > {gate:.3e} "
            f"(= {GATE_FACTOR:g}*(dt^2+h^2)*scale)"
        )

    v = transform_field(u, kernel)
    ux0 = extract_cauchy_trace(u).ux0
    dt = u.tgrid.dt
    h = u.sgrid.h
    vv = v.values
    vt = (vv[2:, 1:-1] - vv[:-2, 1:-1]) / (2.0 * dt)
    vxx = (vv[1:-1, 2:] - 2.0 * vv[1:-1, 1:-1] + vv[1:-1, :-2]) / (h * h)
    forcing = a.values[0] * np.outer(ux0[1:-1], kernel.values[1:-1, 0])
    resid = (sigma.value * vt - a.values[1:-1] * vxx
             + q.values[1:-1] * vv[1:-1, 1:-1] + forcing)
    interior = float(np.max(np.abs(resid)))

    gap_value = float(np.max(np.abs(vv[:, 0] - u.values[:, 0])))
    vx0 = (-3.0 * vv[:, 0] + 4.0 * vv[:, 1] - vv[:, 2]) / (2.0 * h)
    gap_slope = float(np.max(np.abs(vx0 - ux0)))

    ratio = None
    if prior is not None and interior > 0.0:
        ratio = float(prior.interior_residual / interior)
    return IntertwiningReport(interior, gap_value, gap_slope, ratio)


def data_orthogonality(kernel: Kernel, w: np.ndarray) -> np.ndarray:
    """Profile x -> int_0^x K(x,y) w(y) dy over the grid nodes.

    For coefficient pairs with coinciding Cauchy data this profile
    vanishes identically; its max magnitude is the natural scalar
    summary."""
    return apply_kernel(kernel, w)


def report_to_csv(report: IntertwiningReport, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("interior_residual,trace_gap_value,trace_gap_slope\n")
        fh.write(
            f"{format_float(report.interior_residual)},"
            f"{format_float(report.trace_gap_value)},"
            f"{format_float(report.trace_gap_slope)}\n"
        )
