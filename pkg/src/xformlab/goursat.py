"""Transformation-kernel solver on the triangle 0 <= y <= x <= ell.

The kernel K solves the hyperbolic system

    a(x) K_xx - (a(y) K)_yy = K(x,y) (q(x) - p(y)),

with a Robin condition a(0) K_y(x,0) + a'(0) K(x,0) = 0 at the bottom
edge and the diagonal ODE 2a K(x,x)' + a' K(x,x) = q - p, K(0,0) = 0,
whose closed-form solution supplies the Goursat data.  Columns of
increasing x are filled from the diagonal down to y=0 by an explicit
cross stencil; the row right below the diagonal closes with a local
quadratic collocated with the equation at the diagonal node, and the
bottom row eliminates a second-order ghost node through the Robin
condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ._kernels import triangle_march
from .corelab import (
    CoefficientField,
    Role,
    SpaceGrid,
    cumulative_trapezoid,
    format_float,
    sampled_derivative,
    sampled_second_derivative,
    trapezoid,
)
from .errors import MeshConditionError, ValidationError

#: slack on the characteristic-slope mesh condition (the diagonal sits at
#: slope exactly one)
MESH_TOL = 1e-9


@dataclass(frozen=True)
class TriangleGrid:
    """Square-spaced triangle nodes {(x_i, y_j): 0 <= j <= i <= n}."""

    base: SpaceGrid

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def h(self) -> float:
        return self.base.h


@dataclass(frozen=True)
class Kernel:
    """Kernel values on the triangle, stored dense with zeros above the
    diagonal; K[0,0] vanishes by the diagonal condition."""

    tri: TriangleGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        n1 = self.tri.n + 1
        if values.shape != (n1, n1):
            raise ValidationError(f"kernel shape {values.shape}, expected {(n1, n1)}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("non-finite kernel values")
        scale = max(1.0, float(np.max(np.abs(values))))
        if abs(values[0, 0]) > 1e-12 * scale:
            raise ValidationError(f"K(0,0)={values[0, 0]:g} must vanish")
        values = np.array(values, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class CharacteristicCurve:
    """Falling characteristic through (x0, x0) with its axis crossing."""

    start: float
    xs: np.ndarray
    ys: np.ndarray
    axis_hit: float

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys, dtype=np.float64)
        if xs.shape != ys.shape:
            raise ValidationError("mismatched sample arrays")
        if ys[0] != self.start or xs[0] != self.start:
            raise ValidationError("curve must start on the diagonal")
        if np.any(np.diff(ys) >= 0):
            raise ValidationError("y must decrease strictly along the curve")
        if not self.axis_hit > self.start:
            raise ValidationError("axis crossing must lie beyond the start")
        for name, arr in (("xs", xs), ("ys", ys)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class BoundFit:
    """Empirical constant of the kernel a-priori bound
    sup|K(x,.)| <= C * x * max|p-q| on [0,x]."""

    constant: float
    vacuous: bool
    per_column: np.ndarray = field(repr=False, default=None)


def _shared_positive(a: CoefficientField, *others: CoefficientField) -> SpaceGrid:
    if a.role is not Role.DIFFUSION:
        raise ValidationError(f"expected diffusion role for a, got {a.role}")
    grid = a.grid
    for f in others:
        if not f.grid.matches(grid):
            raise ValidationError("coefficient fields live on different grids")
    return grid


def diagonal_kernel(a: CoefficientField, p: CoefficientField,
                    q: CoefficientField) -> np.ndarray:
    """Diagonal values K(x,x) = a(x)^{-1/2} * int_0^x (q-p)/(2 sqrt(a)).

    This is the closed-form solution of the diagonal ODE with K(0,0)=0
    (integrating factor sqrt(a)); the integral is a composite trapezoid.
    """
    _shared_positive(a, p, q)
    root_a = np.sqrt(a.values)
    integrand = (q.values - p.values) / (2.0 * root_a)
    return cumulative_trapezoid(integrand, a.grid.h) / root_a


def check_mesh_condition(a: CoefficientField) -> float:
    """Largest characteristic slope sqrt(a(y)/a(x)) over the triangle;
    raises when it exceeds one (the square mesh cannot bound the domain
    of dependence then)."""
    av = a.values
    running_max = np.maximum.accumulate(av)
    ratios = running_max / av
    worst = int(np.argmax(ratios))
    slope = float(np.sqrt(ratios[worst]))
    if slope > 1.0 + MESH_TOL:
        x = a.grid.nodes[worst]
        raise MeshConditionError(
            f"characteristic slope {slope:.6g} > 1 at x={x:g} (a decreases there); "
            f"the y-spacing would need to grow by {slope:.3g}x relative to the "
            "x-spacing to bound the domain of dependence"
        )
    return slope


def solve_kernel(a: CoefficientField, p: CoefficientField, q: CoefficientField,
                 tri: TriangleGrid | None = None, *,
                 diagonal: np.ndarray | None = None,
                 robin_g: np.ndarray | None = None,
                 source: np.ndarray | None = None,
                 a_prime: np.ndarray | None = None,
                 a_second: np.ndarray | None = None) -> Kernel:
    """March the kernel over the triangle by columns of increasing x.

    The keyword overrides exist for manufactured-solution testing:
    ``diagonal`` replaces the closed-form Goursat data, ``robin_g`` makes
    the bottom condition inhomogeneous, ``source`` adds a volume forcing.
    ``a_prime``/``a_second`` take analytic derivative samples of a; by
    default second-order finite differences of the sampled a are used.
    """
    grid = _shared_positive(a, p, q)
    if tri is None:
        tri = TriangleGrid(grid)
    elif not tri.base.matches(grid):
        raise ValidationError("triangle grid does not match the coefficient grid")
    check_mesh_condition(a)

    n1 = grid.n + 1
    h = grid.h
    ap = sampled_derivative(a.values, h) if a_prime is None else np.asarray(a_prime, float)
    app = (sampled_second_derivative(a.values, h) if a_second is None
           else np.asarray(a_second, float))
    diag = diagonal_kernel(a, p, q) if diagonal is None else np.asarray(diagonal, float)
    g = np.zeros(n1) if robin_g is None else np.asarray(robin_g, float)
    f = np.zeros((n1, n1)) if source is None else np.asarray(source, float)
    for name, arr, shape in (("diagonal", diag, (n1,)), ("robin_g", g, (n1,)),
                             ("source", f, (n1, n1)), ("a_prime", ap, (n1,)),
                             ("a_second", app, (n1,))):
        if arr.shape != shape:
            raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")

    kmat = triangle_march(h, a.values, ap, app, p.values, q.values, diag, g, f)
    return Kernel(tri, kmat)


def characteristic_curve(a: CoefficientField, x0: float,
                         step: float | None = None) -> CharacteristicCurve:
    """Trace dy/dx = -sqrt(a(y)/a(x)) from (x0, x0) down to the x-axis.

    Classical RK4 with fixed step (default h/4) on a cubic-spline
    interpolant of the sampled a; the crossing is located by linear
    interpolation of the final sign change.
    """
    if a.role is not Role.DIFFUSION:
        raise ValidationError(f"expected diffusion role for a, got {a.role}")
    if not 0.0 < x0 < a.grid.ell:
        raise ValidationError(f"x0={x0:g} must lie strictly inside (0, {a.grid.ell:g})")
    spline = CubicSpline(a.grid.nodes, a.values, extrapolate=True)
    floor = 1e-12 * float(np.min(a.values))

    def aval(s: float) -> float:
        return max(float(spline(s)), floor)

    def rhs(x: float, y: float) -> float:
        return -np.sqrt(aval(y) / aval(x))

    if step is None:
        step = a.grid.h / 4.0
    xs = [x0]
    ys = [x0]
    x, y = x0, float(x0)
    cap = x0 + 4.0 * a.grid.ell
    while y > 0.0 and x < cap:
        k1 = rhs(x, y)
        k2 = rhs(x + step / 2.0, y + step * k1 / 2.0)
        k3 = rhs(x + step / 2.0, y + step * k2 / 2.0)
        k4 = rhs(x + step, y + step * k3)
        y_new = y + step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        x_new = x + step
        if y_new <= 0.0:
            hit = x + step * y / (y - y_new)
            xs.append(x_new)
            ys.append(y_new)
            return CharacteristicCurve(x0, np.array(xs), np.array(ys), float(hit))
        xs.append(x_new)
        ys.append(y_new)
        x, y = x_new, y_new
    # slope is <= -sqrt(min a / max a) < 0 on the strip, so the crossing is
    # guaranteed before the cap; extrapolate if the loop somehow ran out
    hit = x - y / rhs(x, max(y, floor))
    return CharacteristicCurve(x0, np.array(xs), np.array(ys), float(hit))


def kernel_bound_fit(kernel: Kernel, p: CoefficientField,
                     q: CoefficientField) -> BoundFit:
    """Fit the constant in sup_{y<=x}|K(x,y)| <= C * x * max_{s<=x}|p-q|.

    Columns whose denominator falls below 1e-14 are skipped; if every
    column is skipped (p identical to q) the bound is vacuous and C=0
    is returned with a flag.
    """
    if not p.grid.matches(q.grid) or not p.grid.matches(kernel.tri.base):
        raise ValidationError("fields do not share the kernel grid")
    kv = kernel.values
    x = kernel.tri.base.nodes
    contrast = np.maximum.accumulate(np.abs(p.values - q.values))
    n1 = x.shape[0]
    ratios = np.full(n1, np.nan)
    for i in range(1, n1):
        den = x[i] * contrast[i]
        if den < 1e-14:
            continue
        ratios[i] = np.max(np.abs(kv[i, : i + 1])) / den
    if np.all(np.isnan(ratios)):
        return BoundFit(constant=0.0, vacuous=True, per_column=ratios)
    return BoundFit(constant=float(np.nanmax(ratios)), vacuous=False, per_column=ratios)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def kernel_to_csv(kernel: Kernel, path) -> None:
    nodes = kernel.tri.base.nodes
    lines = ["x,y,K"]
    for i, x in enumerate(nodes):
        xs = format_float(x)
        for j in range(i + 1):
            lines.append(f"{xs},{format_float(nodes[j])},{format_float(kernel.values[i, j])}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def characteristic_to_csv(curve: CharacteristicCurve, path) -> None:
    lines = ["x,y"]
    for x, y in zip(curve.xs, curve.ys):
        lines.append(f"{format_float(x)},{format_float(y)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
