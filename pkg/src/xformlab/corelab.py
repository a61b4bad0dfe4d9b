"""Grids, sampled coefficient fields, admissibility checks, numeric primitives.

All container types are immutable after construction (arrays are marked
read-only), so instances can be shared freely across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

MIN_INTERVALS = 8

#: relative threshold below which a sampled value counts as an exact zero
ZERO_EPS = 1e-12


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sigma:
    """Nonzero complex evolution constant; re=1 gives the parabolic case,
    re=0, im=1 the Schroedinger case."""

    re: float
    im: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.re) and np.isfinite(self.im)):
            raise ValidationError("sigma must be finite")
        if self.re**2 + self.im**2 <= 0.0:
            raise ValidationError("sigma must be nonzero")

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)

    def conjugate(self) -> "Sigma":
        return Sigma(self.re, -self.im)


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform grid on [0, ell] with n intervals."""

    ell: float
    n: int
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.ell <= 0:
            raise ValidationError(f"ell must be positive, got {self.ell}")
        if self.n < MIN_INTERVALS:
            raise ValidationError(f"need at least {MIN_INTERVALS} intervals, got {self.n}")
        object.__setattr__(self, "h", self.ell / self.n)
        nodes = np.linspace(0.0, self.ell, self.n + 1)
        object.__setattr__(self, "nodes", _freeze(nodes))

    def matches(self, other: "SpaceGrid") -> bool:
        return self.n == other.n and self.ell == other.ell


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, horizon] with m steps."""

    horizon: float
    m: int
    dt: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if self.m < MIN_INTERVALS:
            raise ValidationError(f"need at least {MIN_INTERVALS} steps, got {self.m}")
        object.__setattr__(self, "dt", self.horizon / self.m)
        nodes = np.linspace(0.0, self.horizon, self.m + 1)
        object.__setattr__(self, "nodes", _freeze(nodes))

    def matches(self, other: "TimeGrid") -> bool:
        return self.m == other.m and self.horizon == other.horizon


class Role(enum.Enum):
    DIFFUSION = "diffusion"
    POTENTIAL_P = "potential_p"
    POTENTIAL_Q = "potential_q"
    INITIAL = "initial"


@dataclass(frozen=True)
class CoefficientField:
    """Real function sampled on a space grid, tagged with its role."""

    grid: SpaceGrid
    values: np.ndarray
    role: Role

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.n + 1,):
            raise ValidationError(
                f"values length {values.shape} does not match grid ({self.grid.n + 1},)"
            )
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            j = int(bad[0])
            raise ValidationError(f"non-finite value at node j={j} (x={self.grid.nodes[j]:g})")
        if self.role is Role.DIFFUSION:
            neg = np.flatnonzero(values <= 0.0)
            if neg.size:
                j = int(neg[0])
                raise ValidationError(
                    f"diffusion coefficient must be positive; value {values[j]:g} "
                    f"at node j={j} (x={self.grid.nodes[j]:g})"
                )
        object.__setattr__(self, "values", _freeze(values))

    def with_values(self, values: np.ndarray) -> "CoefficientField":
        return CoefficientField(self.grid, values, self.role)


@dataclass(frozen=True)
class ZeroReport:
    """Detected zeros of an initial-value field with their local slopes."""

    zeros: tuple  # of (location, slope)
    admissible: bool
    endpoint_zeros: tuple = ()  # locations within h of an endpoint (flag only)


@dataclass(frozen=True)
class EvolutionField:
    """Complex solution samples u(t_k, x_j); row 0 is the initial data."""

    sgrid: SpaceGrid
    tgrid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        expect = (self.tgrid.m + 1, self.sgrid.n + 1)
        if values.shape != expect:
            raise ValidationError(f"field shape {values.shape} does not match grids {expect}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("non-finite entries in evolution field")
        object.__setattr__(self, "values", _freeze(values))


@dataclass(frozen=True)
class CauchyTrace:
    """Boundary time series (u(t,0), du/dx(t,0)) — the inverse problem's data."""

    tgrid: TimeGrid
    u0: np.ndarray
    ux0: np.ndarray

    def __post_init__(self):
        u0 = np.asarray(self.u0, dtype=np.complex128)
        ux0 = np.asarray(self.ux0, dtype=np.complex128)
        if u0.shape != (self.tgrid.m + 1,) or ux0.shape != (self.tgrid.m + 1,):
            raise ValidationError("trace length does not match time grid")
        object.__setattr__(self, "u0", _freeze(u0))
        object.__setattr__(self, "ux0", _freeze(ux0))


# ---------------------------------------------------------------------------
# Numeric primitives
# ---------------------------------------------------------------------------


def trapezoid(values: np.ndarray, h: float):
    """Composite trapezoid integral of uniformly sampled values (exact on
    linear integrands)."""
    values = np.asarray(values)
    if values.shape[-1] < 2:
        return 0.0 * values[..., 0]
    return h * (values[..., :-1].sum(axis=-1) + values[..., 1:].sum(axis=-1)) / 2.0


def cumulative_trapezoid(values: np.ndarray, h: float) -> np.ndarray:
    """Running trapezoid integral; entry j integrates over [x_0, x_j]."""
    values = np.asarray(values)
    out = np.empty_like(values, dtype=np.result_type(values, np.float64))
    out[0] = 0.0
    np.cumsum(h * (values[:-1] + values[1:]) / 2.0, out=out[1:])
    return out


def boundary_derivative(values: np.ndarray, h: float, side: str = "left"):
    """One-sided second-order first derivative at a boundary node
    (exact on quadratics)."""
    v = np.asarray(values)
    if side == "left":
        return (-3.0 * v[..., 0] + 4.0 * v[..., 1] - v[..., 2]) / (2.0 * h)
    if side == "right":
        return (3.0 * v[..., -1] - 4.0 * v[..., -2] + v[..., -3]) / (2.0 * h)
    raise ValidationError(f"side must be 'left' or 'right', got {side!r}")


def sampled_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Second-order first derivative of samples: centered inside, one-sided
    at the ends."""
    v = np.asarray(values, dtype=np.float64)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return out


def sampled_second_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Second derivative of samples: centered inside, copied at the ends."""
    v = np.asarray(values, dtype=np.float64)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h)
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / (h * h)
    return out


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def make_grids(ell: float, horizon: float, n: int, m: int):
    """Uniform space and time grids with exact endpoint inclusion."""
    return SpaceGrid(float(ell), int(n)), TimeGrid(float(horizon), int(m))


def sample_coefficient(f, grid: SpaceGrid, role: Role) -> CoefficientField:
    """Sample a scalar function at the grid nodes (vectorized when possible)."""
    try:
        values = np.asarray(f(grid.nodes), dtype=np.float64)
        if values.shape != grid.nodes.shape:
            raise TypeError
    except (TypeError, ValueError):
        values = np.array([float(f(x)) for x in grid.nodes])
    return CoefficientField(grid, values, role)


def check_b_admissible(b: CoefficientField, slope_tol: float | None = None) -> ZeroReport:
    """Locate zeros of an initial-value field and test that each is simple.

    Zeros are found by sign changes plus near-zero nodes; the local slope
    comes from a linear least-squares fit over a 5-node window.  A zero is
    simple when |slope| exceeds ``slope_tol`` (default 1e-6 * max|b| / ell,
    scale-invariant).  Zeros within one cell of an endpoint are reported
    but do not veto admissibility.
    """
    if b.role is not Role.INITIAL:
        raise ValidationError(f"admissibility check expects role=initial, got {b.role}")
    x = b.grid.nodes
    v = b.values
    h = b.grid.h
    ell = b.grid.ell
    scale = float(np.max(np.abs(v)))
    if scale == 0.0:
        return ZeroReport(zeros=(), admissible=False)
    if slope_tol is None:
        slope_tol = 1e-6 * scale / ell

    node_zero = np.abs(v) <= ZERO_EPS * scale

    # Three consecutive vanishing nodes means b is flat at zero: not a
    # finite, simple zero set.
    runs = np.convolve(node_zero.astype(int), np.ones(3, dtype=int), mode="valid")
    if np.any(runs >= 3):
        locs = tuple((float(x[j]), 0.0) for j in np.flatnonzero(node_zero))
        return ZeroReport(zeros=locs, admissible=False)

    candidates = [float(x[j]) for j in np.flatnonzero(node_zero)]
    sign_change = (v[:-1] * v[1:] < 0.0) & ~node_zero[:-1] & ~node_zero[1:]
    for j in np.flatnonzero(sign_change):
        candidates.append(float(x[j] - v[j] * h / (v[j + 1] - v[j])))

    candidates.sort()
    merged: list[float] = []
    for c in candidates:
        if merged and c - merged[-1] < 0.75 * h:
            merged[-1] = (merged[-1] + c) / 2.0
        else:
            merged.append(c)

    zeros = []
    endpoint_zeros = []
    admissible = True
    for c in merged:
        j = int(round(c / h))
        lo = max(0, j - 2)
        hi = min(len(x), j + 3)
        if hi - lo < 2:
            lo, hi = max(0, hi - 2), min(len(x), lo + 2)
        slope = float(np.polyfit(x[lo:hi], v[lo:hi], 1)[0])
        zeros.append((c, slope))
        near_endpoint = c <= h or c >= ell - h
        if near_endpoint:
            endpoint_zeros.append(c)
        elif abs(slope) <= slope_tol:
            admissible = False

    return ZeroReport(zeros=tuple(zeros), admissible=admissible,
                      endpoint_zeros=tuple(endpoint_zeros))


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------


def format_float(v: float) -> str:
    """Locale-independent shortest-roundtrip float formatting."""
    return format(float(v), ".17g")


def coefficient_to_csv(fld: CoefficientField, path) -> None:
    lines = ["x,value"]
    for x, v in zip(fld.grid.nodes, fld.values):
        lines.append(f"{format_float(x)},{format_float(v)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def coefficient_from_csv(path, role: Role, grid: SpaceGrid | None = None) -> CoefficientField:
    xs, vs = [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "x,value":
            raise ValidationError(f"expected header 'x,value', got {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            sx, sv = line.split(",")
            xs.append(float(sx))
            vs.append(float(sv))
    xs = np.asarray(xs)
    vs = np.asarray(vs)
    if grid is None:
        if len(xs) < MIN_INTERVALS + 1:
            raise ValidationError("too few rows to define a grid")
        grid = SpaceGrid(float(xs[-1]), len(xs) - 1)
    if not np.allclose(xs, grid.nodes, atol=1e-12 * max(grid.ell, 1.0)):
        raise ValidationError("csv nodes do not match the expected uniform grid")
    return CoefficientField(grid, vs, role)
