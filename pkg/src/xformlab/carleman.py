"""Weighted-estimate verification: the large-parameter inequality

    int (tau |z_x|^2 + tau^3 |z|^2) e^{2 tau alpha} <= C int |Pz|^2 e^{2 tau alpha}

with alpha = exp(lambda*psi), psi = ell + 2 - x - N (t - t0)^2, evaluated
for compactly supported test functions, plus the exponential-separation
endgame of the unique-continuation argument.

The raw weight e^{2 tau alpha} spans far beyond float64 range for any
interesting tau, so both sides are computed with a common factor
e^{-2 tau alpha_ref} removed, alpha_ref being the max of alpha over the
(one-cell dilated) support of the test function.  Ratios are unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corelab import (
    CoefficientField,
    Sigma,
    SpaceGrid,
    TimeGrid,
    format_float,
)
from .errors import SupportConditionError, ValidationError

SUPPORT_TOL = 1e-12
FLAG_SLACK = 1.25


@dataclass(frozen=True)
class WeightSpec:
    """Sampled weight: psi(t,x) = ell + 2 - x - N (t - t0)^2 and
    alpha = exp(lambda * psi), with N = (ell+3)/min((T-t0)^2, t0^2)."""

    lam: float
    t0: float
    N: float
    psi: np.ndarray
    alpha: np.ndarray
    sgrid: SpaceGrid
    tgrid: TimeGrid

    def __post_init__(self):
        for name in ("psi", "alpha"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr = np.array(arr, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class CarlemanReport:
    """Per-member, per-tau integrals (common exponential factor removed)
    and the fitted stability constant."""

    tau_grid: np.ndarray
    lhs: np.ndarray  # (members, taus)
    rhs: np.ndarray
    ratio: np.ndarray
    fitted_C: float
    max_ratio: float
    flagged: bool


def build_weight(ell: float, horizon: float, t0: float, lam: float,
                 sgrid: SpaceGrid, tgrid: TimeGrid) -> WeightSpec:
    """Sample psi and alpha on the space-time grid and verify the
    negativity of psi at both time ends node-wise."""
    if not 0.0 < t0 < horizon:
        raise ValidationError(f"t0={t0:g} must lie strictly inside (0, {horizon:g})")
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    if abs(sgrid.ell - ell) > 1e-12 or abs(tgrid.horizon - horizon) > 1e-12:
        raise ValidationError("grids do not match the stated domain")
    bign = (ell + 3.0) / min((horizon - t0) ** 2, t0**2)
    tt = tgrid.nodes[:, None]
    xx = sgrid.nodes[None, :]
    psi = ell + 2.0 - xx - bign * (tt - t0) ** 2
    if not (np.all(psi[0] < 0.0) and np.all(psi[-1] < 0.0)):
        raise ValidationError("weight construction violated psi<0 at a time end")
    alpha = np.exp(lam * psi)
    return WeightSpec(lam, t0, float(bign), psi, alpha, sgrid, tgrid)


def cutoff_mu(delta: float, x0: float, ell: float, s: np.ndarray) -> np.ndarray:
    """Quintic smooth step in the psi variable: exactly 0 below 2+delta,
    exactly 1 above ell+2-x0-delta, C^2 in between."""
    lo = 2.0 + delta
    hi = ell + 2.0 - x0 - delta
    if not lo < hi:
        raise ValidationError(
            f"cutoff thresholds out of order: need 2+delta < ell+2-x0-delta, "
            f"got {lo:g} >= {hi:g} (delta must be < (ell-x0)/2)"
        )
    t = np.clip((np.asarray(s, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def _check_support(z: np.ndarray, h: float, tol_scale: float) -> None:
    scale = float(np.max(np.abs(z)))
    if scale == 0.0:
        return
    tol = tol_scale * scale
    checks = {
        "z(t,0)": np.max(np.abs(z[:, 0])),
        "dz/dx(t,0)": np.max(np.abs(-3.0 * z[:, 0] + 4.0 * z[:, 1] - z[:, 2])) / (2.0 * h),
        "z(0,x)": np.max(np.abs(z[0, :])),
        "z(T,x)": np.max(np.abs(z[-1, :])),
        "z(t,ell)": np.max(np.abs(z[:, -1])),
    }
    worst = max(checks, key=checks.get)
    if checks[worst] > tol:
        raise SupportConditionError(
            f"test function violates the support condition: |{worst}| = "
            f"{checks[worst]:.3e} exceeds {tol:.3e}"
        )


def _space_time_weights(sgrid: SpaceGrid, tgrid: TimeGrid) -> np.ndarray:
    wt = np.full(tgrid.m + 1, tgrid.dt)
    wt[0] = wt[-1] = tgrid.dt / 2.0
    wx = np.full(sgrid.n + 1, sgrid.h)
    wx[0] = wx[-1] = sgrid.h / 2.0
    return wt[:, None] * wx[None, :]


def _stencils(z: np.ndarray, h: float, dt: float):
    zt = np.zeros_like(z)
    zx = np.zeros_like(z)
    zxx = np.zeros_like(z)
    zt[1:-1, :] = (z[2:, :] - z[:-2, :]) / (2.0 * dt)
    zx[:, 1:-1] = (z[:, 2:] - z[:, :-2]) / (2.0 * h)
    zxx[:, 1:-1] = (z[:, 2:] - 2.0 * z[:, 1:-1] + z[:, :-2]) / (h * h)
    return zt, zx, zxx


def _dilated_support_max(alpha: np.ndarray, z: np.ndarray) -> float:
    mask = np.abs(z) > 0.0
    grown = mask.copy()
    grown[1:, :] |= mask[:-1, :]
    grown[:-1, :] |= mask[1:, :]
    grown[:, 1:] |= mask[:, :-1]
    grown[:, :-1] |= mask[:, 1:]
    if not np.any(grown):
        return float(np.max(alpha))
    return float(np.max(alpha[grown]))


def carleman_sides(z: np.ndarray, weight: WeightSpec, tau: float, sigma: Sigma,
                   a: CoefficientField, p: CoefficientField,
                   support_tol: float = SUPPORT_TOL):
    """Both sides of the weighted inequality for one test function.

    Returns ``(lhs, rhs)`` with the common factor e^{2 tau alpha_ref}
    removed (alpha_ref = max alpha over the stencil-dilated support of z),
    so the pair is finite for any tau and their ratio is exact.
    """
    z = np.asarray(z, dtype=np.complex128)
    expect = (weight.tgrid.m + 1, weight.sgrid.n + 1)
    if z.shape != expect:
        raise ValidationError(f"test function shape {z.shape}, expected {expect}")
    h, dt = weight.sgrid.h, weight.tgrid.dt
    _check_support(z, h, support_tol)

    zt, zx, zxx = _stencils(z, h, dt)
    pz = sigma.value * zt - a.values[None, :] * zxx + p.values[None, :] * z

    alpha_ref = _dilated_support_max(weight.alpha, z)
    ew = np.exp(2.0 * tau * (weight.alpha - alpha_ref))
    w = _space_time_weights(weight.sgrid, weight.tgrid) * ew
    lhs = float(np.sum((tau * np.abs(zx) ** 2 + tau**3 * np.abs(z) ** 2) * w))
    rhs = float(np.sum(np.abs(pz) ** 2 * w))
    return lhs, rhs


def carleman_study(z_family, weight: WeightSpec, tau_grid, sigma: Sigma,
                   a: CoefficientField, p: CoefficientField) -> CarlemanReport:
    """Sweep the family over the tau grid; the constant fitted at the
    smallest tau must dominate all later ratios up to 25% slack."""
    tau_grid = np.asarray(tau_grid, dtype=np.float64)
    if len(z_family) == 0 or tau_grid.size == 0:
        raise ValidationError("need a nonempty family and tau grid")
    nmem = len(z_family)
    lhs = np.full((nmem, tau_grid.size), np.nan)
    rhs = np.full((nmem, tau_grid.size), np.nan)
    degenerate = False
    for i, z in enumerate(z_family):
        if np.max(np.abs(z)) == 0.0:
            degenerate = True
            continue
        for k, tau in enumerate(tau_grid):
            lhs[i, k], rhs[i, k] = carleman_sides(z, weight, float(tau), sigma, a, p)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = lhs / rhs
    if degenerate or not np.all(np.isfinite(ratio)):
        return CarlemanReport(tau_grid, lhs, rhs, ratio, float("nan"), float("nan"), True)
    fitted = float(np.max(ratio[:, 0]))
    max_ratio = float(np.max(ratio[:, 1:])) if tau_grid.size > 1 else fitted
    flagged = max_ratio > FLAG_SLACK * fitted
    return CarlemanReport(tau_grid, lhs, rhs, ratio, fitted, max_ratio, flagged)


def make_bump_family(sgrid: SpaceGrid, tgrid: TimeGrid, count: int,
                     seed: int = 0) -> list[np.ndarray]:
    """Seeded family of C-infinity product bumps compactly supported in
    the interior of the space-time box (support conditions hold exactly)."""
    rng = np.random.default_rng(seed)
    tt = tgrid.nodes[:, None]
    xx = sgrid.nodes[None, :]
    family = []
    for _ in range(count):
        xc = sgrid.ell * rng.uniform(0.4, 0.6)
        rx = sgrid.ell * rng.uniform(0.15, 0.25)
        tc = tgrid.horizon * rng.uniform(0.45, 0.55)
        rt = tgrid.horizon * rng.uniform(0.2, 0.3)
        family.append(smooth_bump(tt, xx, tc, rt, xc, rx))
    return family


def smooth_bump(tt, xx, tc, rt, xc, rx) -> np.ndarray:
    """exp(-1/(1-s^2)) product bump, exactly zero outside its box."""
    st = (tt - tc) / rt
    sx = (xx - xc) / rx
    with np.errstate(divide="ignore", over="ignore"):
        ft = np.where(np.abs(st) < 1.0, np.exp(-1.0 / np.maximum(1.0 - st**2, 1e-300)), 0.0)
        fx = np.where(np.abs(sx) < 1.0, np.exp(-1.0 / np.maximum(1.0 - sx**2, 1e-300)), 0.0)
    z = ft * fx
    peak = np.max(z)
    return z / peak if peak > 0 else z


# ---------------------------------------------------------------------------
# Unique-continuation separation demo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparationRow:
    tau: float
    lower_bound: float
    upper_bound: float
    separated: bool


@dataclass(frozen=True)
class SeparationDemo:
    exponent_low: float  # 2 + delta
    exponent_high: float  # ell + 2 - x0 - delta
    c_upper: float  # multiplies e^{2 tau (2+delta)}
    c_lower: float  # multiplies e^{2 tau (ell+2-x0-delta)}
    tau_star: float
    rows: tuple
    verdict: bool


def ucp_separation_demo(ell: float, x0: float, t0_frac: float, delta: float,
                        tau_grid, sgrid: SpaceGrid | None = None,
                        tgrid: TimeGrid | None = None, lam: float = 2.0,
                        sigma: Sigma | None = None,
                        a: CoefficientField | None = None,
                        p: CoefficientField | None = None,
                        c_upper: float | None = None,
                        c_lower: float | None = None) -> SeparationDemo:
    """Tabulate the two exponential bounds of the contradiction endgame.

    The localized-commutator term is bounded by C4 e^{2 tau (2+delta)},
    the weighted energy from below by C5 e^{2 tau (ell+2-x0-delta)}; once
    the second exponent exceeds the first, the inequality
    C5 e^{...} <= C4 e^{...} fails for all tau beyond a finite crossing
    tau*.  Constants may be supplied, or fitted from a cutoff-localized
    run on the given grids (working on the psi scale, where the sweep is
    float-representable).
    """
    if not 0.0 < delta < (ell - x0) / 2.0:
        raise ValidationError(
            f"delta={delta:g} out of range: need 0 < delta < (ell-x0)/2 = {(ell - x0) / 2:g}"
        )
    tau_grid = np.asarray(tau_grid, dtype=np.float64)
    s_low = 2.0 + delta
    s_high = ell + 2.0 - x0 - delta

    if c_upper is None or c_lower is None:
        if sgrid is None or tgrid is None:
            c_upper = 1.0 if c_upper is None else c_upper
            c_lower = 1.0 if c_lower is None else c_lower
        else:
            fu, fl = _fit_separation_constants(
                ell, x0, t0_frac, delta, tau_grid, sgrid, tgrid, lam, sigma, a, p
            )
            c_upper = fu if c_upper is None else c_upper
            c_lower = fl if c_lower is None else c_lower

    rows = []
    for tau in tau_grid:
        up = c_upper * np.exp(2.0 * tau * s_low)
        lo = c_lower * np.exp(2.0 * tau * s_high)
        rows.append(SeparationRow(float(tau), float(lo), float(up), bool(lo > up)))

    verdict = s_high > s_low
    if verdict:
        tau_star = max(0.0, np.log(c_upper / c_lower) / (2.0 * (s_high - s_low)))
    else:
        tau_star = float("inf")
    return SeparationDemo(s_low, s_high, float(c_upper), float(c_lower),
                          float(tau_star), tuple(rows), verdict)


def _fit_separation_constants(ell, x0, t0_frac, delta, tau_grid, sgrid, tgrid,
                              lam, sigma, a, p):
    """Fit (C4, C5) from a cutoff-localized bump on the psi scale."""
    from .corelab import Role, sample_coefficient

    t0 = t0_frac * tgrid.horizon
    if sigma is None:
        sigma = Sigma(1.0, 0.0)
    if a is None:
        a = sample_coefficient(lambda x: np.ones_like(x), sgrid, Role.DIFFUSION)
    if p is None:
        p = sample_coefficient(lambda x: np.zeros_like(x), sgrid, Role.POTENTIAL_P)

    weight = build_weight(ell, tgrid.horizon, t0, lam, sgrid, tgrid)
    rt = min(t0, tgrid.horizon - t0) * 0.8
    rx = min(x0, ell - x0) * 0.8
    z = smooth_bump(tgrid.nodes[:, None], sgrid.nodes[None, :], t0, rt, x0, rx)
    mu = cutoff_mu(delta, x0, ell, weight.psi)
    v = z * mu

    h, dt = sgrid.h, tgrid.dt
    zt, zx, zxx = _stencils(z + 0j, h, dt)
    vt, vx, vxx = _stencils(v + 0j, h, dt)
    pz = sigma.value * zt - a.values[None, :] * zxx + p.values[None, :] * z
    pv = sigma.value * vt - a.values[None, :] * vxx + p.values[None, :] * v
    commut = pv - mu * pz

    wts = _space_time_weights(sgrid, tgrid)
    c_upper = 0.0
    c_lower = np.inf
    for tau in tau_grid:
        ew = np.exp(2.0 * tau * weight.psi)
        upper = float(np.sum(np.abs(commut) ** 2 * wts * ew))
        lower = float(np.sum((tau * np.abs(vx) ** 2 + tau**3 * np.abs(v) ** 2) * wts * ew))
        c_upper = max(c_upper, upper / np.exp(2.0 * tau * (2.0 + delta)))
        c_lower = min(c_lower, lower / np.exp(2.0 * tau * (ell + 2.0 - x0 - delta)))
    return c_upper, c_lower


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def report_to_csv(report: CarlemanReport, path) -> None:
    lines = ["member,tau,lhs,rhs,ratio"]
    for i in range(report.lhs.shape[0]):
        for k, tau in enumerate(report.tau_grid):
            lines.append(
                f"{i},{format_float(tau)},{format_float(report.lhs[i, k])},"
                f"{format_float(report.rhs[i, k])},{format_float(report.ratio[i, k])}"
            )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def report_summary(report: CarlemanReport) -> dict:
    return {
        "fitted_C": report.fitted_C,
        "max_ratio": report.max_ratio,
        "flagged": bool(report.flagged),
        "tau_grid": [float(t) for t in report.tau_grid],
    }


def demo_to_csv(demo: SeparationDemo, path) -> None:
    lines = ["tau,lower_bound,upper_bound,separated"]
    for row in demo.rows:
        lines.append(
            f"{format_float(row.tau)},{format_float(row.lower_bound)},"
            f"{format_float(row.upper_bound)},{int(row.separated)}"
        )
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
