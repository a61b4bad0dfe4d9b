"""Hot numeric loops in two equivalent flavours (numba / numpy+scipy).

Two kernels live here:

* ``tridiag_march`` -- repeated solve of a constant tridiagonal system
  ``M1 u^{k+1} = M0 u^k + extra[k]``, the inner loop of both the forward
  evolution scheme and its adjoint.
* ``triangle_march`` -- explicit column march for the transformation
  kernel on the triangle ``0 <= y <= x``.

The numba variants are hand-rolled Thomas eliminations / scalar loops;
the numpy variants use LAPACK banded solves and per-column vector ops.
Dispatch is by :func:`xformlab.backend.active_backend`.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from . import backend
from .backend import njit
from .errors import InstabilityError, SolverError

# ---------------------------------------------------------------------------
# Tridiagonal time march
# ---------------------------------------------------------------------------


def _tridiag_march_numba_impl(dl, dd, du, el, ed, eu, extra, u0):
    nsteps = extra.shape[0]
    n1 = u0.shape[0]
    out = np.empty((nsteps + 1, n1), dtype=np.complex128)
    for j in range(n1):
        out[0, j] = u0[j]

    # Thomas factorisation of the (time-independent) left-hand matrix.
    cp = np.empty(n1, dtype=np.complex128)
    dp = np.empty(n1, dtype=np.complex128)
    dp[0] = dd[0]
    if abs(dp[0]) == 0.0:
        return out, 0
    cp[0] = du[0] / dp[0]
    for j in range(1, n1):
        dp[j] = dd[j] - dl[j] * cp[j - 1]
        if abs(dp[j]) == 0.0:
            return out, j
        cp[j] = du[j] / dp[j] if j < n1 - 1 else 0.0

    r = np.empty(n1, dtype=np.complex128)
    y = np.empty(n1, dtype=np.complex128)
    for k in range(nsteps):
        u = out[k]
        r[0] = ed[0] * u[0] + eu[0] * u[1] + extra[k, 0]
        for j in range(1, n1 - 1):
            r[j] = el[j] * u[j - 1] + ed[j] * u[j] + eu[j] * u[j + 1] + extra[k, j]
        r[n1 - 1] = el[n1 - 1] * u[n1 - 2] + ed[n1 - 1] * u[n1 - 1] + extra[k, n1 - 1]

        y[0] = r[0] / dp[0]
        for j in range(1, n1):
            y[j] = (r[j] - dl[j] * y[j - 1]) / dp[j]
        out[k + 1, n1 - 1] = y[n1 - 1]
        for j in range(n1 - 2, -1, -1):
            out[k + 1, j] = y[j] - cp[j] * out[k + 1, j + 1]
    return out, -1


_tridiag_march_numba = njit(cache=True)(_tridiag_march_numba_impl)


def _tridiag_march_numpy(dl, dd, du, el, ed, eu, extra, u0):
    nsteps = extra.shape[0]
    n1 = u0.shape[0]
    out = np.empty((nsteps + 1, n1), dtype=np.complex128)
    out[0] = u0

    ab = np.zeros((3, n1), dtype=np.complex128)
    ab[0, 1:] = du[:-1]
    ab[1, :] = dd
    ab[2, :-1] = dl[1:]

    for k in range(nsteps):
        u = out[k]
        r = ed * u + extra[k]
        r[1:] += el[1:] * u[:-1]
        r[:-1] += eu[:-1] * u[1:]
        try:
            out[k + 1] = solve_banded((1, 1), ab, r)
        except np.linalg.LinAlgError:
            return out, k
    return out, -1


def tridiag_march(dl, dd, du, el, ed, eu, extra, u0):
    """March ``M1 u^{k+1} = M0 u^k + extra[k]`` over all steps.

    ``(dl, dd, du)`` are the sub/main/super diagonals of ``M1`` and
    ``(el, ed, eu)`` those of ``M0``; ``extra`` has shape
    ``(nsteps, len(u0))``.  Returns the full trajectory of shape
    ``(nsteps + 1, len(u0))``.  Raises :class:`SolverError` if the
    left-hand system is singular.
    """
    args = (
        np.ascontiguousarray(dl, dtype=np.complex128),
        np.ascontiguousarray(dd, dtype=np.complex128),
        np.ascontiguousarray(du, dtype=np.complex128),
        np.ascontiguousarray(el, dtype=np.complex128),
        np.ascontiguousarray(ed, dtype=np.complex128),
        np.ascontiguousarray(eu, dtype=np.complex128),
        np.ascontiguousarray(extra, dtype=np.complex128),
        np.ascontiguousarray(u0, dtype=np.complex128),
    )
    if backend.active_backend() == "numba":
        out, bad = _tridiag_march_numba(*args)
    else:
        out, bad = _tridiag_march_numpy(*args)
    if bad >= 0:
        raise SolverError(f"singular tridiagonal system at elimination row/step {bad}")
    return out


# ---------------------------------------------------------------------------
# Triangle column march
# ---------------------------------------------------------------------------


def _triangle_march_numba_impl(h, a, ap, app, p, q, diag, robin_g, source, kmat):
    n1 = a.shape[0]
    kmat[0, 0] = diag[0]
    if n1 == 1:
        return -1

    # Start-up column x = h from the second-order Taylor expansion at the
    # origin, where the corner data pin K, K_x, K_y, K_xy and the equation
    # pins K_xx - K_yy.
    dp0 = (-3.0 * diag[0] + 4.0 * diag[1] - diag[2]) / (2.0 * h)
    dpp0 = (2.0 * diag[0] - 5.0 * diag[1] + 4.0 * diag[2] - diag[3]) / (h * h)
    gp0 = (-3.0 * robin_g[0] + 4.0 * robin_g[1] - robin_g[2]) / (2.0 * h)
    ky0 = (robin_g[0] - ap[0] * diag[0]) / a[0]
    kx0 = dp0 - ky0
    kxy0 = (gp0 - ap[0] * kx0) / a[0]
    phi = (source[0, 0] + 2.0 * ap[0] * ky0 + (app[0] + q[0] - p[0]) * diag[0]) / a[0]
    kxx0 = 0.5 * (dpp0 - 2.0 * kxy0 + phi)
    kmat[1, 1] = diag[1]
    kmat[1, 0] = diag[0] + h * kx0 + 0.5 * h * h * kxx0

    h2 = h * h
    for i in range(1, n1 - 1):
        # Robin ghost below y=0 for column i.
        ghost = kmat[i, 1] + 2.0 * h * (ap[0] * kmat[i, 0] - robin_g[i]) / a[0]

        # Interior rows 1..i-1: explicit cross stencil.
        for j in range(1, i):
            d2 = (kmat[i, j + 1] - 2.0 * kmat[i, j] + kmat[i, j - 1]) / h2
            d1 = (kmat[i, j + 1] - kmat[i, j - 1]) / (2.0 * h)
            rhs = (
                a[j] * d2
                + 2.0 * ap[j] * d1
                + (app[j] + q[i] - p[j]) * kmat[i, j]
                + source[i, j]
            )
            kmat[i + 1, j] = 2.0 * kmat[i, j] - kmat[i - 1, j] + h2 * rhs / a[i]

        # Bottom row via the ghost.
        d2 = (kmat[i, 1] - 2.0 * kmat[i, 0] + ghost) / h2
        d1 = (kmat[i, 1] - ghost) / (2.0 * h)
        rhs = (
            a[0] * d2
            + 2.0 * ap[0] * d1
            + (app[0] + q[i] - p[0]) * kmat[i, 0]
            + source[i, 0]
        )
        kmat[i + 1, 0] = 2.0 * kmat[i, 0] - kmat[i - 1, 0] + h2 * rhs / a[i]

        # Subdiagonal row j=i: local quadratic collocated with the equation
        # at the diagonal node (x_i, y_i), closed by diagonal data.
        c0 = kmat[i, i]
        km1 = kmat[i, i - 1]
        km2 = kmat[i, i - 2] if i >= 2 else ghost
        c5 = 0.5 * (km2 - 2.0 * km1 + c0)
        c2 = c0 - km1 + c5
        c3 = (
            c5
            + h * ap[i] * c2 / a[i]
            + h2 * ((app[i] + q[i] - p[i]) * c0 + source[i, i]) / (2.0 * a[i])
        )
        c1 = 0.5 * (diag[i + 1] - diag[i - 1]) - c2
        kmat[i + 1, i] = c0 + c1 + c3

        kmat[i + 1, i + 1] = diag[i + 1]

        colmax = 0.0
        for j in range(i + 2):
            v = abs(kmat[i + 1, j])
            if v > colmax:
                colmax = v
        if not np.isfinite(colmax):
            return i + 1
    return -1


_triangle_march_numba = njit(cache=True)(_triangle_march_numba_impl)


def _triangle_march_numpy(h, a, ap, app, p, q, diag, robin_g, source, kmat):
    n1 = a.shape[0]
    kmat[0, 0] = diag[0]
    if n1 == 1:
        return -1

    dp0 = (-3.0 * diag[0] + 4.0 * diag[1] - diag[2]) / (2.0 * h)
    dpp0 = (2.0 * diag[0] - 5.0 * diag[1] + 4.0 * diag[2] - diag[3]) / (h * h)
    gp0 = (-3.0 * robin_g[0] + 4.0 * robin_g[1] - robin_g[2]) / (2.0 * h)
    ky0 = (robin_g[0] - ap[0] * diag[0]) / a[0]
    kx0 = dp0 - ky0
    kxy0 = (gp0 - ap[0] * kx0) / a[0]
    phi = (source[0, 0] + 2.0 * ap[0] * ky0 + (app[0] + q[0] - p[0]) * diag[0]) / a[0]
    kxx0 = 0.5 * (dpp0 - 2.0 * kxy0 + phi)
    kmat[1, 1] = diag[1]
    kmat[1, 0] = diag[0] + h * kx0 + 0.5 * h * h * kxx0

    h2 = h * h
    for i in range(1, n1 - 1):
        ghost = kmat[i, 1] + 2.0 * h * (ap[0] * kmat[i, 0] - robin_g[i]) / a[0]

        if i >= 2:
            row = kmat[i, : i + 1]
            prev = kmat[i - 1, 1:i]
            d2 = (row[2:] - 2.0 * row[1:-1] + row[:-2]) / h2
            d1 = (row[2:] - row[:-2]) / (2.0 * h)
            rhs = (
                a[1:i] * d2
                + 2.0 * ap[1:i] * d1
                + (app[1:i] + q[i] - p[1:i]) * row[1:-1]
                + source[i, 1:i]
            )
            kmat[i + 1, 1:i] = 2.0 * row[1:-1] - prev + h2 * rhs / a[i]

        d2 = (kmat[i, 1] - 2.0 * kmat[i, 0] + ghost) / h2
        d1 = (kmat[i, 1] - ghost) / (2.0 * h)
        rhs = (
            a[0] * d2
            + 2.0 * ap[0] * d1
            + (app[0] + q[i] - p[0]) * kmat[i, 0]
            + source[i, 0]
        )
        kmat[i + 1, 0] = 2.0 * kmat[i, 0] - kmat[i - 1, 0] + h2 * rhs / a[i]

        c0 = kmat[i, i]
        km1 = kmat[i, i - 1]
        km2 = kmat[i, i - 2] if i >= 2 else ghost
        c5 = 0.5 * (km2 - 2.0 * km1 + c0)
        c2 = c0 - km1 + c5
        c3 = (
            c5
            + h * ap[i] * c2 / a[i]
            + h2 * ((app[i] + q[i] - p[i]) * c0 + source[i, i]) / (2.0 * a[i])
        )
        c1 = 0.5 * (diag[i + 1] - diag[i - 1]) - c2
        kmat[i + 1, i] = c0 + c1 + c3

        kmat[i + 1, i + 1] = diag[i + 1]

        colmax = np.max(np.abs(kmat[i + 1, : i + 2]))
        if not np.isfinite(colmax):
            return i + 1
    return -1


def triangle_march(h, a, ap, app, p, q, diag, robin_g, source):
    """Fill the lower-triangular kernel array by the explicit column march.

    ``diag`` carries the Goursat data on y=x, ``robin_g`` the (usually
    zero) inhomogeneity of the derivative condition at y=0, ``source``
    an optional volume forcing (all sampled on the grid).  Returns the
    dense ``(n+1, n+1)`` array with zeros above the diagonal.  Raises
    :class:`InstabilityError` on non-finite growth.
    """
    n1 = a.shape[0]
    kmat = np.zeros((n1, n1), dtype=np.float64)
    args = (
        float(h),
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(ap, dtype=np.float64),
        np.ascontiguousarray(app, dtype=np.float64),
        np.ascontiguousarray(p, dtype=np.float64),
        np.ascontiguousarray(q, dtype=np.float64),
        np.ascontiguousarray(diag, dtype=np.float64),
        np.ascontiguousarray(robin_g, dtype=np.float64),
        np.ascontiguousarray(source, dtype=np.float64),
        kmat,
    )
    if backend.active_backend() == "numba":
        bad = _triangle_march_numba(*args)
    else:
        bad = _triangle_march_numpy(*args)
    if bad >= 0:
        raise InstabilityError(f"non-finite kernel values at column {bad}")
    return kmat
