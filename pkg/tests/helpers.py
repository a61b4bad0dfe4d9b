"""Shared builders and independent oracles for the test suite.

The oracles here deliberately avoid the package's solution paths: the
Picard iteration works on the rotated integral equation, the Bessel
formula is a closed-form special case, and the manufactured-solution
builder injects analytic forcing terms.
"""

from __future__ import annotations

import numpy as np
from scipy.special import iv

from xformlab.corelab import CoefficientField, Role, SpaceGrid, sample_coefficient

ONE = lambda x: np.ones_like(x)  # noqa: E731
ZERO = lambda x: np.zeros_like(x)  # noqa: E731
BSIN = lambda x: np.sin(np.pi * x)  # noqa: E731


def fld(fn, grid: SpaceGrid, role: Role) -> CoefficientField:
    return sample_coefficient(fn, grid, role)


def coeff_triple(grid: SpaceGrid, a_fn=ONE, p_fn=ZERO, q_fn=ONE):
    return (
        fld(a_fn, grid, Role.DIFFUSION),
        fld(p_fn, grid, Role.POTENTIAL_P),
        fld(q_fn, grid, Role.POTENTIAL_Q),
    )


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def bessel_kernel_constant(x, y, c=1.0):
    """Closed form for a=1, q-p=c: K = c(x+y)/2 * I1(2 sqrt(z))/(2 sqrt(z)),
    z = c(x^2-y^2)/4, derived by summing the Volterra series."""
    z = np.maximum(c * (x**2 - y**2) / 4.0, 0.0)
    f = np.where(z > 1e-14, iv(1, 2.0 * np.sqrt(z)) / np.sqrt(np.maximum(z, 1e-300)),
                 1.0 + z / 2.0)
    return (c / 4.0) * (x + y) * f


def picard_kernel_constant_a(ell, n_solver, p_fn, q_fn, refine=2, tol=1e-10,
                             max_iters=200):
    """Volterra (Picard) iteration for the a=1 kernel on the rotated grid.

    Uses the even reflection across y=0 (valid since a'=0 makes the Robin
    condition a pure Neumann one), giving the Goursat integral equation
    K(xi,eta) = D(xi/2) + D(eta/2) + 1/4 * iint c K with
    c = q((xi+eta)/2) - p(|xi-eta|/2).  Returns (K_on_rotated_grid,
    refine) so solver node (i,j) maps to index ((i+j)*refine, (i-j)*refine).
    """
    N = 2 * n_solver * refine
    xi = np.linspace(0.0, 2.0 * ell, N + 1)
    ho = xi[1] - xi[0]
    big_xi, big_eta = np.meshgrid(xi, xi, indexing="ij")
    cmat = q_fn((big_xi + big_eta) / 2.0) - p_fn(np.abs(big_xi - big_eta) / 2.0)

    s = xi / 2.0
    integrand = q_fn(s) - p_fn(s)
    diag = np.zeros_like(s)
    diag[1:] = np.cumsum((integrand[1:] + integrand[:-1]) * (s[1] - s[0]) / 2.0)
    diag /= 2.0

    k0 = diag[:, None] + diag[None, :]
    k = k0.copy()
    for _ in range(max_iters):
        f = cmat * k
        ct = np.zeros_like(f)
        ct[1:, :] = np.cumsum((f[1:, :] + f[:-1, :]) * (ho / 2.0), axis=0)
        ct2 = np.zeros_like(ct)
        ct2[:, 1:] = np.cumsum((ct[:, 1:] + ct[:, :-1]) * (ho / 2.0), axis=1)
        knew = k0 + 0.25 * ct2
        change = float(np.max(np.abs(knew - k)))
        k = knew
        if change < tol:
            break
    return k, refine


def manufactured_kernel_case(grid: SpaceGrid):
    """Smooth reference kernel with the forcing, diagonal, and Robin data
    it induces for a=(1+x)^2, p=sin(pi y), q=1+x.

    K*(x,y) = sin(pi x) cos(pi y / 2) vanishes at the origin, so the
    solver's diagonal invariant holds.
    """
    kstar = lambda x, y: np.sin(np.pi * x) * np.cos(np.pi * y / 2.0)  # noqa: E731
    kxx = lambda x, y: -np.pi**2 * np.sin(np.pi * x) * np.cos(np.pi * y / 2.0)  # noqa: E731
    ky = lambda x, y: -np.pi / 2.0 * np.sin(np.pi * x) * np.sin(np.pi * y / 2.0)  # noqa: E731
    kyy = lambda x, y: -(np.pi / 2.0) ** 2 * np.sin(np.pi * x) * np.cos(np.pi * y / 2.0)  # noqa: E731

    a_fn = lambda s: (1.0 + s) ** 2  # noqa: E731
    ap_fn = lambda s: 2.0 * (1.0 + s)  # noqa: E731
    app_fn = lambda s: 2.0 * np.ones_like(s)  # noqa: E731
    p_fn = lambda s: np.sin(np.pi * s)  # noqa: E731
    q_fn = lambda s: 1.0 + s  # noqa: E731

    a = fld(a_fn, grid, Role.DIFFUSION)
    p = fld(p_fn, grid, Role.POTENTIAL_P)
    q = fld(q_fn, grid, Role.POTENTIAL_Q)
    x = grid.nodes
    big_x, big_y = np.meshgrid(x, x, indexing="ij")
    source = np.tril(
        a_fn(big_x) * kxx(big_x, big_y)
        - a_fn(big_y) * kyy(big_x, big_y)
        - 2.0 * ap_fn(big_y) * ky(big_x, big_y)
        - app_fn(big_y) * kstar(big_x, big_y)
        - (q_fn(big_x) - p_fn(big_y)) * kstar(big_x, big_y)
    )
    diagonal = kstar(x, x)
    robin_g = a_fn(0.0) * ky(x, 0.0) + ap_fn(0.0) * kstar(x, 0.0)
    reference = np.tril(kstar(big_x, big_y))
    return a, p, q, diagonal, robin_g, source, reference
