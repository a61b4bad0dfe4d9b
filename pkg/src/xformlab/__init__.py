"""Numerical laboratory for the 1-D inverse coefficient problem
sigma*du/dt = a(x)*d2u/dx2 - p(x)*u with lateral Cauchy data at x=0.

Subpackages by concern:

* ``corelab``   grids, sampled coefficients, admissibility, numeric primitives
* ``evolve``    Crank-Nicolson forward solver, trace extraction, residuals
* ``goursat``   transformation-kernel solver on the triangle, characteristics
* ``transform`` Volterra transform u -> u + Ku and intertwining checks
* ``recon``     Cauchy-data simulation, adjoint gradients, reconstruction
* ``carleman``  weighted-estimate (large-parameter) verification
* ``cli``       manifest-driven experiment runner
"""

__version__ = "0.1.0"

from . import backend  # noqa: F401  (establishes the kernel dispatch early)
