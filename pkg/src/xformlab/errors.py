"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad inputs: grid mismatches, out-of-range parameters, malformed manifests."""


class MeshConditionError(RuntimeError):
    """Triangle-march mesh condition violated (characteristic slope exceeds 1)."""


class InstabilityError(RuntimeError):
    """A marching scheme produced non-finite values."""


class SolverError(RuntimeError):
    """A linear solve failed (singular tridiagonal system)."""


class GateError(RuntimeError):
    """A precondition gate refused an input (e.g. field fails its own PDE residual)."""


class SupportConditionError(ValueError):
    """Test function violates the required boundary/support conditions."""
