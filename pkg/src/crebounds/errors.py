"""Exception hierarchy shared by the numerical modules."""


class NumericalError(RuntimeError):
    """A numerical stage failed; the CLI maps this to exit code 3."""


class SingularSystemError(NumericalError):
    """Linear system is singular or the solver broke down."""


class EquilibrationError(NumericalError):
    """Traction equilibration or a local stress solve failed."""


class NonGalerkinError(EquilibrationError):
    """The supplied displacement is not the Galerkin solution of the loads."""


class QuadratureError(NumericalError):
    """Geometric quadrature left the mesh or produced inconsistent values."""
