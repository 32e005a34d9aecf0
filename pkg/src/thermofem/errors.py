"""Exception types shared across the solver."""


class PositivityError(RuntimeError):
    """A field required to be positive (density or temperature) is not.

    Carries the location of the first offending quadrature point so a
    time stepper can report where physical validity was lost and retry
    with a smaller step.
    """

    def __init__(self, what, where, index, value):
        self.what = what      # e.g. "temperature", "density"
        self.where = where    # "cell" | "interior_edge" | "boundary_edge"
        self.index = int(index)
        self.value = float(value)
        super().__init__(
            f"{what} must be positive but min value {value:.3e} "
            f"occurs at {where} {index}"
        )


class NonConvergenceError(RuntimeError):
    """Newton iteration failed to reach the requested residual norm."""

    def __init__(self, iterations, final_norm, reason=""):
        self.iterations = int(iterations)
        self.final_norm = float(final_norm)
        msg = (f"Newton did not converge after {iterations} iterations "
               f"(residual inf-norm {final_norm:.3e})")
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class DegenerateLagrangianError(ValueError):
    """The mechanical mass of a finite-dimensional system is singular."""
