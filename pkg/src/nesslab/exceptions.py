"""Error and warning types shared across the package."""


class NesslabError(Exception):
    """Base class for solver-level failures."""


class SingularSError(NesslabError):
    """The sample-space Schur complement S(E) is numerically singular.

    Signals a (near-)bound state or an embedded eigenvalue at the offending
    energy; downstream boundary-value formulas are unreliable there.
    """

    def __init__(self, E, cond):
        self.E = E
        self.cond = cond
        super().__init__(f"S(E) numerically singular at E={E!r} (cond={cond:.3e})")


class NoConvergenceError(NesslabError):
    """A fixed-point iteration hit its sweep budget above tolerance."""

    def __init__(self, residual, iterations, what="fixed point"):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"{what} did not converge: residual={residual:.3e} "
            f"after {iterations} iterations"
        )


class NonDecayingPropagatorError(NesslabError):
    """Sample-to-sample propagator amplitudes fail the dispersive-decay test.

    Raised when spectral weight is missing from the band (bound states,
    or a resonance too narrow for the grid) or when t^(3/2)-scaled
    amplitudes grow over the probed late-time window.
    """


class NotEquilibriumError(NesslabError):
    """An equilibrium-only routine was called with biased reservoirs."""


class WindowTooLargeError(NesslabError):
    """The short-time integral-equation window is not contracting."""

    def __init__(self, ratio, window):
        self.ratio = ratio
        self.window = window
        super().__init__(
            f"propagator window {window:.4g} not contracting (ratio {ratio:.3f} > 0.95)"
        )


class NoPlateauError(NesslabError):
    """Time-domain observables did not settle within the trajectory."""


class ConfigError(NesslabError):
    """A run configuration file is missing, malformed, or inconsistent."""


class RecurrenceHorizonWarning(UserWarning):
    """Evolution time exceeds the safe fraction of the finite-lead recurrence time."""
