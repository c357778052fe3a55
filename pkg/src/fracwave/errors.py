"""Exception types shared across the package.

Exit-code mapping used by the CLI: ConfigurationError -> 2,
NumericalError (including DivergedTrajectory) -> 3, rate-target
assertion failures -> 1.
"""


class ConfigurationError(ValueError):
    """Invalid parameter, config-file key, or incompatible plan."""


class NumericalError(RuntimeError):
    """Numerical failure (e.g. covariance factorization after jitter)."""


class DivergedTrajectory(NumericalError):
    """A trajectory exceeded the coefficient magnitude cap.

    Carries the step index at which the blow-up was detected.
    """

    def __init__(self, step, magnitude):
        super().__init__(f"trajectory diverged at step {step} (|coeff| = {magnitude:.3e})")
        self.step = step
        self.magnitude = magnitude
