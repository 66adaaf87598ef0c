"""Exception types shared across the package."""


class EpicptError(Exception):
    """Base class for package-specific failures."""


class DomainError(EpicptError, ValueError):
    """An argument falls outside the domain an operation is defined on."""


class InvalidTrajectoryError(EpicptError, ValueError):
    """An event sequence violates the bookkeeping invariants of the SIR process."""


class InfeasibleProposalError(EpicptError, RuntimeError):
    """A latent-data proposal cannot reproduce the observed counts.

    The sampler treats this as an automatic rejection rather than a failure.
    """


class LikelihoodNumericsError(EpicptError, ArithmeticError):
    """The complete-data log-likelihood evaluated to a non-finite value."""


class ConfigError(EpicptError, ValueError):
    """A configuration file or CLI argument failed validation."""
