"""Exception hierarchy shared across the harness.

Exit-code mapping in the CLI: ConfigurationError -> 1, everything else
unexpected -> 2. Divergence is not an error at the process level; it is
a per-trial status (see learners and protocol).
"""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""


class DataFormatError(ValueError):
    """A dataset file is malformed. Message carries file position info."""


class ConfigurationError(ValueError):
    """An experiment configuration is invalid or inconsistent."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss.

    Raised by the numeric substrate, caught by learners, recorded as the
    absorbing ``diverged`` status. Never allowed to escape a trial.
    """

    def __init__(self, message: str = "non-finite training loss"):
        super().__init__(message)
