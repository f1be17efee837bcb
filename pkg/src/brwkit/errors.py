"""Exception hierarchy shared by the toolkit."""


class BRWError(Exception):
    """Base class for all toolkit errors."""


class LawError(BRWError, ValueError):
    """A reproduction law is structurally invalid."""


class DomainError(BRWError, ArithmeticError):
    """The log-Laplace transform is undefined at the requested argument."""


class NoRoot(BRWError):
    """The boundary-case equation has no root on the searchable domain."""


class Degenerate(BRWError):
    """The log-Laplace transform is affine, so no reduction exists."""


class PopulationOverflow(BRWError):
    """A generation exceeded the configured population cap."""


class EmptyPool(BRWError):
    """Two-stage sampling was requested with an empty R0 pool."""


class InsufficientTail(BRWError):
    """Too few samples fall inside the requested tail window."""


class EmptyInput(BRWError, ValueError):
    pass


class NonpositiveZ(BRWError, ValueError):
    pass


class NonpositiveSigma2(BRWError, ValueError):
    pass


class TooFewSurvivors(BRWError):
    pass


class ConfigError(BRWError, ValueError):
    """Configuration parsing failed; ``problems`` lists field-level diagnostics."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(str(p) for p in self.problems))
