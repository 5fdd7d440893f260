"""Exception types shared across the package."""


class HyperraceError(Exception):
    """Base class for all package-specific errors."""


class ParseError(HyperraceError):
    """A scenario, experiment or CSV file is malformed or missing a required field."""


class ValidationError(HyperraceError):
    """A loaded object violates one of its documented invariants.

    The message names the violated invariant.
    """


class ConfigError(HyperraceError):
    """An unknown controller/method/objective id or inconsistent run configuration."""


class Infeasible(HyperraceError):
    """The requested optimisation problem has no solution (empty feasible set)."""


class Unbounded(HyperraceError):
    """A linear program is unbounded (too few enclosing constraints)."""


class BudgetTooSmall(HyperraceError):
    """The compute budget does not allow even a single reachability step."""


class BoundsViolation(HyperraceError):
    """A control input lies outside its admissible box."""


class NoTarget(HyperraceError):
    """An open path has been exhausted; no lookahead target exists."""


class NoGap(HyperraceError):
    """No traversable gap in the scan; the caller should brake."""
