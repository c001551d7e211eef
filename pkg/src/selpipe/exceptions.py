"""Exception hierarchy.

Data/usage problems derive from :class:`DataError`; failures of the numerical
machinery derive from :class:`NumericalError`.  The CLI maps the former to
exit code 2 and the latter to exit code 3.
"""


class SelpipeError(Exception):
    """Base class for all package errors."""


class DataError(SelpipeError):
    """Invalid input data or configuration."""


class MalformedInputError(DataError):
    """A cell of an input file failed to parse; message names row/column."""


class EmptyDataError(DataError):
    """Dataset has no features or no observed responses."""


class PipelineConfigError(DataError):
    """Invalid pipeline configuration."""


class SchemaError(PipelineConfigError):
    """Config does not match the pipeline JSON schema."""


class CycleError(PipelineConfigError):
    """Pipeline graph contains a cycle; message names a back edge."""


class PlacementError(PipelineConfigError):
    """A node occupies an illegal position (e.g. imputation not first)."""


class NumericalError(SelpipeError):
    """Failure of a numerical routine."""


class DegreesOfFreedomError(NumericalError):
    """Not enough rows relative to columns for the requested fit."""


class RankError(NumericalError):
    """Design matrix is rank deficient where full rank is required."""


class LeverageError(NumericalError):
    """A leverage value equals one, so influence measures are undefined."""


class NormalizationError(NumericalError):
    """A feature column has zero norm and cannot be normalized."""


class SolverError(NumericalError):
    """Iterative solver failed to converge; message reports the residual."""


class InfeasibleAtPointError(NumericalError):
    """A constraint set claimed to hold at a point is violated there.

    Signals a bug in an upstream selection-event characterization rather
    than a user error.
    """


class EmptySelectionError(NumericalError):
    """A pipeline stage was left with no rows or no features to work on."""


class SearchStallError(NumericalError):
    """The truncation-set line search stopped making progress."""


class DegenerateTruncationError(NumericalError):
    """Truncation set carries essentially no probability mass."""


class BranchConsistencyError(NumericalError):
    """Branches feeding a combine node disagree on shared state."""
