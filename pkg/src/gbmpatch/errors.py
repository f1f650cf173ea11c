"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 2, data problems
exit 3, numeric failures exit 4.
"""


class GbmPatchError(Exception):
    """Base class for all package errors."""


class DimensionError(GbmPatchError, ValueError):
    """Tensor or image shapes are incompatible with an operation."""


class ParameterError(GbmPatchError, ValueError):
    """An argument is outside its legal range (e.g. dropout rate >= 1)."""


class ContractError(GbmPatchError, ValueError):
    """A call violates an API contract (e.g. backward on a non-scalar)."""


class DataError(GbmPatchError, ValueError):
    """Input data is malformed: bad labels, unreadable files, bad manifests."""


class PpmParseError(DataError):
    """A PPM file failed to parse; message includes the byte offset."""


class StratificationError(DataError):
    """A class has too few samples to fill every fold."""


class NumericError(GbmPatchError, RuntimeError):
    """A numeric invariant broke at runtime (NaN/Inf where finite required)."""
