"""Exception taxonomy for the pcal package.

Grouped so the command line can map families to distinct exit codes:
configuration, data/schema, numeric failures, and IO.
"""


class PcalError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PcalError):
    """Run configuration is malformed (unknown keys, bad values)."""


# data / schema problems -----------------------------------------------------

class SchemaError(PcalError):
    """Column schema is inconsistent or does not match the data."""


class MissingColumn(SchemaError):
    """A schema column is absent from the CSV header."""


class MalformedCell(PcalError):
    """A cell cannot be used for its declared role (bad parse, non-finite)."""


class EmptyDataset(PcalError):
    """The source contains no data rows."""


class InvalidSpec(PcalError):
    """A synthetic-data spec field is out of range."""


class DegenerateSplit(PcalError):
    """A requested split would leave one side empty."""


class LengthMismatch(PcalError):
    """Two paired vectors differ in length."""


class NoFeaturesRemain(PcalError):
    """A column filter removed every feature column."""


class ConstantTarget(PcalError):
    """R-squared is undefined for a constant target vector."""


# network / numeric problems -------------------------------------------------

class InvalidShape(PcalError):
    """A network shape description is unusable."""


class DimMismatch(PcalError):
    """Array dimensions do not match the network or each other."""


class StaleCache(DimMismatch):
    """A forward cache does not correspond to the given net and gradient."""


class NonFiniteGradient(PcalError):
    """An optimizer step received a NaN or infinite gradient."""


class NonFiniteLoss(PcalError):
    """Training produced a NaN or infinite loss."""


# IO problems ----------------------------------------------------------------

class IoError(PcalError):
    """An artifact could not be read or written."""


class MissingCheckpoint(IoError):
    """A required checkpoint file is absent."""


class NotFitted(PcalError):
    """predict() was called on a regressor before fit()."""


class NotConvergedWarning(UserWarning):
    """An iterative solver hit its iteration cap before its tolerance."""
