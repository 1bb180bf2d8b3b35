"""Exception hierarchy. The CLI maps each family onto an exit code."""


class KGSamplingError(Exception):
    exit_code = 2


class ConfigError(KGSamplingError):
    """Bad configuration or usage (exit 1)."""

    exit_code = 1


class DataError(KGSamplingError):
    """Malformed or inconsistent input data (exit 2)."""

    exit_code = 2


class LexiconError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class DuplicateIdError(DataError):
    pass


class IndexVersionError(DataError):
    pass


class LexiconHashMismatchError(DataError):
    pass


class MissingGroupLabelError(DataError):
    pass


class InsufficientGroupsError(DataError):
    def __init__(self, stratum: str, required: int, available: int):
        self.stratum = stratum
        self.required = required
        self.available = available
        super().__init__(
            f"not enough {stratum} groups: need {required} distinct, have {available}"
        )


class ZeroNormError(DataError):
    """A vector with no direction was asked to be normalized."""


class NormalizationContractError(ValueError):
    pass


class DivergenceError(KGSamplingError):
    """Training produced a non-finite loss (exit 3)."""

    exit_code = 3
