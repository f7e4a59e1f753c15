"""Exception types shared across the package."""


class FuselmError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(FuselmError):
    """A requested configuration is internally inconsistent or unsatisfiable."""


class InputError(FuselmError):
    """An argument is outside its documented domain (bad position, bad id, ...)."""


class CorpusError(FuselmError):
    """A corpus or data file could not be read or parsed."""


class StoreFormatError(FuselmError):
    """An artefact store file violates the binary format."""


class StoreKeyError(FuselmError):
    """A (sentence_idx, prefix_len) key is not present in an artefact store."""


class NumericError(FuselmError):
    """A computation produced non-finite values."""


class AlignmentError(FuselmError):
    """Two word-level sequences that must correspond 1:1 diverge."""


class UndefinedCorrelationError(FuselmError):
    """Pearson correlation is undefined (too few samples or zero variance)."""
