"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit codes: 2 usage (handled by click), 3 data error, 4 numeric
fault, 5 missing cells.
"""


class CrosstagError(Exception):
    exit_code = 3


class InvalidAudioError(CrosstagError):
    """Audio input is empty, non-finite, or otherwise unusable."""


class TooShortError(CrosstagError):
    """Clip shorter than one analysis frame."""


class DegenerateFilterbankError(CrosstagError):
    """A mel filter ended up with no energy anywhere (zero-width triangle)."""


class ShapeError(CrosstagError):
    """Operands with incompatible shapes; message names the op and dims."""


class NoGraphError(CrosstagError):
    """backward() called on a tensor with no recorded graph."""


class NumericFaultError(CrosstagError):
    exit_code = 4


class OptimizerError(CrosstagError):
    """Optimizer asked to step a parameter with no gradient."""


class ConfigError(CrosstagError):
    """Invalid or self-contradictory configuration."""


class CheckpointError(CrosstagError):
    """Malformed checkpoint file; message names the offending field."""


class ManifestError(CrosstagError):
    """Malformed dataset manifest; message carries line/record id."""


class VocabularyError(CrosstagError):
    """Fewer distinct tags than the requested vocabulary size."""


class VocabMismatchError(CrosstagError):
    """Checkpoint vocabulary does not match the dataset vocabulary."""


class SynthSpecError(CrosstagError):
    """Unsatisfiable synthetic-corpus spec."""


class TransferError(CrosstagError):
    """Source/target architectures or shared-layer shapes disagree."""


class DataError(CrosstagError):
    """Empty split or otherwise unusable dataset at run time."""


class TrainingFault(NumericFaultError):
    """Non-finite loss; message carries epoch and step."""


class MissingCellError(CrosstagError):
    exit_code = 5


class RegistryConflictError(CrosstagError):
    """Duplicate registry records with differing scores for the same cell."""
