"""Exception types shared across the package."""


class TarifError(Exception):
    """Base class for all package errors."""


class ShapeError(TarifError, ValueError):
    """Operands have incompatible shapes."""


class DegenerateInputError(TarifError, ValueError):
    """Input is structurally valid but degenerate (zero row, empty class, ...)."""


class ContractError(TarifError, ValueError):
    """A documented precondition was violated by the caller."""


class NumericalError(TarifError, RuntimeError):
    """A numerical routine failed (non-convergence, non-finite values)."""


class TapeUsageError(TarifError, ValueError):
    """A Var was used with a tape it does not belong to."""


class GraphParseError(TarifError, ValueError):
    """A graph file could not be parsed; message carries the line number."""


class StratificationError(TarifError, ValueError):
    """A class is too small to stratify into train/val/test splits."""


class SnapshotCapError(TarifError, ValueError):
    """Explicit attention-map materialization was refused because n is too large."""


class ConstructionError(TarifError, RuntimeError):
    """An internally constructed object violated its own invariant."""


class TrainingDiverged(TarifError, RuntimeError):
    """Training produced a non-finite loss.

    ``checkpoint_path`` points at the last finite state when the caller
    provided an output directory, else it is None.
    """

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class ConfigError(TarifError, ValueError):
    """Invalid CLI flags or config file contents (usage error, exit code 2)."""
