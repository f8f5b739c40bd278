"""Exception types shared across the workbench."""


class ConfigurationError(ValueError):
    """A config value is out of range, inconsistent, or refers to something unknown."""


class InputError(ValueError):
    """Runtime data handed to an operation has the wrong shape, dtype, or range."""


class NumericalError(RuntimeError):
    """A numerical routine produced non-finite values; message carries diagnostics."""


class DuplicateVerdictError(RuntimeError):
    """A verdict for this record id was already stored; first verdict wins."""


class TeacherSessionError(RuntimeError):
    """An interactive feedback session ended without all required verdicts."""
