"""Counterfactual knowledge distillation workbench.

Detects and removes shortcut features ("Clever Hans" behaviour) in image
classifiers: a normalizing flow provides a latent space in which gradient
ascent on the classifier output produces counterfactual images, a teacher
judges whether each counterfactual flipped the true class content or merely
exploited a confounder, and the verdicts drive iterative fine-tuning of the
classifier on relabeled counterfactuals.
"""

from .errors import (
    ConfigurationError,
    DuplicateVerdictError,
    InputError,
    NumericalError,
    TeacherSessionError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DuplicateVerdictError",
    "InputError",
    "NumericalError",
    "TeacherSessionError",
    "__version__",
]
