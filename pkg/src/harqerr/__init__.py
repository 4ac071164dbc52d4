"""Decoding-error models for Chase-combining HARQ.

The IE and DE failure models live in ``error_models``; ``phy_sim`` provides
the link-level ground truth they are compared against. Pairwise error
bounds are in ``pep`` and block-fading averages in ``fading``.
"""

__version__ = "0.1.0"

from .error_models import (  # noqa: E402
    HarqOutcome,
    ModelKind,
    SnrSchedule,
    cond_error_prob,
    failure_prob,
    sample_error_sequence,
    sample_error_sequences,
)
from .per_models import PerModel, PerVariant, db_to_linear, eval_per, fit_exponential, linear_to_db  # noqa: E402

__all__ = [
    "__version__",
    "HarqOutcome",
    "ModelKind",
    "SnrSchedule",
    "PerModel",
    "PerVariant",
    "cond_error_prob",
    "failure_prob",
    "sample_error_sequence",
    "sample_error_sequences",
    "eval_per",
    "fit_exponential",
    "db_to_linear",
    "linear_to_db",
]
