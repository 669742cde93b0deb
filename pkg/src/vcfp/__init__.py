"""Voice-traffic fingerprinting workbench.

Synthetic encrypted-trace generation, trace preprocessing, classical
fingerprinting attacks, a padding+noise obfuscation defense with cost
accounting, and closed/open-world evaluation.
"""

__version__ = "0.1.0"

from .traces import (  # noqa: F401
    INCOMING,
    OUTGOING,
    CommandCategory,
    Dataset,
    Histogram,
    LabeledTrace,
    Packet,
    SummaryStats,
    Trace,
    dataset_stats,
    packet,
    validate_trace,
)
