"""Cell-map pipeline: nuclei ingestion, rasterization, features, SVM, and validation splits."""

__version__ = "0.1.0"

from .ingest import CellClass, NucleusRecord, SlideMeta
from .splits import GrowthPattern, LabeledTile, SplitPlan

__all__ = [
    "CellClass",
    "NucleusRecord",
    "SlideMeta",
    "GrowthPattern",
    "LabeledTile",
    "SplitPlan",
    "__version__",
]
