"""Fine-tune a ResNet50 on cell-map PNG tiles and emit margin-score CSVs."""

__version__ = "0.1.0"

from .data import CLASS_NAMES, SCORES_CSV_HEADER
from .train import TrainConfig, train
from .infer import infer

__all__ = ["CLASS_NAMES", "SCORES_CSV_HEADER", "TrainConfig", "train", "infer", "__version__"]
