"""Per-tile cellular feature vectors: count and max/min pairwise centroid distance
for neoplastic, non-neoplastic epithelial, connective, and inflammatory cells.

Distances are Euclidean in detection-magnification pixels, computed exactly
over all unordered pairs. Tiles with fewer than two cells of a class get 0 for
both distances so vectors stay finite for the classifier.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import CellClass, NucleusRecord
from .raster import RasterConfig

# Fixed feature order: triples of (count, max_dist, min_dist) per class.
FEATURE_CLASS_ORDER = (
    CellClass.NEOPLASTIC,
    CellClass.NON_NEOPLASTIC_EPITHELIAL,
    CellClass.CONNECTIVE,
    CellClass.INFLAMMATORY,
)

_SHORT = {
    CellClass.NEOPLASTIC: "neoplastic",
    CellClass.NON_NEOPLASTIC_EPITHELIAL: "nonneoplastic",
    CellClass.CONNECTIVE: "connective",
    CellClass.INFLAMMATORY: "inflammatory",
}

FEATURE_NAMES = tuple(
    f"{_SHORT[cls]}_{stat}"
    for cls in FEATURE_CLASS_ORDER
    for stat in ("count", "max_dist", "min_dist")
)

N_FEATURES = len(FEATURE_NAMES)  # 12


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]  # 12 values in FEATURE_NAMES order

    def __post_init__(self):
        if len(self.values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} values, got {len(self.values)}")

    def triple(self, cls: CellClass) -> tuple[float, float, float]:
        i = 3 * FEATURE_CLASS_ORDER.index(cls)
        return self.values[i : i + 3]


def _pairwise_min_max(pts: np.ndarray) -> tuple[float, float]:
    """Exact (max, min) Euclidean distance over all unordered pairs.

    Works on squared distances and takes one sqrt at the end; sqrt is monotone
    and correctly rounded, so the result equals per-pair sqrt min/max exactly.
    Chunked row sweep keeps memory linear for dense tiles.
    """
    n = len(pts)
    min_d2 = np.inf
    max_d2 = 0.0
    xs = pts[:, 0]
    ys = pts[:, 1]
    for i in range(n - 1):
        dx = xs[i + 1 :] - xs[i]
        dy = ys[i + 1 :] - ys[i]
        d2 = dx * dx + dy * dy
        lo = d2.min()
        hi = d2.max()
        if lo < min_d2:
            min_d2 = lo
        if hi > max_d2:
            max_d2 = hi
    return float(np.sqrt(max_d2)), float(np.sqrt(min_d2))


def extract_features(records: list[NucleusRecord]) -> FeatureVector:
    """12-feature vector from tile-local records; classes outside the four
    feature classes are ignored."""
    values: list[float] = []
    for cls in FEATURE_CLASS_ORDER:
        pts = [(r.x, r.y) for r in records if r.cell_class is cls]
        n = len(pts)
        if n < 2:
            values.extend([float(n), 0.0, 0.0])
            continue
        max_d, min_d = _pairwise_min_max(np.asarray(pts, dtype=np.float64))
        values.extend([float(n), max_d, min_d])
    return FeatureVector(tuple(values))


def window_records(
    records: list[NucleusRecord], row: int, col: int, cfg: RasterConfig
) -> list[NucleusRecord]:
    """Records strictly inside the half-open tile footprint at detection
    magnification, translated to tile-local coordinates."""
    s = cfg.tile_footprint
    x0, x1 = col * s, (col + 1) * s
    y0, y1 = row * s, (row + 1) * s
    out = []
    for r in records:
        if x0 <= r.x < x1 and y0 <= r.y < y1:
            out.append(NucleusRecord(r.x - x0, r.y - y0, r.cell_class, r.confidence))
    return out


# --- feature table CSV --------------------------------------------------------

FEATURES_CSV_HEADER = ["tile_id", "slide_id", "label", *FEATURE_NAMES]


def write_features_csv(
    path: str | Path, rows: list[tuple[str, str, str, FeatureVector]]
) -> None:
    """Rows are (tile_id, slide_id, label_value, features)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURES_CSV_HEADER)
        for tile_id, slide_id, label, fv in rows:
            writer.writerow([tile_id, slide_id, label, *(repr(v) for v in fv.values)])


def read_features_csv(path: str | Path) -> list[tuple[str, str, str, FeatureVector]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FEATURES_CSV_HEADER:
            raise DataError(f"{path}: unexpected features header {header}")
        for row in reader:
            tile_id, slide_id, label = row[:3]
            fv = FeatureVector(tuple(float(v) for v in row[3:]))
            rows.append((tile_id, slide_id, label, fv))
    return rows
