"""File interfaces shared with the cell-map pipeline: manifest and split-plan
CSVs in, PNG tiles in, score CSVs out.

The class order below is the pipeline's canonical growth-pattern order; the
score CSV header must match the SVM score CSV byte for byte so downstream
evaluation consumes either file unchanged.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

CLASS_NAMES = ("lepidic", "acinar", "papillary", "micropapillary", "solid", "nontumor")

MANIFEST_CSV_HEADER = ["tile_id", "slide_id", "label"]
PLAN_CSV_HEADER = ["tile_id", "slide_id", "label", "assignment", "trial", "seed"]
SCORES_CSV_HEADER = ["tile_id", *(f"score_{c}" for c in CLASS_NAMES), "pred_label"]


@dataclass(frozen=True)
class TileEntry:
    tile_id: str
    slide_id: str
    label: str

    @property
    def label_index(self) -> int:
        return CLASS_NAMES.index(self.label)


def _check_labels(entries: list[TileEntry], path) -> None:
    bad = sorted({e.label for e in entries} - set(CLASS_NAMES))
    if bad:
        raise ValueError(f"{path}: labels outside the canonical class set: {bad}")


def read_manifest(path: str | Path) -> list[TileEntry]:
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_CSV_HEADER:
            raise ValueError(f"{path}: unexpected manifest header {header}")
        for tile_id, slide_id, label in reader:
            entries.append(TileEntry(tile_id, slide_id, label))
    _check_labels(entries, path)
    return entries


def read_plan(path: str | Path) -> tuple[list[TileEntry], dict[str, str]]:
    """Returns (entries, tile_id -> assignment)."""
    entries = []
    assignments = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PLAN_CSV_HEADER:
            raise ValueError(f"{path}: unexpected plan header {header}")
        for tile_id, slide_id, label, assignment, _trial, _seed in reader:
            entries.append(TileEntry(tile_id, slide_id, label))
            assignments[tile_id] = assignment
    _check_labels(entries, path)
    return entries, assignments


def load_tile(path: str | Path) -> torch.Tensor:
    """PNG tile -> float32 tensor (3, H, W) scaled to [0, 1]."""
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(rgb).permute(2, 0, 1).contiguous()


class TileDataset(torch.utils.data.Dataset):
    """Tiles named <tile_id>.png under one directory; fails fast if any are missing."""

    def __init__(self, entries: list[TileEntry], tiles_dir: str | Path):
        self.entries = list(entries)
        self.tiles_dir = Path(tiles_dir)
        missing = [e.tile_id for e in self.entries if not (self.tiles_dir / f"{e.tile_id}.png").exists()]
        if missing:
            raise FileNotFoundError(
                f"{len(missing)} tile PNGs missing under {self.tiles_dir} "
                f"(e.g. {missing[:5]})"
            )

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, idx: int):
        entry = self.entries[idx]
        return load_tile(self.tiles_dir / f"{entry.tile_id}.png"), entry.label_index


def write_scores_csv(path: str | Path, rows: list[tuple[str, list[float], str]]) -> None:
    """Rows are (tile_id, six logits in CLASS_NAMES order, predicted label)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_CSV_HEADER)
        for tile_id, logits, pred in rows:
            writer.writerow([tile_id, *(repr(float(v)) for v in logits), pred])


def read_scores_csv(path: str | Path) -> list[tuple[str, list[float], str]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORES_CSV_HEADER:
            raise ValueError(f"{path}: unexpected scores header {header}")
        for row in reader:
            rows.append((row[0], [float(v) for v in row[1:-1]], row[-1]))
    return rows
