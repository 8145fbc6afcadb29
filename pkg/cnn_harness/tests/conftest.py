import csv

import numpy as np
import pytest
from PIL import Image

from cnn_harness.data import CLASS_NAMES, MANIFEST_CSV_HEADER, PLAN_CSV_HEADER, TileEntry


def make_tile_png(path, label_index, seed):
    """A 256x256 tile whose dot density and channel depend on the label, so
    tiny training runs have real signal to latch onto."""
    rng = np.random.default_rng(seed)
    rgb = np.zeros((256, 256, 3), dtype=np.uint8)
    channel = [1, 1, 0, 1, 1, 2][label_index]
    density = 0.002 + 0.004 * label_index
    mask = rng.random((256, 256)) < density
    rgb[:, :, channel][mask] = 255
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def write_manifest_csv(path, entries):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_CSV_HEADER)
        for e in entries:
            writer.writerow([e.tile_id, e.slide_id, e.label])


def write_plan_csv(path, entries, assignments, trial=0, seed=7):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLAN_CSV_HEADER)
        for e in entries:
            writer.writerow([e.tile_id, e.slide_id, e.label, assignments[e.tile_id], trial, seed])


@pytest.fixture()
def tiny_dataset(tmp_path):
    """12 tiles over all six classes with a 6/2/4 train/val/test plan."""
    tiles_dir = tmp_path / "tiles"
    tiles_dir.mkdir()
    entries = []
    assignments = {}
    parts = ["train", "train", "val", "test"] * 3
    for i in range(12):
        label = CLASS_NAMES[i % 6]
        entry = TileEntry(f"t{i}", f"s{i % 4}", label)
        entries.append(entry)
        assignments[entry.tile_id] = parts[i]
        make_tile_png(tiles_dir / f"t{i}.png", i % 6, seed=i)
    manifest_path = tmp_path / "manifest.csv"
    plan_path = tmp_path / "plan.csv"
    write_manifest_csv(manifest_path, entries)
    write_plan_csv(plan_path, entries, assignments)
    return tmp_path, tiles_dir, manifest_path, plan_path, entries, assignments
