import pytest
import torch

from cnn_harness.data import (
    CLASS_NAMES,
    SCORES_CSV_HEADER,
    TileDataset,
    TileEntry,
    load_tile,
    read_manifest,
    read_plan,
    read_scores_csv,
    write_scores_csv,
)

from conftest import make_tile_png, write_manifest_csv


def test_class_names_are_the_canonical_six():
    assert CLASS_NAMES == ("lepidic", "acinar", "papillary", "micropapillary", "solid", "nontumor")


def test_scores_header_matches_pipeline_convention():
    assert SCORES_CSV_HEADER == [
        "tile_id",
        "score_lepidic",
        "score_acinar",
        "score_papillary",
        "score_micropapillary",
        "score_solid",
        "score_nontumor",
        "pred_label",
    ]


def test_read_manifest_and_plan(tiny_dataset):
    _, _, manifest_path, plan_path, entries, assignments = tiny_dataset
    assert read_manifest(manifest_path) == entries
    plan_entries, plan_assignments = read_plan(plan_path)
    assert plan_entries == entries
    assert plan_assignments == assignments


def test_unknown_label_rejected(tmp_path):
    bad = [TileEntry("t0", "s0", "cribriform")]
    path = tmp_path / "manifest.csv"
    write_manifest_csv(path, bad)
    with pytest.raises(ValueError, match="cribriform"):
        read_manifest(path)


def test_bad_header_rejected(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text("a,b,c\n")
    with pytest.raises(ValueError, match="header"):
        read_manifest(path)


def test_load_tile_shape_and_range(tmp_path):
    make_tile_png(tmp_path / "t.png", 2, seed=1)
    x = load_tile(tmp_path / "t.png")
    assert x.shape == (3, 256, 256)
    assert x.dtype == torch.float32
    assert 0.0 <= float(x.min()) and float(x.max()) <= 1.0


def test_dataset_lists_missing_tiles(tiny_dataset):
    _, tiles_dir, _, _, entries, _ = tiny_dataset
    extra = entries + [TileEntry("ghost", "s9", "solid")]
    with pytest.raises(FileNotFoundError, match="ghost"):
        TileDataset(extra, tiles_dir)


def test_dataset_items(tiny_dataset):
    _, tiles_dir, _, _, entries, _ = tiny_dataset
    ds = TileDataset(entries, tiles_dir)
    x, y = ds[3]
    assert x.shape == (3, 256, 256)
    assert y == entries[3].label_index


def test_scores_csv_round_trip(tmp_path):
    rows = [("t0", [0.5, -1.25, 3.0, 0.0, 2.5, -0.125], "papillary")]
    path = tmp_path / "scores.csv"
    write_scores_csv(path, rows)
    assert read_scores_csv(path) == rows
