"""Score tiles with a trained checkpoint and emit the shared score CSV."""

from __future__ import annotations

from pathlib import Path

import torch
import torchvision

from .data import CLASS_NAMES, TileDataset, read_manifest, write_scores_csv


def load_checkpoint(path: str | Path) -> torch.nn.Module:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("classes") != list(CLASS_NAMES):
        raise ValueError(
            f"{path}: checkpoint class order {payload.get('classes')} "
            f"does not match canonical {list(CLASS_NAMES)}"
        )
    model = torchvision.models.resnet50(weights=None)
    model.fc = torch.nn.Linear(model.fc.in_features, len(CLASS_NAMES))
    model.load_state_dict(payload["model"])
    model.eval()
    return model


def infer(
    checkpoint_path: str | Path,
    manifest_path: str | Path,
    tiles_dir: str | Path,
    out_csv: str | Path,
    batch_size: int = 8,
) -> int:
    """One score row per manifest tile (pre-softmax logits + argmax label).

    Returns the row count. Missing tile files abort before any scoring.
    """
    model = load_checkpoint(checkpoint_path)
    entries = read_manifest(manifest_path)
    dataset = TileDataset(entries, tiles_dir)  # missing tiles listed and aborted here
    rows = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            idxs = range(start, min(start + batch_size, len(dataset)))
            x = torch.stack([dataset[i][0] for i in idxs])
            logits = model(x)
            for k, i in enumerate(idxs):
                rows.append(
                    (
                        dataset.entries[i].tile_id,
                        [float(v) for v in logits[k]],
                        CLASS_NAMES[int(logits[k].argmax())],
                    )
                )
    write_scores_csv(out_csv, rows)
    return len(rows)
