"""Fine-tune a ResNet50 on cell-map tiles: Adam, cross-entropy, random
horizontal/vertical flips, fixed seed throughout.

Defaults follow the training recipe this harness reproduces (20 epochs,
learning rate 1e-5, ImageNet-pretrained backbone); batch size 32 and zero
weight decay are harness defaults. Where pretrained weights cannot be loaded
(no cache, no network), the backbone falls back to seeded random
initialization with a warning — configs and logs record which happened.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import torch
import torchvision

from .data import CLASS_NAMES, TileDataset, read_manifest, read_plan, write_scores_csv

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-5
    batch_size: int = 32
    weight_decay: float = 0.0
    flip_augmentation: bool = True
    pretrained: str = "auto"  # "auto" | "none" | path to a state-dict file
    input_size: int = 256
    class_names: tuple[str, ...] = field(default=CLASS_NAMES)
    # Stop once the epoch's mean training loss falls below this (None = never).
    stop_at_train_loss: float | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.lr <= 0 or self.batch_size <= 0:
            raise ValueError(f"invalid training config: {self}")


def build_model(pretrained: str, seed: int) -> tuple[torch.nn.Module, str]:
    """ResNet50 with a 6-class head; returns (model, init description)."""
    torch.manual_seed(seed)
    init = "random"
    weights = None
    if pretrained == "auto":
        try:
            weights = torchvision.models.ResNet50_Weights.IMAGENET1K_V2
            model = torchvision.models.resnet50(weights=weights)
            init = "imagenet"
        except Exception as exc:
            log.warning("pretrained weights unavailable (%s); using random init", exc)
            model = torchvision.models.resnet50(weights=None)
    elif pretrained == "none":
        model = torchvision.models.resnet50(weights=None)
    else:
        model = torchvision.models.resnet50(weights=None)
        state = torch.load(pretrained, map_location="cpu", weights_only=True)
        model.load_state_dict(state, strict=False)
        init = f"file:{pretrained}"
    torch.manual_seed(seed)  # head init independent of backbone source
    model.fc = torch.nn.Linear(model.fc.in_features, len(CLASS_NAMES))
    return model, init


def _flip_batch(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    flips = torch.rand(x.shape[0], 2, generator=gen)
    for i in range(x.shape[0]):
        if flips[i, 0] < 0.5:
            x[i] = torch.flip(x[i], dims=[-1])
        if flips[i, 1] < 0.5:
            x[i] = torch.flip(x[i], dims=[-2])
    return x


@torch.no_grad()
def _epoch_eval(model, dataset, batch_size) -> tuple[float, float]:
    model.eval()
    criterion = torch.nn.CrossEntropyLoss(reduction="sum")
    total_loss = 0.0
    correct = 0
    for start in range(0, len(dataset), batch_size):
        items = [dataset[i] for i in range(start, min(start + batch_size, len(dataset)))]
        x = torch.stack([it[0] for it in items])
        y = torch.tensor([it[1] for it in items])
        logits = model(x)
        total_loss += float(criterion(logits, y))
        correct += int((logits.argmax(dim=1) == y).sum())
    model.train()
    return total_loss / len(dataset), correct / len(dataset)


def _score_rows(model, dataset, batch_size) -> list[tuple[str, list[float], str]]:
    model.eval()
    rows = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            idxs = range(start, min(start + batch_size, len(dataset)))
            x = torch.stack([dataset[i][0] for i in idxs])
            logits = model(x)
            for k, i in enumerate(idxs):
                entry = dataset.entries[i]
                row_logits = [float(v) for v in logits[k]]
                pred = CLASS_NAMES[int(logits[k].argmax())]
                rows.append((entry.tile_id, row_logits, pred))
    return rows


@dataclass(frozen=True)
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    scores_path: Path
    init: str


def train(
    manifest_path: str | Path,
    plan_path: str | Path,
    tiles_dir: str | Path,
    out_dir: str | Path,
    config: TrainConfig = TrainConfig(),
    seed: int = 0,
    score_part: str = "test",
) -> TrainResult:
    """Train on the plan's train part, monitor val loss per epoch, write a
    checkpoint, a per-epoch log CSV, and a score CSV for `score_part`."""
    if tuple(config.class_names) != CLASS_NAMES:
        raise ValueError(
            f"class order mismatch: config {config.class_names} vs canonical {CLASS_NAMES}"
        )
    manifest = read_manifest(manifest_path)
    plan_entries, assignments = read_plan(plan_path)
    known = {e.tile_id for e in manifest}
    unknown = [e.tile_id for e in plan_entries if e.tile_id not in known]
    if unknown:
        raise ValueError(f"plan tiles missing from manifest (e.g. {unknown[:5]})")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tiles_dir = Path(tiles_dir)

    train_set = TileDataset(
        [e for e in plan_entries if assignments[e.tile_id] == "train"], tiles_dir
    )
    val_set = TileDataset(
        [e for e in plan_entries if assignments[e.tile_id] == "val"], tiles_dir
    )
    score_set = TileDataset(
        [e for e in plan_entries if assignments[e.tile_id] == score_part], tiles_dir
    )
    if len(train_set) == 0:
        raise ValueError(f"plan {plan_path} has no train tiles")

    torch.use_deterministic_algorithms(True, warn_only=True)
    model, init = build_model(config.pretrained, seed)
    model.train()
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    criterion = torch.nn.CrossEntropyLoss()
    gen = torch.Generator().manual_seed(seed)

    log_rows = []
    for epoch in range(config.epochs):
        t0 = time.time()
        order = torch.randperm(len(train_set), generator=gen).tolist()
        epoch_loss = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            x = torch.stack([train_set[i][0] for i in batch_idx])
            y = torch.tensor([train_set[i][1] for i in batch_idx])
            if config.flip_augmentation:
                x = _flip_batch(x, gen)
            optimizer.zero_grad()
            logits = model(x)
            loss = criterion(logits, y)
            loss.backward()
            optimizer.step()
            epoch_loss += loss.detach().item() * len(batch_idx)
            correct += int((logits.argmax(dim=1) == y).sum())
        train_loss = epoch_loss / len(train_set)
        train_acc = correct / len(train_set)
        if len(val_set):
            val_loss, val_acc = _epoch_eval(model, val_set, config.batch_size)
        else:
            val_loss, val_acc = float("nan"), float("nan")
        log_rows.append([epoch, repr(train_loss), repr(train_acc), repr(val_loss), repr(val_acc)])
        log.info(
            "epoch %d: train_loss=%.4f train_acc=%.3f val_loss=%.4f (%.0fs)",
            epoch, train_loss, train_acc, val_loss, time.time() - t0,
        )
        if config.stop_at_train_loss is not None and train_loss < config.stop_at_train_loss:
            break

    checkpoint_path = out_dir / "checkpoint.pt"
    torch.save(
        {
            "model": model.state_dict(),
            "classes": list(CLASS_NAMES),
            "config": asdict(config),
            "seed": seed,
            "init": init,
        },
        checkpoint_path,
    )
    log_path = out_dir / "train_log.csv"
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        writer.writerows(log_rows)

    scores_path = out_dir / "scores.csv"
    write_scores_csv(scores_path, _score_rows(model, score_set, config.batch_size))
    return TrainResult(checkpoint_path, log_path, scores_path, init)
