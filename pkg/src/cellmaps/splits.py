"""Seeded split plans over labeled tile manifests: WSI-based and tile-based k-fold.

The WSI-based (strong) protocol reserves whole slides for test so no slide
contributes tiles to both sides; the tile-based (weak) protocol mixes tiles
before folding, which is exactly the leakage audit_leakage quantifies.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import DataError, InfeasibleSplitError
from .rng import SplitMix64, derive_seed


class GrowthPattern(Enum):
    LEPIDIC = "lepidic"
    ACINAR = "acinar"
    PAPILLARY = "papillary"
    MICROPAPILLARY = "micropapillary"
    SOLID = "solid"
    NONTUMOR = "nontumor"


GROWTH_PATTERNS = tuple(GrowthPattern)

POLICY_WSI = "wsi"
POLICY_KFOLD = "kfold"

PART_TRAIN = "train"
PART_VAL = "val"
PART_TEST = "test"


@dataclass(frozen=True)
class LabeledTile:
    tile_id: str
    slide_id: str
    label: GrowthPattern


@dataclass(frozen=True)
class SplitPlan:
    policy: str  # POLICY_WSI or POLICY_KFOLD
    seed: int
    trial: int
    # tile_id -> "train"/"val"/"test" (wsi) or fold index as str (kfold)
    assignments: dict[str, str]

    def tiles_in(self, part: str) -> list[str]:
        return [t for t, p in self.assignments.items() if p == part]

    @property
    def n_folds(self) -> int:
        if self.policy != POLICY_KFOLD:
            raise ValueError("n_folds only defined for kfold plans")
        return 1 + max(int(p) for p in self.assignments.values())


def _check_manifest(manifest: list[LabeledTile]) -> None:
    if not manifest:
        raise ValueError("manifest is empty")
    seen = set()
    for t in manifest:
        if t.tile_id in seen:
            raise DataError(f"duplicate tile_id {t.tile_id!r} in manifest")
        seen.add(t.tile_id)


def _distinct_slides(manifest: list[LabeledTile]) -> list[str]:
    ordered = []
    seen = set()
    for t in manifest:
        if t.slide_id not in seen:
            seen.add(t.slide_id)
            ordered.append(t.slide_id)
    return ordered


def _min_slides_for_full_coverage(slide_classes: dict[str, set[GrowthPattern]]) -> int:
    # Exact set-cover over the 6-class universe via DP on 64 bitmasks.
    bit = {cls: 1 << i for i, cls in enumerate(GROWTH_PATTERNS)}
    masks = set()
    for classes in slide_classes.values():
        m = 0
        for cls in classes:
            m |= bit[cls]
        masks.add(m)
    full = (1 << len(GROWTH_PATTERNS)) - 1
    inf = len(slide_classes) + 1
    best = [inf] * (full + 1)
    best[0] = 0
    for covered in range(full + 1):
        if best[covered] >= inf:
            continue
        for m in masks:
            nxt = covered | m
            if best[covered] + 1 < best[nxt]:
                best[nxt] = best[covered] + 1
    return best[full]


def make_wsi_split(
    manifest: list[LabeledTile],
    n_test_slides: int = 6,
    val_fraction: float = 0.10,
    seed: int = 0,
    trial: int = 0,
    max_draws: int = 10_000,
) -> SplitPlan:
    """Reserve n_test_slides whole slides for test, resampling until the test
    tiles cover all six classes; split the remaining tiles 1-val_fraction/val_fraction.

    Deterministic for a fixed (manifest order, seed, trial): the RNG stream is
    derived from (seed, trial).
    """
    _check_manifest(manifest)
    slides = _distinct_slides(manifest)
    if not 0 < n_test_slides < len(slides):
        raise InfeasibleSplitError(
            f"need 0 < n_test_slides < n_slides, got {n_test_slides} of {len(slides)}"
        )
    if not 0 <= val_fraction < 1:
        raise ValueError(f"val_fraction must be in [0, 1), got {val_fraction}")

    slide_classes: dict[str, set[GrowthPattern]] = {s: set() for s in slides}
    for t in manifest:
        slide_classes[t.slide_id].add(t.label)
    all_classes = set().union(*slide_classes.values())
    missing = [c.value for c in GROWTH_PATTERNS if c not in all_classes]
    if missing:
        raise ValueError(f"manifest lacks classes entirely: {missing}")

    rng = SplitMix64(derive_seed(seed, trial))
    test_slides: set[str] | None = None
    for _ in range(max_draws):
        draw = rng.sample(slides, n_test_slides)
        covered = set().union(*(slide_classes[s] for s in draw))
        if all(c in covered for c in GROWTH_PATTERNS):
            test_slides = set(draw)
            break
    if test_slides is None:
        need = _min_slides_for_full_coverage(slide_classes)
        raise InfeasibleSplitError(
            f"no {n_test_slides}-slide test set covering all six classes found in "
            f"{max_draws} draws (minimum slides for full coverage: {need})"
        )

    assignments: dict[str, str] = {}
    rest = []
    for t in manifest:
        if t.slide_id in test_slides:
            assignments[t.tile_id] = PART_TEST
        else:
            rest.append(t.tile_id)
    if not rest:
        raise InfeasibleSplitError("no tiles left outside the test slides")
    rng.shuffle(rest)
    n_val = int(val_fraction * len(rest) + 0.5)
    for i, tile_id in enumerate(rest):
        assignments[tile_id] = PART_VAL if i < n_val else PART_TRAIN
    # Keep manifest order in the serialized plan.
    assignments = {t.tile_id: assignments[t.tile_id] for t in manifest}
    return SplitPlan(POLICY_WSI, seed, trial, assignments)


def make_tile_kfold(
    manifest: list[LabeledTile], k: int = 5, seed: int = 0, trial: int = 0
) -> SplitPlan:
    """Shuffle all tiles (slides mixed) and deal them round-robin into k folds."""
    _check_manifest(manifest)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > len(manifest):
        raise ValueError(f"k={k} exceeds manifest size {len(manifest)}")
    order = [t.tile_id for t in manifest]
    rng = SplitMix64(derive_seed(seed, trial))
    rng.shuffle(order)
    fold_of = {tile_id: str(i % k) for i, tile_id in enumerate(order)}
    assignments = {t.tile_id: fold_of[t.tile_id] for t in manifest}
    return SplitPlan(POLICY_KFOLD, seed, trial, assignments)


@dataclass(frozen=True)
class LeakageEntry:
    pairing: str  # e.g. "test" or "fold3"
    n_test_tiles: int
    n_leaked: int  # test tiles sharing a slide with any training tile


@dataclass(frozen=True)
class LeakageReport:
    policy: str
    entries: tuple[LeakageEntry, ...]

    @property
    def total_leaked(self) -> int:
        return sum(e.n_leaked for e in self.entries)


def audit_leakage(plan: SplitPlan, manifest: list[LabeledTile]) -> LeakageReport:
    """Count, per train/test pairing, test tiles whose slide also feeds training."""
    slide_of = {t.tile_id: t.slide_id for t in manifest}
    unknown = [t for t in plan.assignments if t not in slide_of]
    if unknown:
        raise DataError(f"plan references tiles missing from manifest: {unknown[:3]}...")
    entries = []
    if plan.policy == POLICY_WSI:
        train_slides = {
            slide_of[t] for t, p in plan.assignments.items() if p == PART_TRAIN
        }
        test_tiles = plan.tiles_in(PART_TEST)
        leaked = sum(1 for t in test_tiles if slide_of[t] in train_slides)
        entries.append(LeakageEntry(PART_TEST, len(test_tiles), leaked))
    elif plan.policy == POLICY_KFOLD:
        for fold in range(plan.n_folds):
            fold_name = str(fold)
            test_tiles = plan.tiles_in(fold_name)
            train_slides = {
                slide_of[t] for t, p in plan.assignments.items() if p != fold_name
            }
            leaked = sum(1 for t in test_tiles if slide_of[t] in train_slides)
            entries.append(LeakageEntry(f"fold{fold}", len(test_tiles), leaked))
    else:
        raise ValueError(f"unknown plan policy {plan.policy!r}")
    return LeakageReport(plan.policy, tuple(entries))


# --- manifest and plan CSV formats ------------------------------------------

MANIFEST_CSV_HEADER = ["tile_id", "slide_id", "label"]
PLAN_CSV_HEADER = ["tile_id", "slide_id", "label", "assignment", "trial", "seed"]


def write_manifest_csv(path: str | Path, manifest: list[LabeledTile]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_CSV_HEADER)
        for t in manifest:
            writer.writerow([t.tile_id, t.slide_id, t.label.value])


def read_manifest_csv(path: str | Path) -> list[LabeledTile]:
    manifest = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_CSV_HEADER:
            raise DataError(f"{path}: unexpected manifest header {header}")
        for tile_id, slide_id, label in reader:
            manifest.append(LabeledTile(tile_id, slide_id, GrowthPattern(label)))
    return manifest


def write_plan_csv(path: str | Path, plan: SplitPlan, manifest: list[LabeledTile]) -> None:
    by_id = {t.tile_id: t for t in manifest}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLAN_CSV_HEADER)
        for tile_id, part in plan.assignments.items():
            t = by_id[tile_id]
            writer.writerow([tile_id, t.slide_id, t.label.value, part, plan.trial, plan.seed])


def read_plan_csv(path: str | Path) -> tuple[SplitPlan, list[LabeledTile]]:
    assignments: dict[str, str] = {}
    manifest = []
    trial = seed = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PLAN_CSV_HEADER:
            raise DataError(f"{path}: unexpected plan header {header}")
        for tile_id, slide_id, label, part, trial_s, seed_s in reader:
            assignments[tile_id] = part
            manifest.append(LabeledTile(tile_id, slide_id, GrowthPattern(label)))
            trial, seed = int(trial_s), int(seed_s)
    if not assignments:
        raise DataError(f"{path}: empty plan")
    policy = POLICY_WSI if any(
        p in (PART_TRAIN, PART_VAL, PART_TEST) for p in assignments.values()
    ) else POLICY_KFOLD
    return SplitPlan(policy, seed, trial, assignments), manifest
