"""Seeded synthetic slides: nuclei point patterns with the defining geometry of
each growth pattern, emitted in the same detector-JSON format the real pipeline
ingests.

One pattern per slide, so tile labels are exact. Per-slide nuisance parameters
(density multiplier, global rotation, positional jitter) make slides of one
class differ systematically from each other while tiles within a slide stay
alike; that within-slide coherence is what a tile-mixed split can exploit and
a slide-held-out split cannot.

Geometry kernels (coordinates at detection magnification, 20x):
  solid           dense sheet, Bridson Poisson-disc spacing ~12 px
  lepidic         single-file cells on large closed circles (r 120-240 px),
                  sparse connective in the septa between circles
  acinar          many small rings (r 40-80 px) with empty lumina, sparse
                  connective between rings
  papillary       branching random-walk cores of connective cells lined on
                  both sides by neoplastic cells at ~14 px offset
  micropapillary  isolated tufts of 5-10 neoplastic cells (radius <= 30 px),
                  no connective at all
  nontumor        non-neoplastic epithelial cells on lepidic-like curves
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError
from .ingest import DEFAULT_CLASS_CODES, CellClass, NucleusRecord, SlideMeta
from .raster import RasterConfig, tile_grid
from .rng import SplitMix64, derive_seed
from .splits import GrowthPattern, LabeledTile, write_manifest_csv

# Base densities, tuned so neoplastic counts order solid > acinar > lepidic >
# micropapillary with margin, while the lepidic and acinar per-slide ranges
# overlap under the density nuisance (that overlap is the cross-slide
# ambiguity a slide-held-out split has to generalize across).
SOLID_SPACING = 12.0  # Poisson-disc radius before density scaling
LEPIDIC_PITCH = 400.0  # circle-center grid pitch
LEPIDIC_RADIUS = (120.0, 240.0)
LEPIDIC_ARC_SPACING = 13.0
ACINAR_PITCH = 210.0
ACINAR_RADIUS = (40.0, 80.0)
ACINAR_ARC_SPACING = 11.0
PAPILLARY_STEP = 24.0
PAPILLARY_TREE_STEPS = 54  # ~1300 px of core per tile footprint
PAPILLARY_CORE_SPACING = 10.0
PAPILLARY_LINING_SPACING = 12.0
PAPILLARY_LINING_OFFSET = 14.0
PAPILLARY_BRANCH_PROB = 0.07
MICROPAP_TUFTS_PER_TILE = 18.0
MICROPAP_TUFT_SEPARATION = 80.0
MICROPAP_TUFT_RADIUS = (10.0, 30.0)
MICROPAP_CELLS = (5, 10)
NONTUMOR_PITCH = 430.0
NONTUMOR_RADIUS = (130.0, 250.0)
NONTUMOR_ARC_SPACING = 14.0
# Sparse connective in septa, mean per tile footprint (must stay well under
# one so most non-papillary tumor tiles carry zero connective cells).
CONNECTIVE_PER_TILE = {
    GrowthPattern.LEPIDIC: 0.45,
    GrowthPattern.ACINAR: 0.55,
    GrowthPattern.NONTUMOR: 0.5,
}

STYLE_DENSITY_RANGE = (0.6, 1.4)
STYLE_JITTER_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class SlideStyle:
    """Per-slide nuisance parameters; constant within a slide."""

    density: float = 1.0
    rotation: float = 0.0  # radians, about the slide center
    jitter_sigma: float = 1.0  # px at detection magnification

    def __post_init__(self):
        if self.density <= 0:
            raise ValueError("density multiplier must be > 0")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")


@dataclass(frozen=True)
class SynthSlideConfig:
    pattern: GrowthPattern
    slide_seed: int
    style: SlideStyle = SlideStyle()
    extent: tuple[int, int] = (4096, 4096)  # (width, height) at 20x
    inflammatory_per_tile: float = 1.0


def _poisson_count(rng: SplitMix64, mean: float) -> int:
    if mean <= 0:
        return 0
    limit = math.exp(-mean)
    k = 0
    p = 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


_POOL = 8192


def _poisson_disc(rng: SplitMix64, width: float, height: float, r: float, k: int = 16):
    """Bridson dart throwing on a background grid; deterministic given the rng.

    Consumes the rng's uniform stream in blocks. The grid is padded two cells
    on every side so the 21-cell neighborhood scan (5x5 minus corners, which
    are always >= r away) needs no bounds checks.
    """
    cell = r / math.sqrt(2.0)
    inv_cell = 1.0 / cell
    gw = int(width * inv_cell) + 5
    gh = int(height * inv_cell) + 5
    grid: list[tuple[float, float] | None] = [None] * (gw * gh)
    neigh = [
        dy * gw + dx
        for dy in (-2, -1, 0, 1, 2)
        for dx in (-2, -1, 0, 1, 2)
        if abs(dy) + abs(dx) < 4
    ]
    r2 = r * r
    two_pi = 2.0 * math.pi
    cos = math.cos
    sin = math.sin
    pts: list[tuple[float, float]] = []
    active: list[tuple[float, float]] = []
    pool = rng.random_block(_POOL)
    pi = 0

    x0 = width * pool[pi]
    y0 = height * pool[pi + 1]
    pi += 2
    grid[int(x0 * inv_cell) + 2 + (int(y0 * inv_cell) + 2) * gw] = (x0, y0)
    pts.append((x0, y0))
    active.append((x0, y0))

    budget = 2 * k + 1  # worst-case draws per outer iteration
    while active:
        if pi + budget > _POOL:
            pool = rng.random_block(_POOL)
            pi = 0
        aidx = int(pool[pi] * len(active))
        pi += 1
        px, py = active[aidx]
        placed = False
        for _ in range(k):
            ang = two_pi * pool[pi]
            rad = r * (1.0 + pool[pi + 1])
            pi += 2
            x = px + rad * cos(ang)
            y = py + rad * sin(ang)
            if x < 0.0 or x >= width or y < 0.0 or y >= height:
                continue
            base = int(x * inv_cell) + 2 + (int(y * inv_cell) + 2) * gw
            ok = True
            for off in neigh:
                p = grid[base + off]
                if p is not None:
                    dx = p[0] - x
                    dy = p[1] - y
                    if dx * dx + dy * dy < r2:
                        ok = False
                        break
            if ok:
                pt = (x, y)
                grid[base] = pt
                pts.append(pt)
                active.append(pt)
                placed = True
                break
        if not placed:
            # Retire this active point (swap-pop).
            active[aidx] = active[-1]
            active.pop()
    return pts


def _circle_arc(rng: SplitMix64, cx: float, cy: float, radius: float, spacing: float):
    m = max(3, int(2.0 * math.pi * radius / spacing + 0.5))
    phase = 2.0 * math.pi * rng.random()
    step = 2.0 * math.pi / m
    return [
        (cx + radius * math.cos(phase + i * step), cy + radius * math.sin(phase + i * step))
        for i in range(m)
    ]


def _curve_field(
    rng: SplitMix64,
    frame: float,
    pitch: float,
    radius_range: tuple[float, float],
    spacing: float,
) -> tuple[list[tuple[float, float]], list[tuple[float, float, float]]]:
    """Closed circles tiling the frame on a jittered grid; returns (points, circles)."""
    points = []
    circles = []
    n_cells = int(frame / pitch) + 1
    for gy in range(n_cells):
        for gx in range(n_cells):
            cx = (gx + 0.5) * pitch + rng.uniform(-0.15 * pitch, 0.15 * pitch)
            cy = (gy + 0.5) * pitch + rng.uniform(-0.15 * pitch, 0.15 * pitch)
            radius = rng.uniform(*radius_range)
            circles.append((cx, cy, radius))
            points.extend(_circle_arc(rng, cx, cy, radius, spacing))
    return points, circles


def _septal_connective(
    rng: SplitMix64,
    circles: list[tuple[float, float, float]],
    n: int,
    offset_range: tuple[float, float],
) -> list[tuple[float, float]]:
    out = []
    for _ in range(n):
        cx, cy, radius = rng.choice(circles)
        ang = 2.0 * math.pi * rng.random()
        rad = radius + rng.uniform(*offset_range)
        out.append((cx + rad * math.cos(ang), cy + rad * math.sin(ang)))
    return out


def _papillary_trees(
    rng: SplitMix64, frame: float, density: float
) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
    """Branching random-walk cores (connective) with neoplastic lining."""
    core: list[tuple[float, float]] = []
    lining: list[tuple[float, float]] = []
    core_spacing = PAPILLARY_CORE_SPACING / density
    line_spacing = PAPILLARY_LINING_SPACING / density
    n_roots = int(frame / 1024.0) + 1
    for gy in range(n_roots):
        for gx in range(n_roots):
            x = (gx + 0.5) * 1024.0 + rng.uniform(-300.0, 300.0)
            y = (gy + 0.5) * 1024.0 + rng.uniform(-300.0, 300.0)
            budget = PAPILLARY_TREE_STEPS
            stack = [(x, y, 2.0 * math.pi * rng.random())]
            core.append((x, y))
            while stack and budget > 0:
                px, py, direction = stack.pop()
                resid_c = core_spacing
                resid_l = line_spacing / 2.0
                while budget > 0:
                    budget -= 1
                    direction += rng.normal(0.0, 0.30)
                    nx = px + PAPILLARY_STEP * math.cos(direction)
                    ny = py + PAPILLARY_STEP * math.sin(direction)
                    if not (0.0 <= nx < frame and 0.0 <= ny < frame):
                        break
                    ux = (nx - px) / PAPILLARY_STEP
                    uy = (ny - py) / PAPILLARY_STEP
                    # Normals for the two lining rows.
                    ox = -uy * PAPILLARY_LINING_OFFSET
                    oy = ux * PAPILLARY_LINING_OFFSET
                    dist = resid_c
                    while dist <= PAPILLARY_STEP:
                        core.append((px + ux * dist, py + uy * dist))
                        dist += core_spacing
                    resid_c = dist - PAPILLARY_STEP
                    dist = resid_l
                    while dist <= PAPILLARY_STEP:
                        bx = px + ux * dist
                        by = py + uy * dist
                        lining.append((bx + ox, by + oy))
                        lining.append((bx - ox, by - oy))
                        dist += line_spacing
                    resid_l = dist - PAPILLARY_STEP
                    px, py = nx, ny
                    if rng.random() < PAPILLARY_BRANCH_PROB:
                        sign = 1.0 if rng.random() < 0.5 else -1.0
                        stack.append((px, py, direction + sign * rng.uniform(0.6, 1.1)))
    return core, lining


def _micropapillary_tufts(
    rng: SplitMix64, frame: float, density: float
) -> list[tuple[float, float]]:
    n_tiles = (frame / 1024.0) ** 2
    n_tufts = int(MICROPAP_TUFTS_PER_TILE * density * n_tiles + 0.5)
    sep2 = MICROPAP_TUFT_SEPARATION**2
    centers: list[tuple[float, float]] = []
    attempts = 0
    while len(centers) < n_tufts and attempts < 40 * n_tufts:
        attempts += 1
        x = frame * rng.random()
        y = frame * rng.random()
        if all((x - cx) ** 2 + (y - cy) ** 2 >= sep2 for cx, cy in centers):
            centers.append((x, y))
    cells = []
    for cx, cy in centers:
        n_cells = MICROPAP_CELLS[0] + rng.below(MICROPAP_CELLS[1] - MICROPAP_CELLS[0] + 1)
        tuft_r = rng.uniform(*MICROPAP_TUFT_RADIUS)
        for _ in range(n_cells):
            rad = tuft_r * math.sqrt(rng.random())
            ang = 2.0 * math.pi * rng.random()
            cells.append((cx + rad * math.cos(ang), cy + rad * math.sin(ang)))
    return cells


def _finalize(
    rng: SplitMix64,
    points: list[tuple[float, float]],
    width: int,
    height: int,
    style: SlideStyle,
    frame: float,
    rotate: bool,
) -> list[tuple[float, float]]:
    """Map frame coordinates into the slide: rotate about the slide center,
    add jitter, drop anything outside the extent."""
    ox = (width - frame) / 2.0
    oy = (height - frame) / 2.0
    cx = width / 2.0
    cy = height / 2.0
    cos_t = math.cos(style.rotation)
    sin_t = math.sin(style.rotation)
    sigma = style.jitter_sigma
    out = []
    for x, y in points:
        x += ox
        y += oy
        if rotate and style.rotation != 0.0:
            dx = x - cx
            dy = y - cy
            x = cx + dx * cos_t - dy * sin_t
            y = cy + dx * sin_t + dy * cos_t
        if sigma > 0.0:
            x += rng.normal(0.0, sigma)
            y += rng.normal(0.0, sigma)
        if 0.0 <= x < width and 0.0 <= y < height:
            out.append((x, y))
    return out


def generate_slide(
    cfg: SynthSlideConfig,
    slide_id: str | None = None,
    raster_cfg: RasterConfig = RasterConfig(),
) -> tuple[SlideMeta, list[NucleusRecord], list[LabeledTile]]:
    """Deterministic slide: same config twice gives identical record lists."""
    width, height = cfg.extent
    footprint = raster_cfg.tile_footprint
    if width < footprint or height < footprint:
        raise ValueError(
            f"extent {cfg.extent} smaller than one tile footprint ({footprint:.0f} px)"
        )
    if slide_id is None:
        slide_id = f"{cfg.pattern.value}_{cfg.slide_seed & 0xFFFF:04x}"

    rng = SplitMix64(cfg.slide_seed)
    style = cfg.style
    density = style.density
    pattern = cfg.pattern

    # Anisotropic kernels draw in an expanded frame so rotation still covers
    # the extent; the isotropic solid sheet skips rotation outright.
    frame = float(math.ceil(math.hypot(width, height)))
    n_frame_tiles = (frame / footprint) ** 2

    neo: list[tuple[float, float]] = []
    conn: list[tuple[float, float]] = []
    nonneo: list[tuple[float, float]] = []
    rotate = True

    if pattern is GrowthPattern.SOLID:
        rotate = False
        frame = float(max(width, height))
        spacing = SOLID_SPACING / math.sqrt(density)
        neo = _poisson_disc(rng, width, height, spacing)
    elif pattern is GrowthPattern.LEPIDIC:
        neo, circles = _curve_field(
            rng, frame, LEPIDIC_PITCH, LEPIDIC_RADIUS, LEPIDIC_ARC_SPACING / density
        )
        n_conn = _poisson_count(
            rng, CONNECTIVE_PER_TILE[pattern] * n_frame_tiles
        )
        conn = _septal_connective(rng, circles, n_conn, (10.0, 30.0))
    elif pattern is GrowthPattern.ACINAR:
        neo, rings = _curve_field(
            rng, frame, ACINAR_PITCH, ACINAR_RADIUS, ACINAR_ARC_SPACING / density
        )
        n_conn = _poisson_count(rng, CONNECTIVE_PER_TILE[pattern] * n_frame_tiles)
        conn = _septal_connective(rng, rings, n_conn, (15.0, 40.0))
    elif pattern is GrowthPattern.PAPILLARY:
        conn, neo = _papillary_trees(rng, frame, density)
    elif pattern is GrowthPattern.MICROPAPILLARY:
        neo = _micropapillary_tufts(rng, frame, density)
    elif pattern is GrowthPattern.NONTUMOR:
        nonneo, circles = _curve_field(
            rng, frame, NONTUMOR_PITCH, NONTUMOR_RADIUS, NONTUMOR_ARC_SPACING / density
        )
        n_conn = _poisson_count(rng, CONNECTIVE_PER_TILE[pattern] * n_frame_tiles)
        conn = _septal_connective(rng, circles, n_conn, (10.0, 30.0))
    else:
        raise ValueError(f"unknown pattern {pattern}")

    records: list[NucleusRecord] = []
    for pts, cls in (
        (neo, CellClass.NEOPLASTIC),
        (conn, CellClass.CONNECTIVE),
        (nonneo, CellClass.NON_NEOPLASTIC_EPITHELIAL),
    ):
        for x, y in _finalize(rng, pts, width, height, style, frame, rotate):
            records.append(NucleusRecord(x, y, cls, rng.uniform(0.5, 1.0)))

    n_tiles = (width / footprint) * (height / footprint)
    n_infl = _poisson_count(rng, cfg.inflammatory_per_tile * n_tiles)
    for _ in range(n_infl):
        records.append(
            NucleusRecord(
                width * rng.random(),
                height * rng.random(),
                CellClass.INFLAMMATORY,
                rng.uniform(0.5, 1.0),
            )
        )

    meta = SlideMeta(
        slide_id,
        width,
        height,
        detection_mag=raster_cfg.detection_mag,
        map_mag=raster_cfg.map_mag,
    )
    n_rows, n_cols = tile_grid(meta, raster_cfg)
    labels = [
        LabeledTile(f"{slide_id}_r{r}_c{c}", slide_id, pattern)
        for r in range(n_rows)
        for c in range(n_cols)
    ]
    return meta, records, labels


def draw_style(rng: SplitMix64) -> SlideStyle:
    return SlideStyle(
        density=rng.uniform(*STYLE_DENSITY_RANGE),
        rotation=rng.uniform(0.0, 2.0 * math.pi),
        jitter_sigma=rng.uniform(*STYLE_JITTER_RANGE),
    )


def records_to_hovernet_json(records: list[NucleusRecord], detection_mag: float) -> str:
    """Serialize records in the detector's whole-slide JSON convention."""
    code_of = {cls: code for code, cls in DEFAULT_CLASS_CODES.items()}
    nuc = {}
    for i, rec in enumerate(records, start=1):
        entry = {"centroid": [rec.x, rec.y], "type": code_of[rec.cell_class]}
        if rec.confidence is not None:
            entry["type_prob"] = rec.confidence
        nuc[str(i)] = entry
    return json.dumps({"mag": detection_mag, "nuc": nuc})


@dataclass(frozen=True)
class SlideEntry:
    meta: SlideMeta
    pattern: GrowthPattern
    n_records: int
    json_path: str


@dataclass(frozen=True)
class CohortResult:
    slides: tuple[SlideEntry, ...]
    manifest: tuple[LabeledTile, ...]
    tiles_per_class: dict[GrowthPattern, int]


def generate_cohort(
    n_per_class: int,
    base_seed: int,
    out_dir: str | Path,
    extent: tuple[int, int] = (4096, 4096),
    inflammatory_per_tile: float = 1.0,
    raster_cfg: RasterConfig = RasterConfig(),
) -> CohortResult:
    """Write a synthetic cohort: per-slide detector JSON under slides/, a labeled
    tile manifest, and a slide table. Byte-identical on regeneration."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    out_dir = Path(out_dir)
    slides_dir = out_dir / "slides"
    slides_dir.mkdir(parents=True, exist_ok=True)

    slides: list[SlideEntry] = []
    manifest: list[LabeledTile] = []
    tiles_per_class: dict[GrowthPattern, int] = {p: 0 for p in GrowthPattern}
    for ci, pattern in enumerate(GrowthPattern):
        for i in range(n_per_class):
            slide_seed = derive_seed(base_seed, ci, i)
            style = draw_style(SplitMix64(derive_seed(slide_seed, "style")))
            cfg = SynthSlideConfig(
                pattern,
                slide_seed,
                style,
                extent=extent,
                inflammatory_per_tile=inflammatory_per_tile,
            )
            slide_id = f"{pattern.value}_{i:02d}"
            meta, records, labels = generate_slide(cfg, slide_id, raster_cfg)
            json_path = slides_dir / f"{slide_id}.json"
            json_path.write_text(records_to_hovernet_json(records, meta.detection_mag))
            # Path kept relative to the cohort root so regeneration is byte-identical.
            slides.append(SlideEntry(meta, pattern, len(records), f"slides/{slide_id}.json"))
            manifest.extend(labels)
            tiles_per_class[pattern] += len(labels)

    write_manifest_csv(out_dir / "manifest.csv", manifest)
    write_slides_csv(out_dir / "slides.csv", slides)
    return CohortResult(tuple(slides), tuple(manifest), tiles_per_class)


SLIDES_CSV_HEADER = [
    "slide_id",
    "pattern",
    "width_px",
    "height_px",
    "detection_mag",
    "map_mag",
    "n_records",
    "json_path",
]


def write_slides_csv(path: str | Path, slides: list[SlideEntry]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SLIDES_CSV_HEADER)
        for s in slides:
            writer.writerow(
                [
                    s.meta.slide_id,
                    s.pattern.value,
                    s.meta.width_px,
                    s.meta.height_px,
                    repr(s.meta.detection_mag),
                    repr(s.meta.map_mag),
                    s.n_records,
                    s.json_path,
                ]
            )


def read_slides_csv(path: str | Path) -> list[SlideEntry]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SLIDES_CSV_HEADER:
            raise DataError(f"{path}: unexpected slides header {header}")
        for row in reader:
            slide_id, pattern, w, h, dmag, mmag, n_records, json_path = row
            meta = SlideMeta(slide_id, int(w), int(h), float(dmag), float(mmag))
            out.append(SlideEntry(meta, GrowthPattern(pattern), int(n_records), json_path))
    return out
