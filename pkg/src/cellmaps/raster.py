"""Render nuclei into 3-plane binary cell maps, cut 256x256 tiles, encode PNG.

Plane order is fixed: 0 = neoplastic, 1 = connective, 2 = non-neoplastic
epithelial. PNG encoding maps plane 0 to green, plane 1 to red, plane 2 to
blue, so a neoplastic-only tile renders pure green.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image

from .errors import DataError
from .ingest import MAP_CLASSES, CellClass, NucleusRecord, SlideMeta, rescale_to_map

PLANE_INDEX: dict[CellClass, int] = {cls: i for i, cls in enumerate(MAP_CLASSES)}

# RGB channel carrying each plane (plane 0 -> G, plane 1 -> R, plane 2 -> B).
_PLANE_TO_CHANNEL = (1, 0, 2)


@dataclass(frozen=True)
class RasterConfig:
    disk_radius: int = 4
    map_mag: float = 5.0
    detection_mag: float = 20.0
    tile_size: int = 256

    def __post_init__(self):
        if self.disk_radius < 0:
            raise ValueError("disk_radius must be >= 0")
        if self.tile_size <= 0:
            raise ValueError("tile_size must be > 0")
        if not self.detection_mag > self.map_mag > 0:
            raise ValueError("need detection_mag > map_mag > 0")

    @property
    def tile_footprint(self) -> float:
        """Tile edge length in detection-magnification pixels (1024 by default)."""
        return self.tile_size * self.detection_mag / self.map_mag


@dataclass
class CellMap:
    """3-plane binary raster at map magnification; planes shape (3, H, W), uint8."""

    planes: np.ndarray

    def __post_init__(self):
        if self.planes.ndim != 3 or self.planes.shape[0] != 3:
            raise ValueError(f"planes must have shape (3, H, W), got {self.planes.shape}")

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


@dataclass
class TileRecord:
    slide_id: str
    row: int
    col: int
    planes: np.ndarray  # (3, tile_size, tile_size) uint8

    @property
    def tile_id(self) -> str:
        return f"{self.slide_id}_r{self.row}_c{self.col}"

    @property
    def filename(self) -> str:
        return self.tile_id + ".png"


def round_half_away(v: float) -> int:
    """Round halves away from zero (Python's round() rounds halves to even)."""
    return int(math.floor(v + 0.5)) if v >= 0 else int(math.ceil(v - 0.5))


@lru_cache(maxsize=None)
def disk_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer (dy, dx) offsets with dy^2 + dx^2 <= radius^2, as two arrays."""
    span = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    inside = dy * dy + dx * dx <= radius * radius
    return dy[inside].copy(), dx[inside].copy()


def stamp_disk(plane: np.ndarray, center: tuple[float, float], radius: int) -> np.ndarray:
    """Set to 1 every pixel within `radius` of the rounded center; clip at edges.

    Mutates and returns `plane`. center is (x, y) in plane pixels.
    """
    h, w = plane.shape
    cx = round_half_away(center[0])
    cy = round_half_away(center[1])
    dy, dx = disk_offsets(radius)
    ys = cy + dy
    xs = cx + dx
    ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    plane[ys[ok], xs[ok]] = 1
    return plane


def map_shape(meta: SlideMeta, cfg: RasterConfig) -> tuple[int, int]:
    """(height, width) of the cell map: slide dimensions scaled to map magnification."""
    s = cfg.map_mag / cfg.detection_mag
    return (math.ceil(meta.height_px * s), math.ceil(meta.width_px * s))


def build_cell_map(
    records: list[NucleusRecord], meta: SlideMeta, cfg: RasterConfig
) -> CellMap:
    """Rescale records to map magnification and stamp them onto their class plane.

    Records must already be filtered to the three rendered classes; anything
    else is a hard error so pipelines stay explicit about selection.
    """
    h, w = map_shape(meta, cfg)
    planes = np.zeros((3, h, w), dtype=np.uint8)

    by_plane: dict[int, list[tuple[float, float]]] = {0: [], 1: [], 2: []}
    for rec in records:
        idx = PLANE_INDEX.get(rec.cell_class)
        if idx is None:
            raise DataError(
                f"record with non-rendered class {rec.cell_class.value}; "
                "filter to the map classes before rasterizing"
            )
        by_plane[idx].append(rescale_to_map(rec, meta))

    dy, dx = disk_offsets(cfg.disk_radius)
    for idx, centers in by_plane.items():
        if not centers:
            continue
        arr = np.asarray(centers, dtype=np.float64)
        # Same rounding as stamp_disk: half away from zero (centers are >= 0).
        cx = np.floor(arr[:, 0] + 0.5).astype(np.int64)
        cy = np.floor(arr[:, 1] + 0.5).astype(np.int64)
        ys = (cy[:, None] + dy[None, :]).ravel()
        xs = (cx[:, None] + dx[None, :]).ravel()
        ok = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        planes[idx, ys[ok], xs[ok]] = 1
    return CellMap(planes)


def tile_grid(meta: SlideMeta, cfg: RasterConfig) -> tuple[int, int]:
    """(n_rows, n_cols) of the non-overlapping tile grid covering the cell map."""
    h, w = map_shape(meta, cfg)
    return (math.ceil(h / cfg.tile_size), math.ceil(w / cfg.tile_size))


def tile_map(cell_map: CellMap, cfg: RasterConfig, slide_id: str) -> list[TileRecord]:
    """Cut the map into tile_size tiles, row-major, zero-padding right/bottom edges."""
    ts = cfg.tile_size
    n_rows = math.ceil(cell_map.height / ts)
    n_cols = math.ceil(cell_map.width / ts)
    tiles = []
    for row in range(n_rows):
        for col in range(n_cols):
            block = cell_map.planes[:, row * ts : (row + 1) * ts, col * ts : (col + 1) * ts]
            if block.shape[1:] != (ts, ts):
                padded = np.zeros((3, ts, ts), dtype=np.uint8)
                padded[:, : block.shape[1], : block.shape[2]] = block
                block = padded
            else:
                block = block.copy()
            tiles.append(TileRecord(slide_id, row, col, block))
    return tiles


def planes_to_rgb(planes: np.ndarray) -> np.ndarray:
    """(3, H, W) binary planes -> (H, W, 3) uint8 RGB under the fixed color contract."""
    h, w = planes.shape[1:]
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    for plane, channel in enumerate(_PLANE_TO_CHANNEL):
        rgb[:, :, channel] = planes[plane] * 255
    return rgb


def rgb_to_planes(rgb: np.ndarray) -> np.ndarray:
    """Inverse of planes_to_rgb; any nonzero channel value counts as set."""
    planes = np.zeros((3, rgb.shape[0], rgb.shape[1]), dtype=np.uint8)
    for plane, channel in enumerate(_PLANE_TO_CHANNEL):
        planes[plane] = (rgb[:, :, channel] > 0).astype(np.uint8)
    return planes


def encode_planes_png(planes: np.ndarray) -> bytes:
    """Encode binary planes as an 8-bit RGB PNG with fixed encoder settings."""
    img = Image.fromarray(planes_to_rgb(planes), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def decode_planes_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        rgb = np.asarray(img.convert("RGB"))
    return rgb_to_planes(rgb)


def encode_tile_png(tile: TileRecord) -> bytes:
    return encode_planes_png(tile.planes)
