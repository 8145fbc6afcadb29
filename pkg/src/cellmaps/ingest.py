"""Parse nuclei-detection JSON, map type codes to cell classes, rescale coordinates.

Input convention (HoverNet whole-slide output): a top-level object with an
optional ``mag`` number and a ``nuc`` object keyed by nucleus id, each value
holding a 2-element ``centroid`` [x, y] and an integer ``type`` code. Extra
fields are tolerated and ignored.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import DataError, ParseError


class CellClass(Enum):
    NEOPLASTIC = "neoplastic"
    INFLAMMATORY = "inflammatory"
    CONNECTIVE = "connective"
    DEAD = "dead"
    NON_NEOPLASTIC_EPITHELIAL = "non_neoplastic_epithelial"
    UNLABELED = "unlabeled"


# PanNuke-checkpoint convention; overridable because detectors disagree on codes.
DEFAULT_CLASS_CODES: dict[int, CellClass] = {
    0: CellClass.UNLABELED,
    1: CellClass.NEOPLASTIC,
    2: CellClass.INFLAMMATORY,
    3: CellClass.CONNECTIVE,
    4: CellClass.DEAD,
    5: CellClass.NON_NEOPLASTIC_EPITHELIAL,
}

# Classes rendered into the 3-plane cell map.
MAP_CLASSES = (
    CellClass.NEOPLASTIC,
    CellClass.CONNECTIVE,
    CellClass.NON_NEOPLASTIC_EPITHELIAL,
)

# Classes entering the 12-dimensional feature vector.
FEATURE_CLASSES = MAP_CLASSES + (CellClass.INFLAMMATORY,)

POLICIES = ("strict", "skip")


@dataclass(frozen=True)
class NucleusRecord:
    """One detected nucleus: centroid in pixels at detection magnification."""

    x: float
    y: float
    cell_class: CellClass
    confidence: float | None = None


@dataclass(frozen=True)
class SlideMeta:
    slide_id: str
    width_px: int
    height_px: int
    detection_mag: float = 20.0
    map_mag: float = 5.0

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError(f"slide {self.slide_id}: non-positive dimensions")
        if not self.detection_mag > self.map_mag > 0:
            raise ValueError(
                f"slide {self.slide_id}: need detection_mag > map_mag > 0, "
                f"got {self.detection_mag} / {self.map_mag}"
            )

    @property
    def map_scale(self) -> float:
        """Multiplier taking detection-magnification pixels to map pixels."""
        return self.map_mag / self.detection_mag


@dataclass(frozen=True)
class ParseResult:
    records: tuple[NucleusRecord, ...]
    detection_mag: float | None
    n_rejected: int


def _entry_sort_key(key: str):
    # Numeric ids sort numerically, ties broken textually ("01" before "1");
    # non-numeric ids sort after all numeric ones.
    try:
        return (0, int(key), key)
    except ValueError:
        return (1, 0, key)


def parse_nuclei(
    document: str | bytes,
    table: dict[int, CellClass] | None = None,
    policy: str = "strict",
) -> ParseResult:
    """Parse a HoverNet-convention slide document into nucleus records.

    Entry order is deterministic: ascending by id interpreted as an integer.
    Under policy "skip", bad entries (unknown code, negative or non-finite
    centroid, malformed fields) are dropped and counted; under "strict" they
    raise DataError. A structurally broken document always raises ParseError.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if table is None:
        table = DEFAULT_CLASS_CODES

    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, pos=exc.pos) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("nuc"), dict):
        raise ParseError("document must be an object with a 'nuc' mapping")

    mag = doc.get("mag")
    detection_mag = float(mag) if isinstance(mag, (int, float)) else None

    records: list[NucleusRecord] = []
    n_rejected = 0
    for key in sorted(doc["nuc"], key=_entry_sort_key):
        entry = doc["nuc"][key]
        problem = None
        x = y = 0.0
        cls = None
        conf = None
        if not isinstance(entry, dict):
            problem = "entry is not an object"
        else:
            centroid = entry.get("centroid")
            code = entry.get("type")
            if (
                not isinstance(centroid, (list, tuple))
                or len(centroid) != 2
                or not all(isinstance(v, (int, float)) for v in centroid)
            ):
                problem = "missing or malformed 2-element centroid"
            elif not isinstance(code, int) or isinstance(code, bool):
                problem = "missing or non-integer type code"
            else:
                x, y = float(centroid[0]), float(centroid[1])
                if not (math.isfinite(x) and math.isfinite(y)) or x < 0 or y < 0:
                    problem = f"centroid out of domain: ({x}, {y})"
                elif code not in table:
                    problem = f"unknown type code {code}"
                else:
                    cls = table[code]
                    raw_conf = entry.get("type_prob")
                    if isinstance(raw_conf, (int, float)) and math.isfinite(raw_conf):
                        conf = float(raw_conf)
        if problem is not None:
            if policy == "strict":
                raise DataError(f"nucleus {key!r}: {problem}")
            n_rejected += 1
            continue
        records.append(NucleusRecord(x, y, cls, conf))

    return ParseResult(tuple(records), detection_mag, n_rejected)


def filter_classes(
    records: list[NucleusRecord], keep: set[CellClass]
) -> list[NucleusRecord]:
    """Order-preserving subsequence of records whose class is in `keep`."""
    return [r for r in records if r.cell_class in keep]


def rescale_to_map(record: NucleusRecord, meta: SlideMeta) -> tuple[float, float]:
    """Centroid in map-magnification pixels. No rounding; rasterization rounds."""
    s = meta.map_scale
    return (record.x * s, record.y * s)


# --- record CSV artifact (one file per slide) -------------------------------

RECORDS_CSV_HEADER = ["x", "y", "cell_class", "confidence"]


def write_records_csv(path: str | Path, records: list[NucleusRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORDS_CSV_HEADER)
        for r in records:
            conf = "" if r.confidence is None else repr(r.confidence)
            writer.writerow([repr(r.x), repr(r.y), r.cell_class.value, conf])


def read_records_csv(path: str | Path) -> list[NucleusRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RECORDS_CSV_HEADER:
            raise DataError(f"{path}: unexpected records header {header}")
        for row in reader:
            x, y, cls, conf = row
            records.append(
                NucleusRecord(
                    float(x), float(y), CellClass(cls), float(conf) if conf else None
                )
            )
    return records
