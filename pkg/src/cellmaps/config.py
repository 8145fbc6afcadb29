"""Pipeline configuration: one INI-style file with sections, lossless round-trip.

Precedence (low to high): built-in defaults, config file, CELLMAP_SEED
environment variable (seeds only), command-line flags.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .ingest import DEFAULT_CLASS_CODES, POLICIES, CellClass
from .raster import RasterConfig
from .svm import SvmHyperparams


@dataclass(frozen=True)
class PipelineConfig:
    root: str = "runs/run"
    ingest_policy: str = "strict"
    class_codes: dict[int, CellClass] = field(default_factory=lambda: dict(DEFAULT_CLASS_CODES))
    raster: RasterConfig = RasterConfig()
    split_policy: str = "wsi"
    split_seed: int = 7
    trials: int = 5
    n_test_slides: int = 6
    val_fraction: float = 0.10
    k: int = 5
    svm: SvmHyperparams = SvmHyperparams()
    svm_seed: int = 7
    synth_per_class: int = 3
    synth_base_seed: int = 7
    synth_extent: int = 4096
    inflammatory_per_tile: float = 1.0

    def with_global_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, split_seed=seed, svm_seed=seed, synth_base_seed=seed)


def _get(parser, section, key, cast, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")

    d = PipelineConfig()
    codes = dict(DEFAULT_CLASS_CODES)
    if parser.has_section("ingest"):
        for key, value in parser.items("ingest"):
            if key.startswith("code."):
                try:
                    codes[int(key[5:])] = CellClass(value)
                except ValueError as exc:
                    raise ConfigError(f"[ingest] {key} = {value!r}: {exc}") from exc
    policy = _get(parser, "ingest", "policy", str, d.ingest_policy)
    if policy not in POLICIES:
        raise ConfigError(f"[ingest] policy must be one of {POLICIES}, got {policy!r}")

    try:
        raster = RasterConfig(
            disk_radius=_get(parser, "raster", "disk_radius", int, d.raster.disk_radius),
            map_mag=_get(parser, "raster", "map_mag", float, d.raster.map_mag),
            detection_mag=_get(parser, "raster", "detection_mag", float, d.raster.detection_mag),
            tile_size=_get(parser, "raster", "tile_size", int, d.raster.tile_size),
        )
        svm = SvmHyperparams(
            epochs=_get(parser, "svm", "epochs", int, d.svm.epochs),
            eta0=_get(parser, "svm", "eta0", float, d.svm.eta0),
            lam=_get(parser, "svm", "lam", float, d.svm.lam),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    split_policy = _get(parser, "splits", "policy", str, d.split_policy)
    if split_policy not in ("wsi", "kfold"):
        raise ConfigError(f"[splits] policy must be wsi or kfold, got {split_policy!r}")

    return PipelineConfig(
        root=_get(parser, "io", "root", str, d.root),
        ingest_policy=policy,
        class_codes=codes,
        raster=raster,
        split_policy=split_policy,
        split_seed=_get(parser, "splits", "seed", int, d.split_seed),
        trials=_get(parser, "splits", "trials", int, d.trials),
        n_test_slides=_get(parser, "splits", "n_test_slides", int, d.n_test_slides),
        val_fraction=_get(parser, "splits", "val_fraction", float, d.val_fraction),
        k=_get(parser, "splits", "k", int, d.k),
        svm=svm,
        svm_seed=_get(parser, "svm", "seed", int, d.svm_seed),
        synth_per_class=_get(parser, "synth", "per_class", int, d.synth_per_class),
        synth_base_seed=_get(parser, "synth", "base_seed", int, d.synth_base_seed),
        synth_extent=_get(parser, "synth", "extent", int, d.synth_extent),
        inflammatory_per_tile=_get(
            parser, "synth", "inflammatory_per_tile", float, d.inflammatory_per_tile
        ),
    )


def save_config(cfg: PipelineConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser["io"] = {"root": cfg.root}
    ingest = {"policy": cfg.ingest_policy}
    for code in sorted(cfg.class_codes):
        ingest[f"code.{code}"] = cfg.class_codes[code].value
    parser["ingest"] = ingest
    parser["raster"] = {
        "disk_radius": str(cfg.raster.disk_radius),
        "map_mag": repr(cfg.raster.map_mag),
        "detection_mag": repr(cfg.raster.detection_mag),
        "tile_size": str(cfg.raster.tile_size),
    }
    parser["splits"] = {
        "policy": cfg.split_policy,
        "seed": str(cfg.split_seed),
        "trials": str(cfg.trials),
        "n_test_slides": str(cfg.n_test_slides),
        "val_fraction": repr(cfg.val_fraction),
        "k": str(cfg.k),
    }
    parser["svm"] = {
        "epochs": str(cfg.svm.epochs),
        "eta0": repr(cfg.svm.eta0),
        "lam": repr(cfg.svm.lam),
        "seed": str(cfg.svm_seed),
    }
    parser["synth"] = {
        "per_class": str(cfg.synth_per_class),
        "base_seed": str(cfg.synth_base_seed),
        "extent": str(cfg.synth_extent),
        "inflammatory_per_tile": repr(cfg.inflammatory_per_tile),
    }
    with open(path, "w") as fh:
        parser.write(fh)
