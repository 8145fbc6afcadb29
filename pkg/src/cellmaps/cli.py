"""Subcommand CLI wiring the pipeline end to end over a run directory.

Artifacts are manifest-addressed files under the run root:

    slides/<slide_id>.json    detector output (synth) or real detector dumps
    manifest.csv              tile_id,slide_id,label
    slides.csv                slide geometry and record counts
    records/<slide_id>.csv    parsed nucleus records
    maps/<slide_id>.png       full cell-map rasters
    tiles/<tile_id>.png       256x256 cell-map tiles
    tiles.csv                 tile index
    features.csv              12-feature vectors per tile
    plans/plan_*.csv          split plans
    models/, scores/          trained SVMs and their margin scores
    evals/, report.csv        per-trial metrics and the aggregated table

Exit codes: 0 ok, 2 usage, 3 config, 4 data, 5 infeasible split. Errors print
one machine-parsable JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import features as feats
from . import ingest, metrics, raster, splits, svm, synth
from .config import PipelineConfig, load_config
from .errors import ConfigError, DataError, InfeasibleSplitError

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_INFEASIBLE = 5


def _map_jobs(fn, items, jobs):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _root(args, cfg: PipelineConfig) -> Path:
    root = Path(args.root if args.root else cfg.root)
    root.mkdir(parents=True, exist_ok=True)
    return root


def _read_slides(root: Path) -> list[synth.SlideEntry]:
    path = root / "slides.csv"
    if not path.exists():
        raise DataError(f"missing {path}; run `synth` or provide a slide table first")
    return synth.read_slides_csv(path)


def _read_manifest(root: Path) -> list[splits.LabeledTile]:
    path = root / "manifest.csv"
    if not path.exists():
        raise DataError(f"missing {path}")
    return splits.read_manifest_csv(path)


# --- subcommands ----------------------------------------------------------------


def cmd_synth(args, cfg: PipelineConfig) -> int:
    if args.classes != len(splits.GROWTH_PATTERNS):
        raise ConfigError(
            f"exactly {len(splits.GROWTH_PATTERNS)} growth-pattern classes are "
            f"supported, got --classes {args.classes}"
        )
    root = _root(args, cfg)
    per_class = args.per_class if args.per_class else cfg.synth_per_class
    seed = cfg.synth_base_seed
    extent = args.extent if args.extent else cfg.synth_extent
    result = synth.generate_cohort(
        per_class,
        seed,
        root,
        extent=(extent, extent),
        inflammatory_per_tile=cfg.inflammatory_per_tile,
        raster_cfg=cfg.raster,
    )
    print(f"wrote {len(result.slides)} slides, {len(result.manifest)} tiles -> {root}")
    for pattern, count in result.tiles_per_class.items():
        print(f"  {pattern.value:15s} {count} tiles")
    return 0


def cmd_ingest(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    slides = _read_slides(root)
    records_dir = root / "records"
    records_dir.mkdir(exist_ok=True)

    def one(entry: synth.SlideEntry):
        json_path = Path(entry.json_path)
        if not json_path.is_absolute():
            json_path = root / json_path
        text = json_path.read_text()
        result = ingest.parse_nuclei(text, cfg.class_codes, cfg.ingest_policy)
        ingest.write_records_csv(records_dir / f"{entry.meta.slide_id}.csv", list(result.records))
        return entry.meta.slide_id, len(result.records), result.n_rejected

    rows = _map_jobs(one, slides, args.jobs)
    import csv

    with open(root / "ingest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slide_id", "n_accepted", "n_rejected"])
        writer.writerows(rows)
    total_acc = sum(r[1] for r in rows)
    total_rej = sum(r[2] for r in rows)
    print(f"ingested {len(rows)} slides: {total_acc} records accepted, {total_rej} rejected")
    return 0


def cmd_rasterize(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    slides = _read_slides(root)
    maps_dir = root / "maps"
    maps_dir.mkdir(exist_ok=True)

    def one(entry: synth.SlideEntry):
        records = ingest.read_records_csv(root / "records" / f"{entry.meta.slide_id}.csv")
        kept = ingest.filter_classes(records, set(ingest.MAP_CLASSES))
        cell_map = raster.build_cell_map(kept, entry.meta, cfg.raster)
        data = raster.encode_planes_png(cell_map.planes)
        (maps_dir / f"{entry.meta.slide_id}.png").write_bytes(data)
        return entry.meta.slide_id

    done = _map_jobs(one, slides, args.jobs)
    print(f"rasterized {len(done)} cell maps -> {maps_dir}")
    return 0


def cmd_tile(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    slides = _read_slides(root)
    tiles_dir = root / "tiles"
    tiles_dir.mkdir(exist_ok=True)

    def one(entry: synth.SlideEntry):
        map_path = root / "maps" / f"{entry.meta.slide_id}.png"
        if not map_path.exists():
            raise DataError(f"missing cell map {map_path}; run `rasterize` first")
        planes = raster.decode_planes_png(map_path.read_bytes())
        tiles = raster.tile_map(raster.CellMap(planes), cfg.raster, entry.meta.slide_id)
        index = []
        for tile in tiles:
            (tiles_dir / tile.filename).write_bytes(raster.encode_tile_png(tile))
            index.append([tile.tile_id, tile.slide_id, tile.row, tile.col, f"tiles/{tile.filename}"])
        return index

    import csv

    indexes = _map_jobs(one, slides, args.jobs)
    with open(root / "tiles.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tile_id", "slide_id", "row", "col", "path"])
        for index in indexes:
            writer.writerows(index)
    n = sum(len(i) for i in indexes)
    print(f"wrote {n} tiles -> {tiles_dir}")
    return 0


def cmd_featurize(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    slides = _read_slides(root)
    manifest = _read_manifest(root)
    label_of = {t.tile_id: t.label for t in manifest}

    def one(entry: synth.SlideEntry):
        meta = entry.meta
        records = ingest.read_records_csv(root / "records" / f"{meta.slide_id}.csv")
        n_rows, n_cols = raster.tile_grid(meta, cfg.raster)
        rows = []
        for r in range(n_rows):
            for c in range(n_cols):
                tile_id = f"{meta.slide_id}_r{r}_c{c}"
                if tile_id not in label_of:
                    raise DataError(f"tile {tile_id} missing from manifest")
                local = feats.window_records(records, r, c, cfg.raster)
                fv = feats.extract_features(local)
                rows.append((tile_id, meta.slide_id, label_of[tile_id].value, fv))
        return rows

    all_rows = []
    for rows in _map_jobs(one, slides, args.jobs):
        all_rows.extend(rows)
    feats.write_features_csv(root / "features.csv", all_rows)
    print(f"featurized {len(all_rows)} tiles -> {root / 'features.csv'}")
    return 0


def cmd_split(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    manifest = _read_manifest(root)
    plans_dir = root / "plans"
    plans_dir.mkdir(exist_ok=True)
    policy = args.policy if args.policy else cfg.split_policy
    trials = args.trials if args.trials is not None else cfg.trials
    seed = cfg.split_seed
    paths = []
    for trial in range(trials):
        if policy == splits.POLICY_WSI:
            plan = splits.make_wsi_split(
                manifest,
                n_test_slides=args.test_slides if args.test_slides else cfg.n_test_slides,
                val_fraction=args.val_fraction if args.val_fraction is not None else cfg.val_fraction,
                seed=seed,
                trial=trial,
            )
        else:
            plan = splits.make_tile_kfold(
                manifest, k=args.k if args.k else cfg.k, seed=seed, trial=trial
            )
        path = plans_dir / f"plan_{policy}_t{trial}.csv"
        splits.write_plan_csv(path, plan, manifest)
        paths.append(path)
    print(f"wrote {len(paths)} {policy} plan(s) -> {plans_dir}")
    return 0


def _fit_on(feature_rows, tile_ids, params, seed):
    rows = [row for row in feature_rows if row[0] in tile_ids]
    if not rows:
        raise DataError("no feature rows in the training part")
    X = np.array([row[3].values for row in rows])
    y = [splits.GrowthPattern(row[2]) for row in rows]
    standardizer = svm.Standardizer.fit(X)
    model = svm.fit(standardizer.transform(X), y, params, seed)
    return model, standardizer


def _score_rows(feature_rows, tile_ids, model, standardizer):
    rows = [row for row in feature_rows if row[0] in tile_ids]
    out = []
    for tile_id, _, _, fv in rows:
        margins = svm.score(model, standardizer.transform(np.array(fv.values)))
        pred = model.classes[int(np.argmax(margins))]
        out.append((tile_id, margins, pred))
    return out


def cmd_train_svm(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    plan_path = Path(args.plan)
    if not plan_path.exists():
        raise DataError(f"missing plan {plan_path}")
    plan, _ = splits.read_plan_csv(plan_path)
    features_path = Path(args.features) if args.features else root / "features.csv"
    if not features_path.exists():
        raise DataError(f"missing features table {features_path}; run `featurize` first")
    feature_rows = feats.read_features_csv(features_path)
    known = {row[0] for row in feature_rows}
    missing = [t for t in plan.assignments if t not in known]
    if missing:
        raise DataError(f"{len(missing)} plan tiles missing from features (e.g. {missing[:3]})")

    models_dir = root / "models"
    scores_dir = root / "scores"
    models_dir.mkdir(exist_ok=True)
    scores_dir.mkdir(exist_ok=True)
    stem = plan_path.stem

    if plan.policy == splits.POLICY_WSI:
        train_ids = set(plan.tiles_in(splits.PART_TRAIN))
        model, standardizer = _fit_on(feature_rows, train_ids, cfg.svm, cfg.svm_seed)
        svm.save_model(models_dir / f"svm_{stem}.txt", model, standardizer)
        rows = _score_rows(feature_rows, set(plan.assignments), model, standardizer)
        svm.write_scores_csv(scores_dir / f"svm_{stem}.csv", rows)
        print(f"trained svm on {len(train_ids)} tiles; scored {len(rows)} -> {scores_dir}")
    else:
        folds = [int(args.fold)] if args.fold is not None else list(range(plan.n_folds))
        for fold in folds:
            fold_name = str(fold)
            test_ids = set(plan.tiles_in(fold_name))
            train_ids = {t for t, p in plan.assignments.items() if p != fold_name}
            model, standardizer = _fit_on(feature_rows, train_ids, cfg.svm, cfg.svm_seed)
            svm.save_model(models_dir / f"svm_{stem}_f{fold}.txt", model, standardizer)
            rows = _score_rows(feature_rows, test_ids, model, standardizer)
            svm.write_scores_csv(scores_dir / f"svm_{stem}_f{fold}.csv", rows)
        print(f"trained {len(folds)} fold model(s) for {stem} -> {models_dir}")
    return 0


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    plan_path = Path(args.plan)
    scores_path = Path(args.scores)
    for p in (plan_path, scores_path):
        if not p.exists():
            raise DataError(f"missing {p}")
    plan, plan_manifest = splits.read_plan_csv(plan_path)
    score_rows = svm.read_scores_csv(scores_path)
    label_of = {t.tile_id: t.label for t in plan_manifest}

    if args.part == "scored":
        selected = [r for r in score_rows if r[0] in label_of]
    else:
        wanted = set(plan.tiles_in(args.part))
        selected = [r for r in score_rows if r[0] in wanted]
    if not selected:
        raise DataError(f"no scored tiles in part {args.part!r} of {plan_path.name}")

    truth = [label_of[tile_id] for tile_id, _, _ in selected]
    predicted = [pred for _, _, pred in selected]
    scores = np.array([margins for _, margins, _ in selected])
    report = metrics.evaluate(truth, predicted, scores)

    evals_dir = root / "evals"
    evals_dir.mkdir(exist_ok=True)
    protocol = args.protocol if args.protocol else plan.policy
    # For kfold score files the fold index is the natural trial number.
    trial = plan.trial
    stem = scores_path.stem
    if plan.policy == splits.POLICY_KFOLD and "_f" in stem:
        trial = int(stem.rsplit("_f", 1)[1])
    metrics.write_eval_csv(evals_dir / f"eval_{stem}.csv", protocol, trial, report)
    metrics.write_confusion_csv(evals_dir / f"confusion_{stem}.csv", report.confusion)
    print(
        f"{protocol} trial {trial}: accuracy={report.accuracy:.4f} "
        f"f1_macro={report.f1_macro:.4f} aucroc_macro={report.aucroc_macro:.4f} "
        f"(n={report.n_samples})"
    )
    print(f"{'class':16s} {'precision':>9s} {'recall':>9s} {'f1':>9s}")
    for cls, (precision, recall, f1) in report.per_class.items():
        print(f"{cls.value:16s} {precision:9.4f} {recall:9.4f} {f1:9.4f}")
    return 0


def cmd_audit_splits(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    audits_dir = root / "audits"
    audits_dir.mkdir(exist_ok=True)
    import csv

    for plan_file in args.plans:
        plan_path = Path(plan_file)
        if not plan_path.exists():
            raise DataError(f"missing plan {plan_path}")
        plan, plan_manifest = splits.read_plan_csv(plan_path)
        report = splits.audit_leakage(plan, plan_manifest)
        out = audits_dir / f"audit_{plan_path.stem}.csv"
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pairing", "n_test_tiles", "n_leaked"])
            for e in report.entries:
                writer.writerow([e.pairing, e.n_test_tiles, e.n_leaked])
        print(f"{plan_path.name}: {report.total_leaked} leaked test tiles ({plan.policy})")
    return 0


def cmd_export_dataset(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    plan_path = Path(args.plan)
    if not plan_path.exists():
        raise DataError(f"missing plan {plan_path}")
    plan, plan_manifest = splits.read_plan_csv(plan_path)
    out_dir = Path(args.out)
    tiles_out = out_dir / "tiles"
    tiles_out.mkdir(parents=True, exist_ok=True)
    missing = []
    for tile in plan_manifest:
        src = root / "tiles" / f"{tile.tile_id}.png"
        if not src.exists():
            missing.append(str(src))
            continue
        shutil.copyfile(src, tiles_out / src.name)
    if missing:
        raise DataError(f"{len(missing)} tile PNGs missing (e.g. {missing[:3]})")
    splits.write_manifest_csv(out_dir / "manifest.csv", plan_manifest)
    splits.write_plan_csv(out_dir / "plan.csv", plan, plan_manifest)
    print(f"exported {len(plan_manifest)} tiles + manifest + plan -> {out_dir}")
    return 0


def cmd_report(args, cfg: PipelineConfig) -> int:
    root = _root(args, cfg)
    evals_dir = Path(args.evals) if args.evals else root / "evals"
    if not evals_dir.is_dir():
        raise DataError(f"missing evals directory {evals_dir}")
    rows = []
    for path in sorted(evals_dir.glob("eval_*.csv")):
        rows.append(metrics.read_eval_csv(path))
    if not rows:
        raise DataError(f"no eval_*.csv files under {evals_dir}")

    by_protocol: dict[str, list[dict]] = {}
    for protocol, trial, values in rows:
        by_protocol.setdefault(protocol, []).append(values)

    import csv

    out_path = Path(args.out) if args.out else root / "report.csv"
    header = ["protocol", "n_trials"]
    for name in metrics.METRIC_NAMES:
        header += [f"{name}_mean", f"{name}_std"]
    lines = []
    for protocol in sorted(by_protocol):
        vals = by_protocol[protocol]
        line = [protocol, len(vals)]
        for name in metrics.METRIC_NAMES:
            series = [v[name] for v in vals]
            mean = statistics.fmean(series)
            std = statistics.stdev(series) if len(series) > 1 else 0.0
            line += [repr(mean), repr(std)]
        lines.append(line)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(lines)

    print(f"{'protocol':10s} {'AUCROC':>13s} {'F1-macro':>13s} {'accuracy':>13s} {'trials':>7s}")
    for line in lines:
        protocol, n = line[0], line[1]
        shown = []
        for i in range(len(metrics.METRIC_NAMES)):
            mean, std = float(line[2 + 2 * i]), float(line[3 + 2 * i])
            shown.append(metrics.format_mean_std(mean, std))
        print(f"{protocol:10s} {shown[0]:>13s} {shown[1]:>13s} {shown[2]:>13s} {n:>7d}")
    print(f"report -> {out_path}")
    return 0


# --- parser and entry point -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellmaps",
        description="Cell-map pipeline: synthetic cohorts, rasterization, features, "
        "SVM training, and leakage-aware evaluation.",
    )
    # Global flags are accepted both before and after the subcommand; the
    # post-subcommand copies use SUPPRESS so they only override when present.
    common = argparse.ArgumentParser(add_help=False)
    for target, default in ((parser, None), (common, argparse.SUPPRESS)):
        target.add_argument("--config", default=default, help="INI config file (flags override it)")
        target.add_argument("--root", default=default, help="run directory (overrides config io.root)")
        target.add_argument(
            "--seed", type=int, default=default, help="global seed override (beats CELLMAP_SEED)"
        )
        target.add_argument(
            "--jobs", type=int, default=default, help="worker cap (default: cpu count)"
        )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--per-class", type=int, default=None)
    p.add_argument("--extent", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="parse detector JSON into record tables")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("rasterize", parents=[common], help="build cell-map rasters from records")
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("tile", parents=[common], help="cut cell maps into PNG tiles")
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("featurize", parents=[common], help="compute 12-feature vectors per tile")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("split", parents=[common], help="write split plans")
    p.add_argument("--policy", choices=["wsi", "kfold"], default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--test-slides", type=int, default=None)
    p.add_argument("--val-fraction", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-svm", parents=[common], help="train the feature SVM on a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--fold", type=int, default=None, help="train only this fold (kfold plans)")
    p.set_defaults(func=cmd_train_svm)

    p = sub.add_parser("evaluate", parents=[common], help="score a plan part with the three metrics")
    p.add_argument("--plan", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--part", choices=["test", "val", "train", "scored"], default="test")
    p.add_argument("--protocol", default=None, help="protocol label for the report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("audit-splits", parents=[common], help="leakage audit for one or more plans")
    p.add_argument("plans", nargs="+")
    p.set_defaults(func=cmd_audit_splits)

    p = sub.add_parser("export-dataset", parents=[common], help="bundle tiles + manifest + plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_dataset)

    p = sub.add_parser("report", parents=[common], help="aggregate evals into a mean±std table")
    p.add_argument("--evals", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def _fail(code: int, exc: Exception) -> int:
    sys.stderr.write(json.dumps({"error": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0

    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        seed = args.seed
        if seed is None and "CELLMAP_SEED" in os.environ:
            try:
                seed = int(os.environ["CELLMAP_SEED"])
            except ValueError as exc:
                raise ConfigError(f"CELLMAP_SEED must be an integer: {exc}")
        if seed is not None:
            cfg = cfg.with_global_seed(seed)
        if args.jobs is None:
            args.jobs = os.cpu_count() or 1
        return args.func(args, cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except InfeasibleSplitError as exc:
        return _fail(EXIT_INFEASIBLE, exc)
    except (DataError, FileNotFoundError) as exc:
        return _fail(EXIT_DATA, exc)


if __name__ == "__main__":
    sys.exit(main())
