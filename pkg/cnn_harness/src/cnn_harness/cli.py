"""Command line for the CNN harness: train on a plan, score tile sets."""

from __future__ import annotations

import argparse
import logging
import sys

from .infer import infer
from .train import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cnn-harness",
        description="Fine-tune a ResNet50 on cell-map tiles and emit score CSVs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a split plan's train part")
    p.add_argument("--manifest", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--tiles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pretrained", default="auto", help="auto | none | path to state dict")
    p.add_argument("--no-flips", action="store_true")
    p.add_argument("--score-part", default="test")

    p = sub.add_parser("infer", help="score every tile in a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--tiles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=8)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            config = TrainConfig(
                epochs=args.epochs,
                lr=args.lr,
                batch_size=args.batch_size,
                flip_augmentation=not args.no_flips,
                pretrained=args.pretrained,
            )
            result = train(
                args.manifest, args.plan, args.tiles, args.out,
                config, seed=args.seed, score_part=args.score_part,
            )
            print(f"checkpoint: {result.checkpoint_path}")
            print(f"train log:  {result.log_path}")
            print(f"scores:     {result.scores_path} (init: {result.init})")
        else:
            n = infer(args.checkpoint, args.manifest, args.tiles, args.out, args.batch_size)
            print(f"scored {n} tiles -> {args.out}")
        return 0
    except (ValueError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
