"""Command-line entry points for training; flags mirror TrainConfig."""

from __future__ import annotations

import argparse

from .train import TrainConfig, run_classifier_training, run_regressor_training


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    parser.add_argument("--lr", type=float, default=defaults.lr)
    parser.add_argument("--lr-decay", type=float, default=defaults.lr_decay)
    parser.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    parser.add_argument("--epochs", type=int, default=defaults.epochs)
    parser.add_argument("--batch-size", type=int, default=defaults.batch_size)
    parser.add_argument("--seed", type=int, default=defaults.seed)
    parser.add_argument("--val-fraction", type=float, default=defaults.val_fraction)
    parser.add_argument("--log", default=None, help="Write the training log here.")


def _config_from(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        lr_decay=args.lr_decay,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        val_fraction=args.val_fraction,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tvmap-train", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    regressor = commands.add_parser("regressor", help="Train the mu regressor on one TVDS file.")
    regressor.add_argument("dataset")
    regressor.add_argument("output", help="TVMW file to write.")
    _add_config_flags(regressor)

    classifier = commands.add_parser("classifier", help="Train the noise classifier on TVDS files.")
    classifier.add_argument("datasets", nargs="+", help="TVDS files covering both classes.")
    classifier.add_argument("output", help="TVMW file to write.")
    _add_config_flags(classifier)

    args = parser.parse_args(argv)
    cfg = _config_from(args)
    if args.command == "regressor":
        _, result = run_regressor_training(args.dataset, args.output, cfg, log_path=args.log)
        print("\n".join(result.log_lines[-3:]))
    else:
        _, result = run_classifier_training(args.datasets, args.output, cfg, log_path=args.log)
        print("\n".join(result.log_lines[-3:]))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
