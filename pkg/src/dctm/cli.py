"""Command-line front end.

Commands: train, evaluate, predict, ablate, gen-synth, verify.
Any config key can be overridden with ``--key=value`` (dotted keys, e.g.
``--optim.lr=1e-4``). Exit codes: 0 success, 1 config/data error,
2 numerical failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import sys

from .ablate import ablate_run, parse_modality_sets
from .config import resolve_config
from .data import SyntheticSpec, generate_dataset
from .errors import ConfigError, DataError, NumericalError
from .train import evaluate_run, predict_run, train_run
from .verify import format_results, run_all

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VERIFY = 3


def _collect_overrides(extras: list[str]) -> dict[str, str]:
    out = {}
    for item in extras:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(
                f"unrecognized argument {item!r}; config overrides use --key=value")
        key, _, value = item[2:].partition("=")
        out[key.strip()] = value.strip()
    return out


def _parse_triple(raw: str, name: str, cast) -> tuple:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"--{name} needs three comma-separated values, got {raw!r}")
    try:
        return tuple(cast(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad --{name} value {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dctm",
        description="Frame-wise multimodal engagement regression.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model and write a run directory")
    train.add_argument("--config", default=None, help="flat key = value config file")
    train.add_argument("--out", required=True, help="run directory to create")

    evaluate = sub.add_parser("evaluate", help="score a checkpoint on a split")
    evaluate.add_argument("--run", required=True, help="run directory from train")
    evaluate.add_argument("--split", default="val")
    evaluate.add_argument("--which", default="best", choices=("best", "last"))

    predict = sub.add_parser("predict", help="write per-frame score CSVs")
    predict.add_argument("--run", required=True)
    predict.add_argument("--out", required=True, help="directory for score files")
    predict.add_argument("--split", default="val")
    predict.add_argument("--which", default="best", choices=("best", "last"))

    ablate = sub.add_parser("ablate", help="train the conv x fusion x subject grid")
    ablate.add_argument("--config", default=None)
    ablate.add_argument("--out", required=True)
    ablate.add_argument("--conv", default="dilated,traditional,none",
                        help="comma-separated conv kinds")
    ablate.add_argument("--fusion", default="sa,gmu")
    ablate.add_argument("--subjects", default=None,
                        help="comma-separated subject filters (default: config value)")
    ablate.add_argument("--modality-sets", default=None,
                        help="e.g. 'head+pose+voice,voice' (default: config value)")

    synth = sub.add_parser("gen-synth", help="generate a labeled synthetic dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--sessions", type=int, default=8)
    synth.add_argument("--frames", type=int, default=500)
    synth.add_argument("--dims", default="8,12,10", help="head,pose,voice widths")
    synth.add_argument("--snr", default="1,1,1", help="head,pose,voice SNR; 0 = pure noise")
    synth.add_argument("--val-fraction", type=float, default=0.2)

    verify = sub.add_parser("verify", help="run the built-in verification suite")
    verify.add_argument("--grad-cases", type=int, default=20)
    verify.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        overrides = _collect_overrides(extras)

        if args.command == "train":
            cfg = resolve_config(args.config, overrides)
            report = train_run(cfg, args.out, log=print)
            print(f"val ccc {report.ccc_overall:+.4f}  "
                  f"(best epoch {report.best_epoch})  -> {args.out}")
            return EXIT_OK

        if args.command == "evaluate":
            evaluate_run(args.run, split=args.split, which=args.which,
                         overrides=overrides, log=print)
            return EXIT_OK

        if args.command == "predict":
            written = predict_run(args.run, args.out, split=args.split,
                                  which=args.which, overrides=overrides)
            for path in written:
                print(path)
            return EXIT_OK

        if args.command == "ablate":
            cfg = resolve_config(args.config, overrides)
            subjects = (tuple(s.strip() for s in args.subjects.split(","))
                        if args.subjects else None)
            sets = (parse_modality_sets(args.modality_sets)
                    if args.modality_sets else None)
            ablate_run(cfg, args.out,
                       conv_kinds=tuple(c.strip() for c in args.conv.split(",")),
                       fusion_kinds=tuple(f.strip() for f in args.fusion.split(",")),
                       subjects=subjects, modality_sets=sets, log=print)
            return EXIT_OK

        if args.command == "gen-synth":
            if overrides:
                raise ConfigError(
                    f"gen-synth takes no config overrides, got {sorted(overrides)}")
            spec = SyntheticSpec(
                seed=args.seed, sessions=args.sessions, frames=args.frames,
                dims=_parse_triple(args.dims, "dims", int),
                snr=_parse_triple(args.snr, "snr", float))
            splits = generate_dataset(args.out, spec, val_fraction=args.val_fraction)
            print(f"wrote {args.sessions} sessions to {args.out} "
                  f"(train {len(splits['train'])}, val {len(splits['val'])})")
            return EXIT_OK

        if args.command == "verify":
            results = run_all(n_grad_cases=args.grad_cases, seed=args.seed)
            print(format_results(results), end="")
            return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY

        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
