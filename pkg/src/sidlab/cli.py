"""Command line interface.

Subcommands:
  train    generate the dataset (if absent) and train models into a run dir
  sample   generate graphs with a chosen sampler and write them as JSON lines
  ablate   run the full (sampler, NFE) grid, write CSV plus figures
  verify   run the desk-scale property suite, one PASS/FAIL line per check
"""

from __future__ import annotations

import argparse
import sys

from .families import (
    AcceptanceRateError,
    EmptyFamilyError,
    MaskLabelError,
    StateSpaceTooLargeError,
)
from .denoiser import TrainingDivergedError
from .harness import ConfigError, MissingModelError

_ERROR_CLASSES = (
    ConfigError,
    MissingModelError,
    TrainingDivergedError,
    StateSpaceTooLargeError,
    EmptyFamilyError,
    MaskLabelError,
    AcceptanceRateError,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sidlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train denoiser (and critic) into a run directory")
    _add_common(p_train)
    p_train.add_argument("--out", required=True, help="run directory for dataset and models")

    p_sample = sub.add_parser("sample", help="generate graphs with one sampler")
    _add_common(p_sample)
    p_sample.add_argument("--out", required=True, help="output graphs JSONL path")
    p_sample.add_argument("--models", required=True, help="run directory holding trained models")
    p_sample.add_argument("--sampler", default=None, help="sampler name (default: first in config)")
    p_sample.add_argument("--nfe", type=int, default=None, help="steps (default: first in config)")
    p_sample.add_argument("--count", type=int, default=None, help="samples (default: config cell size)")

    p_ablate = sub.add_parser("ablate", help="run the sampler x NFE grid and emit CSV + figures")
    _add_common(p_ablate)
    p_ablate.add_argument("--out", required=True, help="output CSV path")
    p_ablate.add_argument("--models", required=True, help="run directory (trains there if missing)")
    p_ablate.add_argument("--no-plot", action="store_true", help="skip figure rendering")

    p_verify = sub.add_parser("verify", help="run the property suite")
    p_verify.add_argument("--out", default=None, help="also write the report to this path")
    return parser


def cmd_train(args) -> int:
    from .harness import ensure_dataset, load_config, train_models

    config = load_config(args.config, args.seed)
    dataset = ensure_dataset(config, args.out)
    train_models(config, dataset, args.out)
    print(f"trained models for {len(dataset)} graphs in {args.out}")
    return 0


def cmd_sample(args) -> int:
    from .graphs import save_graphs
    from .harness import (
        build_noise,
        ensure_dataset,
        load_config,
        load_models,
        run_cell,
    )
    from .rng import RngStream
    from .schedule import Schedule

    config = load_config(args.config, args.seed)
    dataset = ensure_dataset(config, args.models)
    denoiser, critic = load_models(config, args.models)
    import dataclasses

    sampler = args.sampler or config.samplers[0]
    nfe = args.nfe or config.nfe[0]
    count = args.count or config.samples_per_cell
    config = dataclasses.replace(config, samples_per_cell=count)
    spec = build_noise(config, dataset)
    schedule = Schedule.make(config.schedule_kind)
    rng = RngStream(config.seed, 7).child(hash_name(sampler), nfe)
    samples = run_cell(sampler, nfe, config, dataset, denoiser, critic, spec, schedule, rng)
    save_graphs(args.out, samples)
    print(f"wrote {len(samples)} samples from {sampler} at NFE {nfe} to {args.out}")
    return 0


def hash_name(name: str) -> int:
    h = 0
    for ch in name:
        h = (h * 131 + ord(ch)) & 0xFFFFFFFF
    return h


def cmd_ablate(args) -> int:
    from .harness import load_config, run_ablation

    config = load_config(args.config, args.seed)
    rows = run_ablation(config, args.models, args.out, plot=not args.no_plot)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_verify(args) -> int:
    from .verify import all_checks

    results = all_checks()
    lines = [r.line() for r in results]
    for line in lines:
        print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "train": cmd_train,
        "sample": cmd_sample,
        "ablate": cmd_ablate,
        "verify": cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except _ERROR_CLASSES as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
