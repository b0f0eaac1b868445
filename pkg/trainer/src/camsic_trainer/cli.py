"""Command line entry point: train a toy-scale model and export
weights plus parity fixtures."""

from __future__ import annotations

import argparse
import sys
import time

import torch

from .config import ModelSpec, TrainConfig
from .export import write_fixtures, write_weights
from .train import Trainer


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="camsic-train")
    p.add_argument("--out", required=True, help="weight container path")
    p.add_argument("--fixtures", help="parity fixture directory")
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lam", type=float, default=TrainConfig().lam)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--log-every", type=int, default=100)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = TrainConfig(lam=args.lam, steps=args.steps,
                      batch_size=args.batch_size, lr=args.lr,
                      seed=args.seed, spec=ModelSpec())
    torch.set_num_threads(max(1, torch.get_num_threads()))
    trainer = Trainer(cfg)
    start = time.monotonic()
    try:
        trainer.fit(log_every=args.log_every)
    except RuntimeError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    elapsed = time.monotonic() - start
    last = trainer.history[-1]
    print(f"done in {elapsed:.1f}s  loss={last['loss']:.4f} "
          f"bpp={last['bpp']:.4f} mse={last['mse']:.6f}")
    path = write_weights(trainer.model, args.out)
    print(f"wrote {path}")
    if args.fixtures:
        fx = write_fixtures(trainer.model, args.fixtures)
        print(f"wrote {fx}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
