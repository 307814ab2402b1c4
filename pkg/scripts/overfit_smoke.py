#!/usr/bin/env python3
"""Overfit smoke run: drive the full-size model to train CCC >= 0.99 on a
handful of synthetic windows at lr 1e-3.

A healthy build finishes in well under a minute on a laptop CPU; failure
to converge inside the step budget almost always means a gradient or
initialization regression.

    python3 scripts/overfit_smoke.py
    python3 scripts/overfit_smoke.py --windows 8 --max-steps 500 --target 0.99
"""

import argparse
import time

import numpy as np

from dctm.config import DctmConfig
from dctm.data import (
    SyntheticSpec,
    apply_norm_stats,
    batch_windows,
    compute_norm_stats,
    generate_synthetic,
    make_windows,
)
from dctm.metrics import ccc, ccc_loss
from dctm.model import DctmModel
from dctm.optim import Adam
from dctm.tensor import no_grad


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--windows", type=int, default=8)
    ap.add_argument("--max-steps", type=int, default=500)
    ap.add_argument("--target", type=float, default=0.99)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=7)
    args = ap.parse_args()

    cfg = DctmConfig(seed=args.seed)
    sessions = generate_synthetic(SyntheticSpec(seed=args.data_seed, sessions=1,
                                                frames=300, roles=("expert",)))
    stats = compute_norm_stats(sessions)
    session = apply_norm_stats(sessions[0], stats)
    windows = make_windows(session, cfg.data.window, cfg.data.stride)[:args.windows]
    batch = batch_windows(windows, batch_size=args.windows)[0]
    print(f"{len(windows)} windows of {cfg.data.window} frames, "
          f"model rf spans {DctmModel(cfg, {m: batch.features[m].shape[1] for m in batch.features}, np.random.default_rng(0)).receptive_field()} frames")

    model = DctmModel(cfg, {m: batch.features[m].shape[1] for m in batch.features},
                      np.random.default_rng(cfg.seed))
    opt = Adam(list(model.named_parameters()), lr=args.lr)
    t0 = time.perf_counter()
    for step in range(args.max_steps):
        pred = model(batch.features, np.random.default_rng([args.seed, step]),
                     training=True)
        loss = ccc_loss(pred, batch.labels, mask=batch.mask)
        opt.zero_grad()
        loss.backward()
        opt.step()
        with no_grad():
            score = ccc(pred.data.ravel(), batch.labels.ravel(),
                        mask=batch.mask.ravel()).ccc
        if step % 10 == 0 or score >= args.target:
            print(f"step {step:4d}  loss {loss.item():.4f}  "
                  f"train_ccc {score:+.4f}  ({time.perf_counter() - t0:.1f}s)")
        if score >= args.target:
            print(f"reached {args.target} at step {step} "
                  f"in {time.perf_counter() - t0:.1f}s")
            return 0
    print(f"did NOT reach {args.target} within {args.max_steps} steps "
          f"(final {score:+.4f})")
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
