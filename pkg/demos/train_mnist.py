"""Desk-scale MNIST run: 5000 train / 2000 test images at 14x14, bond dim 10.

Expects the four standard IDX files (optionally gzipped) under data/mnist;
see the README for where to get them. Prints fetch instructions and exits
cleanly when they are missing. Takes a few minutes on one core.

Run: python3 demos/train_mnist.py [data_dir]
"""

import sys
from pathlib import Path

from mpsclassify import (
    TrainConfig,
    downsample,
    init_model,
    load_split,
    take,
    train,
)

base = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "mnist"

try:
    train_set = downsample(take(load_split(base, "train"), 5000, seed=0), 2)
    test_set = downsample(take(load_split(base, "test"), 2000, seed=1), 2)
except FileNotFoundError as exc:
    print(f"dataset not found: {exc}")
    print("place the IDX files under data/mnist (README has the details) or pass a directory")
    raise SystemExit(0)

print(train_set.summary())
print(test_set.summary())

model = init_model(train_set.n_sites, 10, bond_dim=10, seed=0)
print(model.summary())

config = TrainConfig(learning_rate=1e-3, batch_size=50, epochs=15, seed=0)
history = train(
    model,
    train_set,
    test_set,
    config,
    on_epoch=lambda m: print(
        f"epoch {m.epoch:2d}  train loss {m.train_loss:.4f} acc {m.train_acc:.4f}"
        f"  test loss {m.test_loss:.4f} acc {m.test_acc:.4f}  {m.seconds:.1f}s"
    ),
)
print(f"final test accuracy {history[-1].test_acc:.4f}")
