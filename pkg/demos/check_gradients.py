"""Validate every tape-computed gradient against central finite differences.

Each parameter is nudged by +/-h and the loss difference is compared to the
analytic partial. The printed table groups parameters by core.

Run: python3 demos/check_gradients.py
"""

import numpy as np

from mpsclassify import LossKind, grad_check, init_model

rng = np.random.default_rng(0)
model = init_model(n_sites=8, n_labels=3, bond_dim=4, seed=3)
images = rng.random((2, 8))
labels = np.array([0, 2])

print("cross-entropy loss, h=1e-5:")
print(grad_check(model, images, labels, h=1e-5, tolerance=1e-6).format_table())

print()
print("mean-square loss, same setup:")
print(grad_check(model, images, labels, h=1e-5, tolerance=1e-6,
                 loss_kind=LossKind.MEAN_SQUARE).format_table())
