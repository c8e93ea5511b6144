"""Class centers and attentional class features on a four-pixel toy map.

Run: python3 demos/01_class_centers.py
"""

import numpy as np

from acfseg.acf import class_attention_concat, class_attention_sum, class_centers
from acfseg.autodiff import Tensor


def as_map(rows):
    """(pixels x channels) rows -> 1 x channels x 2 x 2 tensor."""
    return Tensor(np.asarray(rows, dtype=np.float32).T.reshape(1, -1, 2, 2))


# Two feature channels; the left column is "class 0", the right "class 1".
features = as_map([[1, 0], [3, 0], [0, 2], [0, 4]])

print("With one-hot probabilities each center is the plain mean of its pixels:")
hard = as_map([[1, 0], [1, 0], [0, 1], [0, 1]])
print(np.round(class_centers(features, hard).data[0], 4))

print("\nSoft probabilities weight every pixel by its class probability:")
soft = as_map([[0.5, 0.5], [1, 0], [0, 1], [0, 1]])
centers = class_centers(features, soft)
print(np.round(centers.data[0], 4), " (expected [[7/3, 0], [0.2, 2.4]])")

print("\nEach pixel then mixes the centers with its own probabilities.")
attn = class_attention_sum(centers, soft).data[0]
for j, row in enumerate(attn.reshape(2, -1).T):
    print(f"  pixel {j}: sum variant {np.round(row, 4)}")

concat = class_attention_concat(centers, soft).data[0]
print("\nThe concat variant keeps the scaled centers side by side (class-major):")
print("  pixel 0:", np.round(concat.reshape(4, -1)[:, 0], 4))
