"""Pick a weighted 10% subset of a two-class blob dataset and inspect it.

Run: python3 demos/01_select.py
"""
import numpy as np

from craig import LossModel, craig_coreset, gaussian_blobs

ds = gaussian_blobs(1000, 10, 2, subclusters=10, seed=0)
loss = LossModel("logistic", 1e-5)
cs, _ = craig_coreset(ds, loss, fraction=0.1, radius=10.0, seed=0)

print(f"dataset: n={ds.n} d={ds.d} classes={ds.n_classes}")
print(f"selected {cs.size} points, weights sum to {cs.total_weight}")
print(f"feature-distance scale c={cs.meta['scale']:.3f}, residual bound L(S)={cs.residual:.2f}")
print("largest weights:", np.sort(cs.weights)[::-1][:10].tolist())
for c in range(ds.n_classes):
    mask = ds.labels[cs.order] == c
    print(f"class {c}: {mask.sum()} elements covering {cs.weights[mask].sum()} points")
