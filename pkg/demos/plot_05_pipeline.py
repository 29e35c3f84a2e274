"""
End-to-end pipeline
===================

Generate a synthetic corpus, quanvolve it into a cache, train the CNN and
report the confusion matrix. The same steps are available from the shell::

    quanvnet synth --out ds --per-class 200 --classes 3 --side 28 --seed 11
    quanvnet preprocess --data ds --cache cache
    quanvnet train --cache cache --out run --epochs 20 --seed 5
"""
import tempfile
import time

import numpy as np

from quanvnet.data import class_index, generate_synthetic, label_map_for, read_cache
from quanvnet.nn import TrainConfig, train
from quanvnet.quanv import QuanvConfig, quanvolve_dataset, summarize

records = generate_synthetic(per_class=100, side=28, classes=3, seed=0)
labels = label_map_for(3)

with tempfile.TemporaryDirectory() as cache:
    t0 = time.perf_counter()
    manifest = quanvolve_dataset(records, QuanvConfig(), cache)
    print("preprocess:", summarize(manifest), f"{time.perf_counter() - t0:.1f}s")
    # A second pass finds every file already cached.
    print("rerun     :", summarize(quanvolve_dataset(records, QuanvConfig(), cache)))
    data = []
    for entry in manifest:
        cached = read_cache(entry.path)
        data.append((cached.values, class_index(labels, cached.label)))

print("feature map shape:", data[0][0].shape, "range:", data[0][0].min(), data[0][0].max())

params, metrics = train(data, TrainConfig(epochs=10, seed=0))
for epoch, (tl, vl, va) in enumerate(zip(metrics.train_loss, metrics.val_loss, metrics.val_acc), 1):
    print(f"epoch {epoch:2d}  train loss {tl:.4f}  val loss {vl:.4f}  val acc {va:.3f}")
print("classes:", list(labels.values()))
print(metrics.confusion)
print("accuracy = trace / total:", np.trace(metrics.confusion) / metrics.confusion.sum())
