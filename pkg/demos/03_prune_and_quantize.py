"""Pruning and quantization sweeps for a baseline and a rate-constrained model.

Run: python demos/03_prune_and_quantize.py   (about a minute)
"""

import numpy as np

from backslash.trainer import DESK_TASK, TrainConfig, evaluate, gen_blobs, prune_model, quantize_model, train

d = DESK_TASK
data = gen_blobs(d["classes"], d["per_class"], d["dim"], d["spread"], seed=0)
models = {}
for name, lam in (("baseline", 0.0), ("lambda=3e3", 3e3)):
    cfg = TrainConfig(lam=lam, epsilon=d["epsilon"], learning_rate=d["learning_rate"], hidden=d["hidden"])
    models[name], _ = train(cfg, data)

x, y = data.x_test, data.y_test
print("pruning rate  " + "  ".join(f"{name:>10s}" for name in models))
for r in np.arange(10) / 10:
    accs = [evaluate(prune_model(m, r), x, y) for m in models.values()]
    print(f"{r:12.1f}  " + "  ".join(f"{a:10.3f}" for a in accs))

print()
print("step          " + "  ".join(f"{name:>10s}" for name in models))
for n in (10, 8, 6, 5, 4):
    accs = [evaluate(quantize_model(m, n), x, y) for m in models.values()]
    print(f"2^-{n:<10d} " + "  ".join(f"{a:10.3f}" for a in accs))
print(f"chance level {1 / d['classes']:.2f}")
