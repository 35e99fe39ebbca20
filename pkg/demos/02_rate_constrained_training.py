"""Train the desk classifier with and without the rate term.

A lambda sweep on a reduced desk task (fewer epochs, so it runs in about a
minute). Bits per parameter fall as lambda grows, and the fitted shape drifts
toward zero.

Run: python demos/02_rate_constrained_training.py
"""

from backslash.trainer import DESK_TASK, TrainConfig, gen_blobs, train

d = DESK_TASK
data = gen_blobs(d["classes"], d["per_class"], d["dim"], d["spread"], seed=0)

print(" lambda   test acc   EG k=0 bits   shape")
for lam in (0.0, 1e2, 1e3, 3e3, 1e4):
    cfg = TrainConfig(
        lam=lam,
        epsilon=d["epsilon"],
        learning_rate=d["learning_rate"],
        epochs=10,
        batch_size=d["batch_size"],
        hidden=d["hidden"],
    )
    model, metrics = train(cfg, data)
    last = metrics.last
    print(f"{lam:7g}   {last.test_accuracy:8.3f}   {last.eg_bits:11.3f}   {last.shape:5.3f}")
    # shape per epoch, the trajectory the fit follows during training
    print("         shape:", " ".join(f"{s:.2f}" for s in metrics.column("shape")))
