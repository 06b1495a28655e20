"""Compare SGD, SVRG and SAGA on the full data against the same methods on a 10% subset.

Run: python3 demos/02_train.py
"""
from craig import LossModel, Schedule, craig_coreset, gaussian_blobs, solve_optimum, train

ds = gaussian_blobs(1000, 10, 2, subclusters=10, seed=0)
loss = LossModel("logistic", 1e-5)
w_star = solve_optimum(loss, ds.features, ds.labels)
f_star = loss.mean_value(w_star, ds.features, ds.labels)
cs, _ = craig_coreset(ds, loss, fraction=0.1, radius=10.0, seed=0)
sched = Schedule("k-inverse", 0.2, b=0.1)

print(f"f(w*) = {f_star:.5f}")
print(f"{'method':6} {'arm':8} {'epoch':>5} {'grad evals':>10} {'gap':>10}")
for opt in ("sgd", "svrg", "saga"):
    for arm, source in (("full", None), ("subset", cs)):
        run = train(ds, loss, opt, sched, 10, source=source, seed=0)
        for row in run.log[1::3]:
            print(f"{opt:6} {arm:8} {row['epoch']:5d} {row['grad_evals']:10d} {row['train_loss'] - f_star:10.2e}")
