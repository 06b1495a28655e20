"""Check the gradient-error certificate and the convergence neighborhoods on least squares.

Run: python3 demos/03_diagnostics.py
"""
import numpy as np

from craig import LossModel, Schedule, craig_coreset, linear_regression, train
from craig.diagnostics import error_sweep, estimate_constants, theorem_check

ds = linear_regression(200, 5, seed=0)
loss = LossModel("ridge", 1e-5)
X, y = ds.features, ds.labels
w_star = np.linalg.solve(X.T @ X + ds.n * loss.lam * np.eye(ds.d), X.T @ y)
cs, _ = craig_coreset(ds, loss, fraction=0.1, radius=10.0, seed=0)

rep = error_sweep(ds, cs, loss, samples=100, radius=10.0, seed=0, n_random=20)
print("error sweep:", rep.summary())

consts = estimate_constants(ds, loss, radius=10.0, seed=0)
alpha = min(1 / consts.mu, 1 / consts.beta)
sched = Schedule("constant", alpha)
run = train(ds, loss, "ig", sched, 100, source=cs, log=False)
eps = float(error_sweep(ds, cs, loss, samples=100, radius=10.0, seed=0, n_random=0,
                        extra_points=np.vstack(run.iterates + [w_star])).errors.max())
print(f"mu={consts.mu:.3g} beta={consts.beta:.3g} C={consts.C:.3g} alpha={alpha:.3g} eps={eps:.3g}")
for mode in ("thm1", "thm2"):
    tc = theorem_check(run.iterates, consts, cs, eps, w_star, mode=mode, alpha=alpha, schedule=sched)
    print(f"{mode}: passed={tc.passed} final distance={tc.observed[-1]:.3g} predicted radius={tc.predicted[-1]:.3g}")
