"""The ten acceptance criteria, each at its stated size, tolerance and time limit."""
import itertools
import math
import time

import numpy as np

from craig.coreset import StopRule, facility_value, greedy_select, select_per_class
from craig.dataset import train_test_split
from craig.diagnostics import error_sweep, estimate_constants, theorem_check
from craig.metric import DissimilarityBlock, sample_ball
from craig.optim import (
    LossModel,
    MlpModel,
    Schedule,
    craig_coreset,
    mlp_forward_backward,
    solve_optimum,
    train,
    train_with_per_epoch_reselection,
)
from craig.synthetic import gaussian_blobs, linear_regression

from oracles import facility as ref
from oracles.verdicts import record


def block(D, class_id=0, offset=0):
    return DissimilarityBlock(class_id, np.arange(len(D)) + offset, 1.0, "convex-feature", dist=np.asarray(D))


def small_instances(count, seed=2024):
    """Criterion 1's generator: m <= 12 random planar points, r in {2, 3}."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        m = int(rng.integers(4, 13))
        r = int(rng.choice([2, 3]))
        yield ref.random_instance(rng, m), r


def logistic_benchmark():
    """Two classes of ten tight sub-clusters each, n=1000, d=10."""
    ds = gaussian_blobs(1000, 10, 2, subclusters=10, seed=0)
    return ds, LossModel("logistic", 1e-5)


def test_c1_greedy_optimality_ratio():
    t0 = time.perf_counter()
    worst, violations = np.inf, 0
    for D, r in small_instances(100):
        cs = greedy_select(block(D), StopRule.size(r), variant="lazy")
        got = ref.F(D.tolist(), cs.meta["local_order"])
        best = ref.best_value(D.tolist(), r)
        worst = min(worst, got / best)
        violations += got < (1 - 1 / math.e) * best
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 10
    record(1, "greedy >= (1-1/e) OPT", ok, f"violations={violations}, worst ratio={worst:.4f}, {elapsed:.1f}s")
    assert ok


def test_c2_lazy_equals_naive():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    mismatches = 0
    for k in range(200):
        m = int(rng.integers(2, 201))
        D = ref.random_instance(rng, m, d=int(rng.integers(1, 6)), integer=k % 3 == 0)
        stop = StopRule.size(int(rng.integers(1, m + 1)))
        a = greedy_select(block(D), stop, variant="naive")
        b = greedy_select(block(D), stop, variant="lazy")
        same = (np.array_equal(a.order, b.order) and np.array_equal(a.weights, b.weights)
                and a.residual == b.residual)
        mismatches += not same
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30
    record(2, "lazy == naive, bit-exact", ok, f"mismatches={mismatches}/200, {elapsed:.1f}s")
    assert ok


def test_c3_bound_validity():
    t0 = time.perf_counter()
    ds, loss = logistic_benchmark()
    cs, _ = craig_coreset(ds, loss, fraction=0.1, radius=10.0, seed=0)
    rep = error_sweep(ds, cs, loss, samples=100, radius=10.0, seed=0, n_random=0)
    elapsed = time.perf_counter() - t0
    over = int(np.sum(rep.errors > cs.residual + 1e-9))
    ok = over == 0 and len(rep.errors) == 100 and elapsed < 30
    record(3, "gradient error <= L(S)", ok,
           f"max error={rep.errors.max():.4g}, L(S)={cs.residual:.4g}, violations={over}, {elapsed:.1f}s")
    assert ok


def test_c4_craig_beats_random():
    ds, loss = logistic_benchmark()
    cs, _ = craig_coreset(ds, loss, fraction=0.1, radius=10.0, seed=0)
    rep = error_sweep(ds, cs, loss, samples=100, radius=10.0, seed=0, n_random=20)
    craig = float(np.mean(rep.normalized_errors))
    rand = float(np.mean(rep.normalized_random_errors))
    ok = craig < rand
    record(4, "CRAIG error < random-subset error", ok, f"craig={craig:.4g}, random={rand:.4g}")
    assert ok


def test_c5_convergence_equivalence():
    t0 = time.perf_counter()
    ds, loss = logistic_benchmark()
    w_star = solve_optimum(loss, ds.features, ds.labels)
    f_star = loss.mean_value(w_star, ds.features, ds.labels)
    cs, _ = craig_coreset(ds, loss, fraction=0.1, radius=10.0, seed=0)
    sched = Schedule("k-inverse", 0.2, b=0.1)
    epochs = 20

    def first_hit(run):
        return next((r["epoch"] for r in run.log if r["train_loss"] - f_star <= 1e-2), None)

    details, ok = [], True
    for opt in ("sgd", "svrg", "saga"):
        full = train(ds, loss, opt, sched, epochs, seed=0)
        core = train(ds, loss, opt, sched, epochs, source=cs, seed=0)
        kf, kc = first_hit(full), first_hit(core)
        ratio = full.grad_evals / core.grad_evals
        good = kc is not None and kf is not None and kc <= kf and ratio == 10
        ok &= good
        details.append(f"{opt}: full@{kf} coreset@{kc} evals x{ratio:g}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    record(5, "coreset SGD/SVRG/SAGA reach f(w*)+1e-2 no later", ok, "; ".join(details) + f"; {elapsed:.1f}s")
    assert ok


def test_c6_theorem_neighborhoods():
    t0 = time.perf_counter()
    violations, checks, slack = 0, 0, []
    for seed in range(5):
        ds = linear_regression(200, 5, seed=seed)
        loss = LossModel("ridge", 1e-5)
        X, y = ds.features, ds.labels
        w_star = np.linalg.solve(X.T @ X + ds.n * loss.lam * np.eye(ds.d), X.T @ y)
        cs, _ = craig_coreset(ds, loss, fraction=0.1, radius=10.0, seed=seed)
        consts = estimate_constants(ds, loss, radius=10.0, seed=seed)
        alpha = min(1 / consts.mu, 1 / consts.beta)
        sched = Schedule("constant", alpha)
        run = train(ds, loss, "ig", sched, 100, source=cs, log=False)
        extra = np.vstack(run.iterates + [w_star])
        eps = float(error_sweep(ds, cs, loss, samples=100, radius=10.0, seed=seed, n_random=0,
                                extra_points=extra).errors.max())
        for mode in ("thm1", "thm2"):
            tc = theorem_check(run.iterates, consts, cs, eps, w_star, mode=mode, alpha=alpha, schedule=sched)
            checks += 1
            tail_obs = np.array(tc.observed[tc.tail_start:])
            tail_pred = np.array(tc.predicted[tc.tail_start:])
            violations += int(np.sum(tail_obs > tail_pred)) + (not tc.preconditions_met)
            slack.append(float(np.min(tail_pred / np.maximum(tail_obs, 1e-300))))
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60
    record(6, "tail iterates inside predicted radii", ok,
           f"checks={checks}, violations={violations}, min pred/obs={min(slack):.3g}, {elapsed:.1f}s")
    assert ok


def _fd(f, w, h=1e-6):
    g = np.empty_like(w)
    for k in range(len(w)):
        step = h * (1 + abs(w[k]))
        e = np.zeros_like(w)
        e[k] = step
        g[k] = (f(w + e) - f(w - e)) / (2 * step)
    return g


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def test_c7_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    worst = {}
    for kind in ("logistic", "ridge"):
        loss = LossModel(kind, 1e-3)
        errs = []
        for _ in range(50):
            d = int(rng.integers(2, 8))
            w = rng.standard_normal(d) * 3
            x = rng.standard_normal(d)
            x /= max(1.0, np.linalg.norm(x))
            y = float(rng.integers(0, 2)) if kind == "logistic" else float(rng.standard_normal())
            errs.append(_rel(loss.grad(w, x, y), _fd(lambda v: loss.values(v, x[None], [y])[0], w)))
        worst[kind] = max(errs)
    errs = []
    for probe in range(50):
        model = MlpModel.init(4, 5, 3, lam=1e-2, seed=probe)
        X, y = rng.standard_normal((3, 4)), rng.integers(0, 3, 3)
        s = rng.integers(1, 5, 3).astype(float)
        _, grads, _ = mlp_forward_backward(model, X, y, s)
        flat = np.concatenate([getattr(model, k).ravel() for k in ("W1", "b1", "W2", "b2")])
        shapes = [getattr(model, k).shape for k in ("W1", "b1", "W2", "b2")]

        def f(v):
            m, pos = model.copy(), 0
            for name, shape in zip(("W1", "b1", "W2", "b2"), shapes):
                size = int(np.prod(shape))
                setattr(m, name, v[pos:pos + size].reshape(shape))
                pos += size
            return mlp_forward_backward(m, X, y, s)[0]

        g = np.concatenate([grads[k].ravel() for k in ("W1", "b1", "W2", "b2")])
        errs.append(_rel(g, _fd(f, flat)))
    worst["mlp"] = max(errs)
    elapsed = time.perf_counter() - t0
    ok = all(v <= 1e-5 for v in worst.values()) and elapsed < 30
    record(7, "closed-form gradients match finite differences", ok,
           ", ".join(f"{k} worst={v:.2e}" for k, v in worst.items()) + f", {elapsed:.1f}s")
    assert ok


def test_c8_weight_bookkeeping():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    bad = 0
    for run in range(1000):
        K = int(rng.integers(1, 4))
        sizes = rng.integers(1, 25, K)
        blocks, offset = [], 0
        for c, m in enumerate(sizes):
            D = ref.random_instance(rng, int(m), integer=run % 4 == 0)
            blocks.append(block(D, c, offset))
            offset += int(m)
        n = int(sizes.sum())
        r = [int(rng.integers(1, m + 1)) for m in sizes]
        variant = ("naive", "lazy", "stochastic")[run % 3]
        cs = select_per_class(blocks, sizes=r, variant=variant, seed=run, n=n)
        if cs.total_weight != n:
            bad += 1
            continue
        owner = dict(zip(cs.universe.tolist(), cs.assignment.tolist()))
        counts = {int(e): 0 for e in cs.order}
        selected = set(counts)
        for b in blocks:
            sel_local = sorted(int(e) - int(b.indices[0]) for e in cs.order if e in set(b.indices.tolist()))
            for i in range(b.m):
                g = int(b.indices[i])
                a = owner[g]
                counts[a] += 1
                a_local = a - int(b.indices[0])
                nearest = min(b.dist[i, j] for j in sel_local)
                if a_local not in sel_local or b.dist[i, a_local] != nearest:
                    bad += 1
                if g in selected and a != g:
                    bad += 1
        bad += any(counts[int(e)] != int(w) for e, w in zip(cs.order, cs.weights))
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 60
    record(8, "sum of weights = n and nearest assignment", ok, f"violations={bad}/1000 runs, {elapsed:.1f}s")
    assert ok


def test_c9_mlp_reselection():
    t0 = time.perf_counter()
    gaps, details = [], []
    for seed in range(3):
        ds = gaussian_blobs(2000, 10, 2, subclusters=5, spread=0.6, separation=0.5, seed=seed)
        tr, te = train_test_split(ds, 0.25, seed=seed)
        model = MlpModel.init(tr.d, 20, 2, lam=1e-4, seed=seed)
        acc = []
        for frac in (1.0, 0.3):
            run = train_with_per_epoch_reselection(tr, frac, 20, model=model, seed=seed,
                                                   schedule=Schedule("constant", 0.5), test=te, batch=10)
            acc.append(1.0 - run.log[-1]["test_error"])
        gaps.append(abs(acc[0] - acc[1]))
        details.append(f"seed {seed}: full={acc[0]:.3f} craig30%={acc[1]:.3f}")
    elapsed = time.perf_counter() - t0
    ok = max(gaps) <= 0.02 and elapsed < 120
    record(9, "30% per-epoch subsets within 2 points of full data", ok, "; ".join(details) + f"; {elapsed:.1f}s")
    assert ok


def test_c10_submodularity_suite():
    rng = np.random.default_rng(10)
    dr_violations = mono_violations = tests = 0
    for D, _ in small_instances(100):
        b = block(D)
        m = len(D)
        for _ in range(5):
            T = [int(v) for v in rng.permutation(m)[: rng.integers(1, m)]]
            S = T[: rng.integers(0, len(T) + 1)]
            f_S, f_T = facility_value(b, S), facility_value(b, T)
            mono_violations += f_S > f_T + 1e-12
            for e in range(m):
                if e in T:
                    continue
                tests += 1
                g_S = facility_value(b, S + [e]) - f_S
                g_T = facility_value(b, T + [e]) - f_T
                dr_violations += g_S < g_T - 1e-12
                mono_violations += g_T < -1e-12
        # every chain of nested sets is monotone
        for chain in itertools.islice(itertools.permutations(range(m)), 3):
            vals = [facility_value(b, list(chain[:k])) for k in range(m + 1)]
            mono_violations += any(y < x - 1e-12 for x, y in zip(vals, vals[1:]))
    ok = dr_violations == 0 and mono_violations == 0
    record(10, "diminishing returns and monotonicity", ok,
           f"{tests} gain pairs, dr violations={dr_violations}, monotone violations={mono_violations}")
    assert ok
