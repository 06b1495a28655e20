"""Command line front end: ``craig select|train|diagnose|bench``.

A run is described by a :class:`RunConfig`. Values come from the defaults,
then an optional JSON file (``--config``), then explicit flags; later wins.
Every output file records the config hash and seed.

Exit codes: 0 success, 1 a diagnostic check failed, 2 I/O or config error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .coreset import CoresetFormatError, cover_certificate, load_coreset, save_coreset
from .dataset import DataFormatError, load_csv, load_libsvm, normalize, train_test_split
from .diagnostics import error_sweep, estimate_constants, theorem_check
from .metric import calibrate_scale
from .optim import (
    LossModel,
    MlpModel,
    Schedule,
    craig_coreset,
    feature_blocks,
    solve_optimum,
    train,
    train_with_per_epoch_reselection,
    write_metrics_csv,
)
from .synthetic import gaussian_blobs, linear_regression

__all__ = ["RunConfig", "build_parser", "main", "load_config"]

EXIT_OK, EXIT_CHECK, EXIT_IO = 0, 1, 2

# keys that do not change any result and stay out of the hash
_UNHASHED = ("out", "threads")


@dataclass
class RunConfig:
    data: str = "synthetic:blobs"
    format: str = "auto"
    label_column: int = -1
    header: bool = False
    normalization: str = "rows"
    test_fraction: float = 0.0
    # synthetic generator knobs
    n: int = 1000
    d: int = 10
    classes: int = 2
    subclusters: int = 10
    spread: float = 0.15
    noise: float = 0.1
    # model and optimizer
    model: str = "logistic"
    lam: float = 1e-5
    hidden: int = 20
    optimizer: str = "sgd"
    schedule: str = "constant"
    alpha0: float | None = None
    b: float = 0.1
    tau: float = 0.0
    epochs: int = 10
    batch: int = 1
    inner: int | None = None
    period: int = 1
    projection: float | None = None
    # selection
    fraction: float | None = None
    epsilon: float | None = None
    variant: str = "lazy"
    radius: float = 10.0
    bins: int = 8
    audit_samples: int = 1000
    coreset: str | None = None
    # diagnostics and bench
    samples: int = 100
    n_random: int = 20
    checks: list = field(default_factory=lambda: ["bound", "budget", "thm1", "thm2"])
    fractions: list = field(default_factory=lambda: [round(0.1 * k, 1) for k in range(1, 11)])
    # bookkeeping
    seed: int = 0
    threads: int | None = None
    out: str = "craig-out"

    def to_dict(self):
        return dataclasses.asdict(self)

    def hashed(self):
        return {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.hashed(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self):
        if self.model not in ("logistic", "ridge", "mlp"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.fraction is not None and not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        if self.epsilon is not None and not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must lie in [0, 1)")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ValueError(f"{path}: unknown config keys {unknown}")
    return data


def _float_or_none(s):
    return None if s.lower() == "none" else float(s)


def _csv_list(conv):
    def parse(s):
        return [conv(p) for p in s.split(",") if p.strip()]
    return parse


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="cap on BLAS/OpenMP worker threads")
    g.add_argument("--out", help="output directory")
    g.add_argument("--data", help="file path, synthetic:blobs, synthetic:regression or bundled:<name>")
    g.add_argument("--format", choices=["auto", "libsvm", "csv"])
    g.add_argument("--label-column", type=int)
    g.add_argument("--header", action="store_true", default=None)
    g.add_argument("--normalization", choices=["rows", "minmax", "none"])
    g.add_argument("--minmax", action="store_const", const="minmax", dest="normalization")
    g.add_argument("--test-fraction", type=float)
    g.add_argument("--n", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--classes", type=int)
    g.add_argument("--subclusters", type=int)
    g.add_argument("--spread", type=float)
    g.add_argument("--noise", type=float)
    g.add_argument("--model", choices=["logistic", "ridge", "mlp"])
    g.add_argument("--lam", type=float)
    g.add_argument("--hidden", type=int)
    g.add_argument("--fraction", type=_float_or_none)
    g.add_argument("--epsilon", type=_float_or_none, help="total error budget (inf allowed)")
    g.add_argument("--variant", choices=["naive", "lazy", "stochastic"])
    g.add_argument("--radius", type=float)
    g.add_argument("--bins", type=int)
    g.add_argument("--audit-samples", type=int)
    g.add_argument("--coreset", help="coreset file written by `craig select`")

    opt = argparse.ArgumentParser(add_help=False)
    o = opt.add_argument_group("training")
    o.add_argument("--optimizer", choices=["ig", "sgd", "svrg", "saga"])
    o.add_argument("--schedule", choices=["constant", "exponential", "k-inverse", "power"])
    o.add_argument("--alpha0", type=_float_or_none)
    o.add_argument("--b", type=float)
    o.add_argument("--tau", type=float)
    o.add_argument("--epochs", type=int)
    o.add_argument("--batch", type=int)
    o.add_argument("--inner", type=int)
    o.add_argument("--period", type=int)
    o.add_argument("--projection", type=_float_or_none)

    parser = argparse.ArgumentParser(prog="craig", description="Weighted coresets for incremental gradient methods.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("select", parents=[common], help="select a coreset and write it with a certificate")
    sub.add_parser("train", parents=[common, opt], help="train and write per-epoch metrics")
    p = sub.add_parser("diagnose", parents=[common, opt], help="gradient-error and convergence checks")
    p.add_argument("--samples", type=int)
    p.add_argument("--n-random", type=int)
    p.add_argument("--checks", type=_csv_list(str), help="comma list from bound,budget,thm1,thm2")
    p = sub.add_parser("bench", parents=[common, opt], help="timing table over a fraction grid")
    p.add_argument("--fractions", type=_csv_list(float))
    return parser


def resolve_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config(args.config))
    for key in _FIELDS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return RunConfig(**values).validate()


# data ------------------------------------------------------------------------

def load_data(cfg: RunConfig):
    """Normalized ``(train, test)``; ``test`` is ``None`` without a split."""
    src = cfg.data
    if src == "synthetic:blobs":
        ds = gaussian_blobs(cfg.n, cfg.d, cfg.classes, subclusters=cfg.subclusters,
                            spread=cfg.spread, seed=cfg.seed)
    elif src == "synthetic:regression":
        ds = linear_regression(cfg.n, cfg.d, noise=cfg.noise, seed=cfg.seed)
    else:
        if src.startswith("bundled:"):
            ref = resources.files("craig") / "data" / src.split(":", 1)[1]
            if not ref.is_file():
                raise FileNotFoundError(f"no bundled dataset named {src}")
            path = Path(str(ref))
        else:
            path = Path(src)
        if not path.exists():
            raise FileNotFoundError(f"data file not found: {path}")
        fmt = cfg.format
        if fmt == "auto":
            fmt = "csv" if path.suffix.lower() == ".csv" else "libsvm"
        task = "regression" if cfg.model == "ridge" else None
        if fmt == "csv":
            ds = load_csv(path, label_column=cfg.label_column, header=cfg.header, task=task)
        else:
            ds = load_libsvm(path, task=task or "classification")
    ds = normalize(ds, cfg.normalization)
    if cfg.test_fraction > 0:
        return train_test_split(ds, cfg.test_fraction, seed=cfg.seed)
    return ds, None


def _loss(cfg):
    return LossModel("ridge" if cfg.model == "ridge" else "logistic", cfg.lam)


def _schedule(cfg, default_alpha):
    alpha = default_alpha if cfg.alpha0 is None else cfg.alpha0
    return Schedule(cfg.schedule, alpha, b=cfg.b, tau=cfg.tau)


def _select(cfg, ds, loss):
    """Coreset per config (file, fraction or budget), plus blocks and scale."""
    scale = calibrate_scale(loss, ds, cfg.radius, samples=cfg.audit_samples, seed=cfg.seed)
    if cfg.coreset:
        cs = load_coreset(cfg.coreset, n=ds.n)
        _, blocks = feature_blocks(ds, scale, cfg.bins)
        cs.meta.update(scale=scale, selection_s=0.0)
        return cs, blocks
    if cfg.fraction is None and cfg.epsilon is None:
        raise ValueError("give --fraction, --epsilon or --coreset")
    cs, blocks = craig_coreset(
        ds, loss,
        fraction=cfg.fraction if cfg.epsilon is None else None,
        epsilon=cfg.epsilon, radius=cfg.radius, variant=cfg.variant,
        seed=cfg.seed, bins=cfg.bins, scale=scale,
    )
    return cs, blocks


def _stamp(cfg):
    return {"config_hash": cfg.config_hash, "seed": cfg.seed}


def _write_json(path, obj):
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        return str(o)

    def clean(o):
        if isinstance(o, float) and not math.isfinite(o):
            return repr(o)
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return o

    Path(path).write_text(json.dumps(clean(obj), indent=2, sort_keys=True, default=default) + "\n")


# commands --------------------------------------------------------------------

def cmd_select(cfg: RunConfig) -> int:
    ds, _ = load_data(cfg)
    loss = _loss(cfg)
    cs, blocks = _select(cfg, ds, loss)
    cert = cover_certificate(cs, blocks, epsilon=cfg.epsilon)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_coreset(cs, out / "coreset.txt", scale=cs.meta["scale"], **_stamp(cfg))
    _write_json(out / "certificate.json", {**cert, **_stamp(cfg), "scale": cs.meta["scale"],
                                           "config": cfg.hashed()})
    sizes = {c["class_id"]: c["size"] for c in cert["classes"]}
    print(f"selected {cs.size} of {ds.n} points; residual L(S)={cert['residual']:.6g}; "
          f"epsilon={cfg.epsilon}; per-class sizes {sizes}")
    print(f"wrote {out / 'coreset.txt'} and {out / 'certificate.json'}")
    return EXIT_OK


def _run_training(cfg, ds, test, loss, source_cfg=None):
    """Train per ``cfg``; selection (if any) is timed into the wall-clock."""
    if cfg.model == "mlp":
        model = MlpModel.init(ds.d, cfg.hidden, ds.n_classes, lam=max(cfg.lam, 0.0), seed=cfg.seed)
        return train_with_per_epoch_reselection(
            ds, cfg.fraction or 1.0, cfg.epochs, model=model, seed=cfg.seed,
            schedule=_schedule(cfg, 0.5), test=test, batch=max(cfg.batch, 1), period=cfg.period,
            variant=cfg.variant,
        ), None
    w_star = solve_optimum(loss, ds.features, ds.labels)
    t0 = time.perf_counter()
    source = None
    if cfg.coreset or cfg.epsilon is not None or (cfg.fraction is not None and cfg.fraction < 1):
        source, _ = _select(cfg, ds, loss)
    offset = time.perf_counter() - t0
    run = train(ds, loss, cfg.optimizer, _schedule(cfg, 0.1), cfg.epochs, source=source, test=test,
                w_star=w_star, seed=cfg.seed, radius=cfg.projection, batch=cfg.batch,
                inner=cfg.inner, clock_offset=offset)
    return run, source


def cmd_train(cfg: RunConfig) -> int:
    ds, test = load_data(cfg)
    loss = _loss(cfg)
    run, source = _run_training(cfg, ds, test, loss)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {**_stamp(cfg), "optimizer": cfg.optimizer, "model": cfg.model,
            "size": source.size if source is not None else ds.n, "n": ds.n,
            "normalization": cfg.normalization}
    write_metrics_csv(run, out / "metrics.csv", meta=meta)
    last = run.log[-1] if run.log else {}
    print(f"trained {cfg.epochs} epochs ({cfg.optimizer}); grad_evals={run.grad_evals}; "
          f"train_loss={last.get('train_loss', float('nan')):.6g}")
    print(f"wrote {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig) -> int:
    if cfg.model == "mlp":
        raise ValueError("diagnose needs a convex model (logistic or ridge)")
    unknown = sorted(set(cfg.checks) - {"bound", "budget", "thm1", "thm2"})
    if unknown:
        raise ValueError(f"unknown checks {unknown}")
    ds, _ = load_data(cfg)
    loss = _loss(cfg)
    cs, blocks = _select(cfg, ds, loss)
    cert = cover_certificate(cs, blocks, epsilon=cfg.epsilon)
    cs.residual = cert["residual"]
    w_star = solve_optimum(loss, ds.features, ds.labels)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    results = {}
    report = error_sweep(ds, cs, loss, samples=cfg.samples, radius=cfg.radius, seed=cfg.seed,
                         n_random=cfg.n_random)
    report.to_csv(out / "errors.csv")
    if "bound" in cfg.checks:
        results["bound"] = bool(np.all(report.within_bound))
    if "budget" in cfg.checks and cfg.epsilon is not None:
        results["budget"] = bool(cert["within_budget"])

    theorems = {}
    modes = [m for m in ("thm1", "thm2") if m in cfg.checks]
    if modes and cfg.epochs > 0:
        consts = estimate_constants(ds, loss, radius=cfg.radius, seed=cfg.seed)
        for mode in modes:
            alpha = cfg.alpha0
            if alpha is None:
                alpha = min(1.0 / consts.mu, 1.0 / consts.beta)
            sched = Schedule("constant", alpha) if cfg.tau == 0 else Schedule("power", alpha, tau=cfg.tau)
            run = train(ds, loss, "ig", sched, cfg.epochs, source=cs, radius=cfg.projection, log=False)
            extra = np.vstack(run.iterates + [w_star])
            eps = float(error_sweep(ds, cs, loss, samples=cfg.samples, radius=cfg.radius,
                                    seed=cfg.seed, n_random=0, extra_points=extra).errors.max())
            tc = theorem_check(run.iterates, consts, cs, eps, w_star, mode=mode, tau=cfg.tau,
                               alpha=alpha, schedule=sched)
            tc.to_csv(out / f"{mode}.csv")
            theorems[mode] = tc.to_dict()
            results[mode] = tc.passed

    ok = all(results.values())
    _write_json(out / "diagnose.json", {
        **_stamp(cfg), "config": cfg.hashed(), "passed": ok, "checks": results,
        "errors": report.summary(), "certificate": cert, "theorems": theorems,
    })
    for name, passed in results.items():
        print(f"{name}: {'PASS' if passed else 'FAIL'}")
    s = report.summary()
    print(f"mean normalized error: craig={s['mean_normalized_error']:.4g} "
          f"random={s['mean_normalized_random_error']}")
    print(f"wrote {out / 'diagnose.json'}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_bench(cfg: RunConfig) -> int:
    ds, _ = load_data(cfg)
    loss = _loss(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    epochs = max(cfg.epochs, 1)
    rows = []
    for f in cfg.fractions:
        t0 = time.perf_counter()
        cs, _ = craig_coreset(ds, loss, fraction=f, radius=cfg.radius, variant=cfg.variant,
                              seed=cfg.seed, bins=cfg.bins, audit_samples=cfg.audit_samples)
        sel = time.perf_counter() - t0
        t0 = time.perf_counter()
        run = train(ds, loss, cfg.optimizer, _schedule(cfg, 0.1), epochs, source=cs, seed=cfg.seed,
                    batch=cfg.batch, inner=cfg.inner, log=False)
        per_epoch = (time.perf_counter() - t0) / epochs
        rows.append({
            "fraction": f, "size": cs.size, "selection_s": sel, "epoch_s": per_epoch,
            "grad_evals_per_epoch": run.grad_evals // epochs,
            "train_loss": loss.mean_value(run.w, ds.features, ds.labels),
        })
    cols = list(rows[0]) if rows else ["fraction"]
    with open(out / "bench.csv", "w") as fh:
        for k, v in _stamp(cfg).items():
            fh.write(f"# {k}={v}\n")
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) + "\n")
    for r in rows:
        print(f"fraction={r['fraction']:.2f} size={r['size']} select={r['selection_s']:.3f}s "
              f"epoch={r['epoch_s']:.4f}s grad_evals/epoch={r['grad_evals_per_epoch']}")
    print(f"wrote {out / 'bench.csv'}")
    return EXIT_OK


COMMANDS = {"select": cmd_select, "train": cmd_train, "diagnose": cmd_diagnose, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        with threadpool_limits(limits=cfg.threads):
            return COMMANDS[args.command](cfg)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"craig: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DataFormatError, CoresetFormatError) as exc:
        print(f"craig: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, ValueError, TypeError, IndexError) as exc:
        print(f"craig: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
