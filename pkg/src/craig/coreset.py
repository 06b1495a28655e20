"""Greedy submodular cover over a facility-location function.

Given per-class gradient bounds ``d_ij``, the estimation error of a subset
``S`` is ``L(S) = sum_i min_{j in S} d_ij``. Adding a phantom element at
distance ``M = max d_ij`` from every point turns this into the monotone
submodular ``F(S) = L({s0}) - L(S + {s0}) = sum_i (M - mindist_i)`` which
the greedy variants below maximize.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import ClassPartition
from .metric import DissimilarityBlock

__all__ = [
    "FacilityState",
    "StopRule",
    "Coreset",
    "CoresetFormatError",
    "marginal_gain",
    "greedy_select",
    "select_per_class",
    "merge_class_coresets",
    "allocate_sizes",
    "cover_certificate",
    "facility_value",
    "residual_of",
    "save_coreset",
    "load_coreset",
]

VARIANTS = ("naive", "lazy", "stochastic")
CHUNK = 256
DELTA = 0.01


@dataclass
class FacilityState:
    """Incremental greedy state over one block (local indices)."""

    mindist: np.ndarray
    aux_M: float
    F_value: float = 0.0
    selected: list = field(default_factory=list)

    @classmethod
    def empty(cls, block: DissimilarityBlock) -> "FacilityState":
        M = block.max_dist()
        return cls(mindist=np.full(block.m, M), aux_M=M)

    @property
    def residual(self) -> float:
        """``L(S)``; only meaningful once something is selected."""
        return float(self.mindist.sum())

    def add(self, e: int, row: np.ndarray, gain: float):
        self.mindist = np.minimum(self.mindist, row)
        self.F_value += gain
        self.selected.append(int(e))


def _gains(mindist, rows):
    # The one reduction used by every variant, so lazy and naive agree to the bit.
    return np.maximum(mindist[None, :] - rows, 0.0).sum(axis=1)


def marginal_gain(state: FacilityState, block: DissimilarityBlock, e: int) -> float:
    """``F(e | S) = sum_i max(0, mindist_i - d_ie)``; does not modify ``state``."""
    return float(_gains(state.mindist, block.rows([e]))[0])


def facility_value(block: DissimilarityBlock, local) -> float:
    """``F(S)`` evaluated from scratch."""
    M = block.max_dist()
    local = list(local)
    if not local:
        return 0.0
    mind = np.minimum(block.rows(local).min(axis=0), M)
    return float(np.sum(M - mind))


def residual_of(block: DissimilarityBlock, local) -> float:
    """``L(S)`` evaluated from scratch."""
    return float(block.rows(list(local)).min(axis=0).sum())


@dataclass(frozen=True)
class StopRule:
    """Stop at ``size`` elements, or once ``L(S) <= budget``."""

    mode: str
    value: float

    def __post_init__(self):
        if self.mode == "size":
            if int(self.value) != self.value or self.value < 1:
                raise ValueError("target size must be a positive integer")
        elif self.mode == "budget":
            if not self.value >= 0:
                raise ValueError("error budget must be >= 0")
        else:
            raise ValueError(f"unknown stop mode {self.mode!r}")

    @classmethod
    def size(cls, r):
        return cls("size", int(r))

    @classmethod
    def budget(cls, eps):
        return cls("budget", float(eps))


@dataclass
class Coreset:
    """Weighted, ordered subset.

    ``order`` lists global indices in the order IG should visit them and
    ``weights[k]`` is the per-element stepsize of ``order[k]``.
    ``assignment[t]`` is the element that point ``universe[t]`` is closest to.
    """

    order: np.ndarray
    weights: np.ndarray
    classes: np.ndarray
    ranks: np.ndarray
    residual: float = float("nan")
    universe: np.ndarray | None = None
    assignment: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.order = np.asarray(self.order, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.int64)
        self.classes = np.asarray(self.classes, dtype=np.int64)
        self.ranks = np.asarray(self.ranks, dtype=np.int64)
        k = len(self.order)
        if not (len(self.weights) == len(self.classes) == len(self.ranks) == k):
            raise ValueError("order, weights, classes and ranks must have equal length")
        if np.any(self.weights < 1):
            raise ValueError("weights must be positive integers")

    def __len__(self):
        return len(self.order)

    @property
    def size(self) -> int:
        return len(self.order)

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    def assignment_map(self) -> dict:
        return dict(zip(self.universe.tolist(), self.assignment.tolist()))


def _assign(block, local_sel):
    """Nearest selected element for every point of the block.

    Selected elements are assigned to themselves; other ties go to the
    lowest local index.
    """
    sel = np.sort(np.asarray(local_sel, dtype=np.int64))
    D = block.rows(sel)
    pick = np.argmin(D, axis=0)
    owner = sel[pick]
    owner[sel] = sel
    mins = D[np.searchsorted(sel, owner), np.arange(block.m)]
    return owner, mins


def greedy_select(block: DissimilarityBlock, stop: StopRule, variant="lazy", seed=0,
                  delta=DELTA, expected_size=None) -> Coreset:
    """Greedy facility-location cover for one class.

    ``naive`` rescans every candidate each step, ``lazy`` keeps stale upper
    bounds in a heap and returns exactly the naive answer, and
    ``stochastic`` scores ``ceil((m/r) ln(1/delta))`` random candidates per
    step. In budget mode the stochastic sample size uses ``expected_size``
    (default ``ceil(m/10)``) for ``r``. Ties go to the lowest index.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    m = block.m
    if m < 1:
        raise ValueError("empty block")
    if stop.mode == "size" and stop.value > m:
        raise ValueError(f"target size {stop.value} exceeds class size {m}")
    target = int(stop.value) if stop.mode == "size" else m
    state = FacilityState.empty(block)
    trace = []

    def done():
        if len(state.selected) >= target:
            return True
        return stop.mode == "budget" and bool(state.selected) and state.residual <= stop.value

    if variant == "naive":
        remaining = np.ones(m, dtype=bool)
        while not done():
            best_e, best_g = -1, -1.0
            cand = np.flatnonzero(remaining)
            for lo in range(0, len(cand), CHUNK):
                c = cand[lo:lo + CHUNK]
                g = _gains(state.mindist, block.rows(c))
                k = int(np.argmax(g))
                if g[k] > best_g:
                    best_e, best_g = int(c[k]), float(g[k])
            state.add(best_e, block.rows([best_e])[0], best_g)
            remaining[best_e] = False
            trace.append(state.F_value)
    elif variant == "lazy":
        heap = []
        for lo in range(0, m, CHUNK):
            c = np.arange(lo, min(lo + CHUNK, m))
            for e, g in zip(c.tolist(), _gains(state.mindist, block.rows(c)).tolist()):
                heap.append((-g, e, 0))
        heapq.heapify(heap)
        step = 0
        while not done():
            while True:
                neg, e, stamp = heapq.heappop(heap)
                if stamp == step:
                    break
                g = float(_gains(state.mindist, block.rows([e]))[0])
                heapq.heappush(heap, (-g, e, step))
            state.add(e, block.rows([e])[0], -neg)
            step += 1
            trace.append(state.F_value)
    else:
        rng = np.random.default_rng(seed)
        remaining = np.ones(m, dtype=bool)
        r = target if stop.mode == "size" else (expected_size or math.ceil(m / 10))
        sample = max(1, math.ceil(m / max(r, 1) * math.log(1.0 / delta)))
        while not done():
            cand = np.flatnonzero(remaining)
            if sample < len(cand):
                cand = np.sort(rng.choice(cand, size=sample, replace=False))
            g = _gains(state.mindist, block.rows(cand))
            k = int(np.argmax(g))
            e = int(cand[k])
            state.add(e, block.rows([e])[0], float(g[k]))
            remaining[e] = False
            trace.append(state.F_value)

    local = np.array(state.selected, dtype=np.int64)
    owner, mins = _assign(block, local)
    rank_of = {int(e): t for t, e in enumerate(local)}
    weights = np.bincount(owner, minlength=m)[local]
    return Coreset(
        order=block.indices[local],
        weights=weights,
        classes=np.full(len(local), block.class_id),
        ranks=np.arange(len(local)),
        residual=float(mins.sum()),
        universe=block.indices.copy(),
        assignment=block.indices[owner],
        meta={
            "variant": variant,
            "seed": seed,
            "stop": stop.mode,
            "stop_value": stop.value,
            "aux_M": state.aux_M,
            "F_trace": trace,
            "F_value": state.F_value,
            "local_order": local.tolist(),
            "rank_of": rank_of,
        },
    )


def merge_class_coresets(parts, n=None) -> Coreset:
    """Union of per-class coresets, interleaved round-robin by greedy rank
    (classes visited in ascending class id)."""
    parts = sorted(parts, key=lambda p: int(p.classes[0]) if len(p) else -1)
    seen = set()
    for p in parts:
        u = set(p.universe.tolist())
        if seen & u:
            raise ValueError("class coresets overlap")
        seen |= u
    order, weights, classes, ranks = [], [], [], []
    longest = max((len(p) for p in parts), default=0)
    for t in range(longest):
        for p in parts:
            if t < len(p):
                order.append(p.order[t])
                weights.append(p.weights[t])
                classes.append(p.classes[t])
                ranks.append(p.ranks[t])
    universe = np.concatenate([p.universe for p in parts])
    assignment = np.concatenate([p.assignment for p in parts])
    sort = np.argsort(universe, kind="stable")
    universe, assignment = universe[sort], assignment[sort]
    total = int(np.sum(weights))
    if n is not None and total != n:
        raise ValueError(f"merged weights sum to {total}, expected {n}")
    meta = {
        "variant": parts[0].meta.get("variant") if parts else None,
        "seed": parts[0].meta.get("seed") if parts else None,
        "per_class_residual": {int(p.classes[0]): p.residual for p in parts if len(p)},
    }
    return Coreset(
        order=np.array(order, dtype=np.int64),
        weights=np.array(weights, dtype=np.int64),
        classes=np.array(classes, dtype=np.int64),
        ranks=np.array(ranks, dtype=np.int64),
        residual=float(sum(p.residual for p in parts)),
        universe=universe,
        assignment=assignment,
        meta=meta,
    )


def _round_half_up(x):
    return np.floor(np.asarray(x) + 0.5).astype(np.int64)


def allocate_sizes(partition: ClassPartition, fraction) -> np.ndarray:
    """Per-class target sizes keeping the class ratios.

    Each class gets ``floor(fraction * n_c)`` (at least one, at most
    ``n_c``), then the largest remainders are topped up until the total is
    ``round(fraction * n)``.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    sizes = partition.sizes
    K, n = len(sizes), int(sizes.sum())
    total = int(_round_half_up(fraction * n))
    if total < K:
        raise ValueError(f"fraction {fraction} selects {total} points for {K} classes")
    quota = fraction * sizes
    r = np.clip(np.floor(quota).astype(np.int64), 1, sizes)
    rem = quota - np.floor(quota)
    # most deserving first; stable so ties go to the lower class position
    up = np.argsort(-rem, kind="stable")
    down = np.argsort(rem, kind="stable")
    # one unit per class per pass, most deserving first
    while r.sum() < total:
        moved = False
        for c in up:
            if r.sum() == total:
                break
            if r[c] < sizes[c]:
                r[c] += 1
                moved = True
        if not moved:
            break
    while r.sum() > total:
        moved = False
        for c in down:
            if r.sum() == total:
                break
            if r[c] > 1:
                r[c] -= 1
                moved = True
        if not moved:
            break
    return r


def select_per_class(blocks, sizes=None, epsilon=None, variant="lazy", seed=0, n=None):
    """Run :func:`greedy_select` on every block and merge.

    Give either ``sizes`` (one target per block) or a total error budget
    ``epsilon``, which is split across classes in proportion to class size.
    """
    if (sizes is None) == (epsilon is None):
        raise ValueError("give exactly one of sizes or epsilon")
    parts = []
    total_m = sum(b.m for b in blocks)
    budgets = {}
    for t, block in enumerate(blocks):
        if sizes is not None:
            stop = StopRule.size(int(sizes[t]))
        else:
            eps_c = float(epsilon) * block.m / total_m
            budgets[block.class_id] = eps_c
            stop = StopRule.budget(eps_c)
        parts.append(greedy_select(block, stop, variant=variant, seed=seed + t))
    cs = merge_class_coresets(parts, n=n)
    cs.meta.update(variant=variant, seed=seed)
    cs.meta["F_trace"] = {int(p.classes[0]): p.meta["F_trace"] for p in parts}
    if epsilon is not None:
        cs.meta["epsilon"] = float(epsilon)
        cs.meta["epsilon_per_class"] = budgets
    return cs


def _min_cover_size(block, eps, limit):
    m = block.m
    D = block.rows(np.arange(m))
    for k in range(1, min(limit, m) + 1):
        best, best_set = None, None
        for S in itertools.combinations(range(m), k):
            L = float(D[list(S)].min(axis=0).sum())
            if L <= eps and (best is None or L < best):
                best, best_set = L, S
        if best_set is not None:
            return k, best_set
    return None, None


def cover_certificate(cs: Coreset, blocks, epsilon=None, exhaustive_limit=15) -> dict:
    """Summarize how well the selection covers each class.

    For classes with at most ``exhaustive_limit`` points the smallest cover
    ``S*`` with ``L(S*) <= eps_c`` is found by enumeration, giving the size
    ratio ``|S|/|S*|`` next to the ``1 + ln max_e F(e|{})`` guarantee and the
    per-step check ``F(S_i) >= (1 - exp(-i/|S*|)) F(S*)``.
    """
    per_eps = cs.meta.get("epsilon_per_class", {})
    if epsilon is None:
        epsilon = cs.meta.get("epsilon")
    classes = []
    total_res = 0.0
    for block in blocks:
        mask = cs.classes == block.class_id
        members = cs.order[mask][np.argsort(cs.ranks[mask], kind="stable")]
        pos = {int(g): t for t, g in enumerate(block.indices.tolist())}
        local = [pos[int(g)] for g in members]
        res = residual_of(block, local) if local else float("inf")
        total_res += res
        eps_c = per_eps.get(block.class_id, per_eps.get(str(block.class_id)))
        if eps_c is None and epsilon is not None:
            eps_c = float(epsilon) * block.m / sum(b.m for b in blocks)
        entry = {
            "class_id": int(block.class_id),
            "m": block.m,
            "size": len(local),
            "residual": res,
            "epsilon": eps_c,
            "within_budget": None if eps_c is None else bool(res <= eps_c + 1e-12),
        }
        if eps_c is not None and block.m <= exhaustive_limit:
            empty = FacilityState.empty(block)
            f_max = max(marginal_gain(empty, block, e) for e in range(block.m))
            k_opt, s_opt = _min_cover_size(block, eps_c, block.m)
            F_opt = facility_value(block, s_opt)
            trace = [facility_value(block, local[: i + 1]) for i in range(len(local))]
            steps = [
                {"i": i + 1, "F": f, "bound": (1 - math.exp(-(i + 1) / k_opt)) * F_opt}
                for i, f in enumerate(trace)
            ]
            log_bound = 1.0 + math.log(f_max) if f_max > 0 else float("nan")
            entry.update(
                optimal_size=k_opt,
                ratio=len(local) / k_opt,
                log_bound=log_bound,
                ratio_within_log_bound=bool(len(local) / k_opt <= log_bound) if f_max > 0 else None,
                steps=steps,
                steps_ok=all(s["F"] >= s["bound"] - 1e-9 for s in steps),
            )
        classes.append(entry)
    return {
        "residual": total_res,
        "epsilon": epsilon,
        "within_budget": None if epsilon is None else bool(total_res <= float(epsilon) + 1e-12),
        "size": cs.size,
        "classes": classes,
    }


class CoresetFormatError(ValueError):
    """Raised when a coreset file does not follow the text schema."""


_MAGIC = "# craig-coreset v1"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def save_coreset(cs: Coreset, path, **extra):
    """Text format: a magic line, one ``# {json}`` metadata line, the column
    header, then ``index weight class greedy_rank`` per element."""
    meta = {
        "residual": cs.residual,
        "epsilon": cs.meta.get("epsilon"),
        "variant": cs.meta.get("variant"),
        "seed": cs.meta.get("seed"),
        "size": cs.size,
        "n": cs.total_weight,
    }
    meta.update(extra)
    lines = [_MAGIC, "# " + json.dumps(_jsonable(meta), sort_keys=True), "index weight class greedy_rank"]
    for e, w, c, k in zip(cs.order, cs.weights, cs.classes, cs.ranks):
        lines.append(f"{e} {w} {c} {k}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_coreset(path, n=None) -> Coreset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    lines = path.read_text().splitlines()
    if len(lines) < 3 or lines[0].strip() != _MAGIC:
        raise CoresetFormatError(f"{path}: missing coreset header")
    try:
        meta = json.loads(lines[1][1:].strip())
    except (json.JSONDecodeError, IndexError):
        raise CoresetFormatError(f"{path}: bad metadata line") from None
    if lines[2].split() != ["index", "weight", "class", "greedy_rank"]:
        raise CoresetFormatError(f"{path}: bad column header")
    rows = []
    for lineno, line in enumerate(lines[3:], start=4):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise CoresetFormatError(f"{path}:{lineno}: expected 4 columns")
        try:
            rows.append([int(p) for p in parts])
        except ValueError:
            raise CoresetFormatError(f"{path}:{lineno}: non-integer field") from None
    if not rows:
        raise CoresetFormatError(f"{path}: no elements")
    arr = np.array(rows, dtype=np.int64)
    if np.any(arr[:, 0] < 0) or np.any(arr[:, 1] < 1):
        raise CoresetFormatError(f"{path}: negative index or nonpositive weight")
    if len(np.unique(arr[:, 0])) != len(arr):
        raise CoresetFormatError(f"{path}: duplicate element")
    expect = n if n is not None else meta.get("n")
    if expect is not None and int(arr[:, 1].sum()) != int(expect):
        raise CoresetFormatError(f"{path}: weights sum to {arr[:, 1].sum()}, expected {expect}")
    if n is not None and arr[:, 0].max() >= n:
        raise CoresetFormatError(f"{path}: index out of range for n={n}")
    residual = meta.get("residual")
    try:
        residual = float(residual)
    except (TypeError, ValueError):
        residual = float("nan")
    return Coreset(
        order=arr[:, 0], weights=arr[:, 1], classes=arr[:, 2], ranks=arr[:, 3],
        residual=residual, meta=meta,
    )
