"""Leave-out splits, Top-100 PIN ranking and the evaluation / ablation drivers."""

from __future__ import annotations

import csv
import io
import itertools
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import features as F
from . import preprocess as pp
from .attacks import data as adata
from .attacks import model as M
from .attacks import windtalker as wt
from .attacks import wink
from .trace import CHANNELS, POSITIONS, REFLECTORS, ROOMS, DomainKey, PinTrace

FACTORS = ("room", "position", "channel", "reflector")
FULL_LEVELS = {"room": ROOMS, "position": POSITIONS, "channel": CHANNELS, "reflector": REFLECTORS}
SPLIT_FACTORS = {
    "RP": ("room", "position"),
    "RW": ("room", "channel"),
    "RA": ("room", "reflector"),
    "AP": ("reflector", "position"),
}
METHODS = ("windtalker", "wink", "model")
TOP_K = 100
TIE_TOL = 1e-9
N_PIN = 10 ** 6


class EvalError(ValueError):
    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


# --------------------------------------------------------------------------
# domain grids and splits


@dataclass(frozen=True)
class Grid:
    """Cartesian slice of the domain space (instances per factor)."""

    room: tuple = ROOMS
    position: tuple = POSITIONS
    channel: tuple = CHANNELS
    reflector: tuple = REFLECTORS

    def __post_init__(self):
        for f in FACTORS:
            vals = tuple(sorted(set(getattr(self, f))))
            bad = [v for v in vals if v not in FULL_LEVELS[f]]
            if bad or not vals:
                raise EvalError("invalid-instance", f"{f} instances {bad or '()'} not in {FULL_LEVELS[f]}")
            object.__setattr__(self, f, vals)

    @classmethod
    def from_domains(cls, domains) -> "Grid":
        ds = [DomainKey(*d) for d in domains]
        return cls(*(tuple({getattr(d, f) for d in ds}) for f in FACTORS))

    def levels(self, factor: str) -> tuple:
        return getattr(self, factor)

    def keys(self) -> list[DomainKey]:
        return [DomainKey(*k) for k in itertools.product(*(self.levels(f) for f in FACTORS))]

    @property
    def size(self) -> int:
        return int(np.prod([len(self.levels(f)) for f in FACTORS]))


@dataclass(frozen=True)
class SplitSpec:
    """A second-order leave-out: one held-out instance for each of two factors."""

    id: str
    held_out: tuple  # ((factor, instance), (factor, instance))

    @classmethod
    def make(cls, split_id: str, first, second) -> "SplitSpec":
        if split_id not in SPLIT_FACTORS:
            raise EvalError("invalid-instance", f"unknown split id {split_id!r}")
        fa, fb = SPLIT_FACTORS[split_id]
        return cls(split_id, ((fa, first), (fb, second)))

    def validate(self, grid: Grid = Grid()) -> "SplitSpec":
        if self.id not in SPLIT_FACTORS:
            raise EvalError("invalid-instance", f"unknown split id {self.id!r}")
        factors = tuple(f for f, _ in self.held_out)
        if factors != SPLIT_FACTORS[self.id]:
            raise EvalError("invalid-instance", f"{self.id} holds out {SPLIT_FACTORS[self.id]}, got {factors}")
        for f, v in self.held_out:
            if v not in grid.levels(f):
                raise EvalError("invalid-instance", f"{f}={v!r} is not in the grid {grid.levels(f)}")
            if len(grid.levels(f)) < 2:
                raise EvalError("invalid-instance", f"holding out {f} leaves no seen instance")
        return self

    def tag(self) -> str:
        return f"{self.id}[" + ",".join(f"{f}={v}" for f, v in self.held_out) + "]"


def split_instances(split_id: str, grid: Grid = Grid()) -> list[SplitSpec]:
    """Every leave-out combination of ``split_id`` on ``grid``."""
    if split_id not in SPLIT_FACTORS:
        raise EvalError("invalid-instance", f"unknown split id {split_id!r}")
    fa, fb = SPLIT_FACTORS[split_id]
    return [SplitSpec.make(split_id, a, b) for a in grid.levels(fa) for b in grid.levels(fb)]


@dataclass
class Splits:
    spec: SplitSpec
    train_domains: list
    first_order_tests: dict  # factor -> domains
    second_order_test: list
    val_fraction: float = 0.2

    def tests(self) -> dict:
        out = {f"first:{f}": d for f, d in self.first_order_tests.items()}
        out["second"] = self.second_order_test
        return out

    @property
    def val_rule(self) -> str:
        return f"{self.val_fraction:.0%} of seen-domain keystrokes per digit class"


def make_splits(spec: SplitSpec, grid: Grid = Grid()) -> Splits:
    """Partition ``grid`` into seen domains and the three held-out test sets.

    A domain is seen when neither held-out instance occurs in it. The
    first-order test of a factor pairs its held-out instance with seen
    instances of the other held-out factor; the second-order test has both.
    """
    spec.validate(grid)
    (fa, va), (fb, vb) = spec.held_out
    train, first, second = [], {fa: [], fb: []}, []
    for key in grid.keys():
        ha, hb = getattr(key, fa) == va, getattr(key, fb) == vb
        if ha and hb:
            second.append(key)
        elif ha:
            first[fa].append(key)
        elif hb:
            first[fb].append(key)
        else:
            train.append(key)
    return Splits(spec, train, first, second)


def validation_split(digits, fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stratified ``(train_idx, val_idx)``: ``round(fraction * n_c)`` of each class to validation.

    Classes with a single sample stay in training. If rounding leaves the
    validation set empty, one sample of the largest class is held out instead.
    """
    y = np.asarray(digits)
    rng = np.random.default_rng([seed, 0x5A1])
    val = []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        n = min(int(round(fraction * len(idx))), len(idx) - 1)
        val.extend(idx[:n].tolist())
    if not val and fraction > 0 and len(y):
        classes, counts = np.unique(y, return_counts=True)
        if counts.max() > 1:
            val.append(int(rng.choice(np.flatnonzero(y == classes[np.argmax(counts)]))))
    mask = np.zeros(len(y), dtype=bool)
    mask[val] = True
    return np.flatnonzero(~mask), np.flatnonzero(mask)


# --------------------------------------------------------------------------
# Top-100 ranking


@dataclass(frozen=True)
class RankResult:
    hit: bool
    rank: int


def log_grid(prob, atol: float = 1e-6) -> np.ndarray:
    """Validate a ``[6, 10]`` probability grid and return its logs."""
    p = np.asarray(prob, dtype=float)
    if p.shape != (6, 10) or not np.all(np.isfinite(p)) or np.any(p < 0):
        raise EvalError("invalid-distribution", f"expected a non-negative 6x10 grid, got shape {p.shape}")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > atol):
        raise EvalError("invalid-distribution", f"rows sum to {p.sum(axis=1)}")
    with np.errstate(divide="ignore"):
        return np.log(p)


def pin_scores(prob) -> np.ndarray:
    """``sum_i log p_i(d_i)`` for all 10^6 PINs, indexed by PIN value."""
    lp = log_grid(prob)
    s = lp[0]
    for row in lp[1:]:
        s = (s[:, None] + row[None, :]).ravel()
    return s


def _pin_digits(pin) -> list[int]:
    s = f"{int(pin):06d}" if not isinstance(pin, str) else pin
    if len(s) != 6 or not s.isdigit():
        raise ValueError(f"pin must be six digits, got {pin!r}")
    return [int(c) for c in s]


def _rank_from_count(better: int, k: int) -> RankResult:
    return RankResult(1 + better <= k, 1 + better)


def _count(scores: np.ndarray, t: float, ties: str, tol: float) -> int:
    """Candidates ranked ahead of a score ``t``."""
    if ties == "optimistic":
        return int(np.count_nonzero(scores > t + tol))
    if ties == "pessimistic":
        return int(np.count_nonzero(scores >= t - tol)) - 1
    raise ValueError("ties must be 'optimistic' or 'pessimistic'")


def top100_brute(prob, true_pin, k: int = TOP_K, ties: str = "optimistic",
                 tol: float = TIE_TOL) -> RankResult:
    """Reference ranking: score every candidate and count those ranked ahead."""
    s = pin_scores(prob)
    return _rank_from_count(_count(s, s[int("".join(map(str, _pin_digits(true_pin))))], ties, tol), k)


def _true_score(lp: np.ndarray, digits) -> float:
    t = lp[0, digits[0]]
    for i in range(1, 6):
        t = t + lp[i, digits[i]]
    return float(t)


def count_ahead(prob, score: float, ties: str = "optimistic", tol: float = TIE_TOL) -> int:
    """Meet-in-the-middle count of PINs ranked ahead of ``score`` (O(10^3 log 10^3)).

    Prefix and suffix sums are combined in a different order than
    :func:`pin_scores`, so agreement with it relies on ``tol`` absorbing the
    last-bit rounding.
    """
    lp = log_grid(prob)
    a = lp[0][:, None, None] + lp[1][None, :, None] + lp[2][None, None, :]
    b = lp[3][:, None, None] + lp[4][None, :, None] + lp[5][None, None, :]
    a, b = a.ravel(), np.sort(b.ravel())
    a = a[np.isfinite(a)]
    if ties == "optimistic":
        # a + b > score + tol  <=>  b > score + tol - a
        n = len(b) - np.searchsorted(b, score + tol - a, side="right")
        return int(n.sum())
    n = len(b) - np.searchsorted(b, score - tol - a, side="left")
    return int(n.sum()) - 1


def beam_top(prob, k: int = TOP_K, tol: float = TIE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Best ``k`` PINs by digit-wise beam search, keeping every tie of the k-th.

    Returns PIN values and their scores, best first (ties by PIN value).
    Because the score is a sum of independent per-position terms, every
    prefix of a top-k PIN is itself within the top-k prefixes, so the beam is exact.
    """
    lp = log_grid(prob)
    pins = np.arange(10, dtype=np.int64)
    scores = lp[0].copy()
    for i in range(1, 7):
        if len(scores) > k:
            kth = np.partition(scores, len(scores) - k)[len(scores) - k]
            keep = scores >= kth - tol
            pins, scores = pins[keep], scores[keep]
        if i == 6:
            break
        scores = (scores[:, None] + lp[i][None, :]).ravel()
        pins = (pins[:, None] * 10 + np.arange(10)[None, :]).ravel()
    order = np.lexsort((pins, -scores))
    return pins[order], scores[order]


def top100_beam(prob, true_pin, k: int = TOP_K, ties: str = "optimistic",
                tol: float = TIE_TOL) -> RankResult:
    """Beam ranking with exact rank; falls back to meet-in-the-middle counting outside the beam."""
    digits = _pin_digits(true_pin)
    lp = log_grid(prob)
    t = _true_score(lp, digits)
    pins, scores = beam_top(prob, k, tol)
    pin = int("".join(map(str, digits)))
    if ties == "optimistic" and np.any(pins == pin):
        # everything strictly better than a beam member is in the beam
        return _rank_from_count(_count(scores, t, ties, tol), k)
    return _rank_from_count(count_ahead(prob, t, ties, tol), k)


def top100(prob, true_pin, k: int = TOP_K, ties: str = "optimistic", method: str = "brute",
           tol: float = TIE_TOL) -> RankResult:
    """Rank of ``true_pin`` under the product of per-digit probabilities.

    ``rank = 1 + #candidates ranked ahead``. With ``ties="optimistic"`` only
    strictly better candidates (beyond ``tol``) count, so a total tie gives
    rank 1. ``hit`` is ``rank <= k``.
    """
    if method == "brute":
        return top100_brute(prob, true_pin, k, ties, tol)
    if method == "beam":
        return top100_beam(prob, true_pin, k, ties, tol)
    raise ValueError("method must be 'brute' or 'beam'")


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class Ablation:
    """One evaluation setting.

    ``timing`` is a keystroke jitter sigma in samples or ``"uniform"``
    (resample to equal gaps). ``view`` is ``"features"`` or ``"raw"``; None
    takes the method default (raw feedback for template matching and WINK,
    features for the model).
    """

    timing: float | str = 0.0
    context: int = 2
    reference: str = "random"
    normalizer: str = "divide"
    da_method: str = "none"
    domain_def: str = "physical"
    view: str | None = None

    def __post_init__(self):
        if self.timing != "uniform" and not (isinstance(self.timing, (int, float)) and self.timing >= 0):
            raise ValueError("timing must be a non-negative sigma or 'uniform'")
        if not 0 <= self.context <= pp.MAX_CONTEXT:
            raise ValueError(f"context must lie in [0, {pp.MAX_CONTEXT}]")
        if self.reference not in pp.REFERENCE_POLICIES:
            raise ValueError(f"reference must be one of {pp.REFERENCE_POLICIES}")
        if self.da_method not in M.DA_METHODS or self.domain_def not in M.DOMAIN_DEFS:
            raise ValueError("unknown da_method or domain_def")
        if self.view not in (None, "features", "raw"):
            raise ValueError("view must be 'features', 'raw' or None")

    def resolved_view(self, method: str) -> str:
        return self.view or ("features" if method == "model" else "raw")

    def to_dict(self) -> dict:
        return asdict(self)

    def label(self) -> str:
        return ",".join(f"{k}={v}" for k, v in self.to_dict().items())


SWEEPS = {
    "timing": ("timing", (0.0, 3.0, "uniform")),
    "context": ("context", (0, 10, 20, 40)),
    "da_method": ("da_method", M.DA_METHODS),
    "domain_def": ("domain_def", ("physical", "context", "both")),
    "reference": ("reference", pp.REFERENCE_POLICIES),
}


@dataclass
class TestMetrics:
    n_pins: int
    top100: float
    digit_accuracy: float
    confusion: np.ndarray  # [10, 10], rows true digit
    ranks: list

    def to_dict(self) -> dict:
        return {"n_pins": self.n_pins, "top100": self.top100, "digit_accuracy": self.digit_accuracy,
                "confusion": self.confusion.tolist(), "ranks": list(self.ranks)}


def _per_digit(confusion: np.ndarray) -> list:
    rows = confusion.sum(axis=1)
    return [float(confusion[d, d] / rows[d]) if rows[d] else None for d in range(10)]


@dataclass
class EvalReport:
    method: str
    split: str
    ablation: dict
    instances: list  # split tags, one per leave-out instance
    per_instance: list  # [{test name: TestMetrics}]
    skipped: int = 0
    meta: dict = field(default_factory=dict)

    def test_names(self) -> list:
        names = []
        for inst in self.per_instance:
            names += [n for n in inst if n not in names]
        return names

    def confusion(self, test: str) -> np.ndarray:
        mats = [inst[test].confusion for inst in self.per_instance if test in inst]
        return np.sum(mats, axis=0) if mats else np.zeros((10, 10), dtype=np.int64)

    def per_digit_accuracy(self, test: str) -> list:
        return _per_digit(self.confusion(test))

    def summary(self) -> dict:
        """Ensemble mean and population std over leave-out instances, per test."""
        out = {}
        for name in self.test_names():
            ms = [inst[name] for inst in self.per_instance if name in inst]
            top = np.array([m.top100 for m in ms])
            acc = np.array([m.digit_accuracy for m in ms])
            out[name] = {"top100_mean": float(top.mean()), "top100_std": float(top.std()),
                         "acc_mean": float(acc.mean()), "acc_std": float(acc.std()),
                         "n_instances": len(ms), "n_pins": int(sum(m.n_pins for m in ms))}
        return out

    def to_json(self) -> dict:
        return {"method": self.method, "split": self.split, "ablation": self.ablation,
                "instances": self.instances, "skipped": self.skipped, "meta": self.meta,
                "summary": self.summary(),
                "per_digit_accuracy": {n: self.per_digit_accuracy(n) for n in self.test_names()},
                "per_instance": [{n: m.to_dict() for n, m in inst.items()} for inst in self.per_instance]}

    def table(self) -> str:
        lines = [f"{self.method} {self.split}  ({self.ablation_label()})",
                 f"{'test':<16}{'top100':>16}{'digit acc':>16}{'n':>6}"]
        for name, s in self.summary().items():
            lines.append(f"{name:<16}{s['top100_mean']:>9.3f}±{s['top100_std']:<6.3f}"
                         f"{s['acc_mean']:>9.3f}±{s['acc_std']:<6.3f}{s['n_instances']:>6}")
        return "\n".join(lines)

    def ablation_label(self) -> str:
        return ",".join(f"{k}={v}" for k, v in self.ablation.items())

    def confusion_csv(self, test: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + list(range(10)))
        for d, row in enumerate(self.confusion(test)):
            w.writerow([d] + [int(v) for v in row])
        return buf.getvalue()

    def write(self, directory) -> list[Path]:
        """Write ``report.json``, ``report.txt`` and one confusion CSV per test."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = [d / "report.json", d / "report.txt"]
        paths[0].write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")
        paths[1].write_text(self.table() + "\n")
        for name in self.test_names():
            p = d / f"confusion_{name.replace(':', '_')}.csv"
            p.write_text(self.confusion_csv(name))
            paths.append(p)
        return paths


def _trace_seed(trace: PinTrace, seed: int) -> int:
    return (zlib.crc32(trace.trace_id.encode()) ^ (seed * 0x9E3779B1)) & 0x7FFFFFFF


def raw_frames(trace: PinTrace) -> np.ndarray:
    m = trace.matrices.reshape(trace.n_samples, -1)
    return np.concatenate([m.real, m.imag], axis=1)


def prepare(trace: PinTrace, ablation: Ablation, view: str, seed: int = 0):
    """Apply the timing setting and build the frames one method sees.

    Returns ``(trace, frames)`` or None when the reference policy cannot be
    satisfied on this trace.
    """
    s = _trace_seed(trace, seed)
    if ablation.timing == "uniform":
        trace = pp.resample_uniform(trace)
    elif ablation.timing > 0:
        trace = pp.perturb_timing(trace, float(ablation.timing), s)
    if view == "raw":
        return trace, raw_frames(trace)
    try:
        ref = pp.select_reference(trace, ablation.reference, s)
    except pp.PreprocessError:
        return None
    return trace, F.extract_trace(trace, ref, ablation.normalizer).frames


def _model_config(base: M.ModelConfig | None, ablation: Ablation, reference: DomainKey, seed: int):
    cfg = base or M.preset("easy")
    dd = "none" if ablation.da_method in ("none", "contrastive") else ablation.domain_def
    if ablation.da_method in ("dann", "mmd") and dd == "none":
        dd = "physical"
    return replace(cfg, da_method=ablation.da_method, domain_def=dd, reference_domain=reference,
                   seed=cfg.seed + seed)


def _metrics(prob_grids, pins, ranks=None) -> TestMetrics:
    conf = np.zeros((10, 10), dtype=np.int64)
    if ranks is None:
        ranks = [top100(g, p).rank for g, p in zip(prob_grids, pins)]
    for g, p in zip(prob_grids, pins):
        for d, row in zip(_pin_digits(p), g):
            conf[d, int(np.argmax(row))] += 1
    n = len(pins)
    hits = sum(r <= TOP_K for r in ranks)
    return TestMetrics(n, hits / n, float(np.trace(conf) / conf.sum()), conf, [int(r) for r in ranks])


def _wink_metrics(items) -> TestMetrics:
    grids, pins, ranks = [], [], []
    for tr, frames in items:
        res = wink.wink_rank(tr, frames)
        s_true = res.scores[int(tr.pin)]
        ranks.append(1 + int(np.count_nonzero(res.scores > s_true + TIE_TOL)))
        best = wink.candidate_digits()[res.order[0]]
        grids.append(np.eye(10)[best])
        pins.append(tr.pin)
    return _metrics(grids, pins, ranks)


def _run_instance(method: str, train_items, tests: dict, ablation: Ablation, config, seed: int) -> dict:
    """Fit on ``train_items`` and score every test set; returns {test: TestMetrics}."""
    W = ablation.context
    if method == "wink":
        return {name: _wink_metrics(items) for name, items in tests.items() if items}
    if not train_items:
        raise EvalError("insufficient-coverage", "no training traces after preprocessing")
    tr_traces, tr_frames = zip(*train_items)
    segs = adata.build_segments(tr_traces, tr_frames, W)
    if method == "windtalker":
        bank = wt.windtalker_fit(segs.x, segs.digits)

        def predict(x):
            return wt.windtalker_predict(bank, x)
    elif method == "model":
        tr_idx, va_idx = validation_split(segs.digits, 0.2, seed)
        cfg = _model_config(config, ablation, DomainKey(*tr_traces[0].domain), seed)
        clf, _ = M.model_train(segs.subset(tr_idx), segs.subset(va_idx), cfg)
        predict = clf.predict_proba
    else:
        raise ValueError(f"method must be one of {METHODS}")
    out = {}
    for name, items in tests.items():
        if not items:
            continue
        traces, frames = zip(*items)
        probs = predict(adata.build_segments(traces, frames, W).x).reshape(len(traces), 6, 10)
        out[name] = _metrics(probs, [t.pin for t in traces])
    return out


def _run_packed(args):
    return _run_instance(*args)


def evaluate(method: str, dataset, spec=None, ablation: Ablation = Ablation(), *,
             grid: Grid | None = None, max_instances: int | None = None,
             config: M.ModelConfig | None = None, seed: int = 0, workers: int = 1) -> EvalReport:
    """Train and test ``method`` over the leave-out instances of ``spec``.

    Parameters
    ----------
    method : {"windtalker", "wink", "model"}
    dataset : list of PinTrace
    spec : None, split id, SplitSpec or list of SplitSpec
        None evaluates in-domain (test set = training set). A split id runs
        every leave-out instance of the grid, capped at ``max_instances``.
    grid : Grid, optional
        Defaults to the grid spanned by the dataset's domains.
    workers : int
        Leave-out instances run in this many processes; results are reduced
        in instance order, so the report does not depend on it.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    traces = list(dataset)
    if not traces:
        raise EvalError("insufficient-coverage", "empty dataset")
    grid = grid or Grid.from_domains(t.domain for t in traces)
    present = {DomainKey(*t.domain) for t in traces}
    missing = [k for k in grid.keys() if k not in present]
    if missing:
        raise EvalError("insufficient-coverage", f"{len(missing)} grid domains have no traces, e.g. {missing[0]}")

    view = ablation.resolved_view(method)
    prepared = [prepare(t, ablation, view, seed) for t in traces]
    skipped = sum(p is None for p in prepared)
    prepared = [p for p in prepared if p is not None]
    by_domain: dict = {}
    for item in prepared:
        by_domain.setdefault(DomainKey(*item[0].domain), []).append(item)

    def collect(domains):
        return [it for d in domains for it in by_domain.get(d, [])]

    if spec is None:
        specs, jobs = ["in-domain"], [(method, prepared, {"in-domain": prepared}, ablation, config, seed)]
        split_name = "in-domain"
    else:
        if isinstance(spec, str):
            specs = split_instances(spec, grid)
        elif isinstance(spec, SplitSpec):
            specs = [spec]
        else:
            specs = list(spec)
        if max_instances is not None:
            specs = specs[:max_instances]
        split_name = specs[0].id
        jobs = []
        for i, sp in enumerate(specs):
            sp.validate(grid)
            splits = make_splits(sp, grid)
            tests = {name: collect(doms) for name, doms in splits.tests().items()}
            jobs.append((method, collect(splits.train_domains), tests, ablation, config, seed + i))
        specs = [sp.tag() for sp in specs]

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_packed, jobs))
    else:
        results = [_run_packed(j) for j in jobs]
    return EvalReport(method, split_name, ablation.to_dict(), specs, results, skipped,
                      {"n_traces": len(traces), "grid_size": grid.size, "seed": seed})


def run_ablation(kind: str, method: str, dataset, spec=None, base: Ablation = Ablation(),
                 values=None, **kwargs) -> dict:
    """Evaluate ``method`` once per value of one ablation axis.

    ``kind`` is a key of :data:`SWEEPS`; returns ``{value: EvalReport}`` in sweep order.
    """
    if kind not in SWEEPS:
        raise ValueError(f"kind must be one of {tuple(SWEEPS)}")
    attr, default = SWEEPS[kind]
    return {v: evaluate(method, dataset, spec, replace(base, **{attr: v}), **kwargs)
            for v in (default if values is None else values)}
