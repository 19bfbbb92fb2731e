"""Fast self-check of the toolkit's core invariants (the ``verify`` subcommand)."""

from __future__ import annotations

import math
import time

import numpy as np

from . import codec, evaluation, features, learncore as lc, preprocess, simulator


def _ok(cond):
    # explicit check so the suite still runs under python -O
    if not cond:
        raise AssertionError("invariant violated")


def _codec():
    _ok(codec.angle_count(4, 2) == 10)
    config, cb = codec.StreamConfig(), codec.Codebook()
    _ok(codec.payload_length(config, cb) == 234 * (5 * 9 + 5 * 7) // 8)
    rng = np.random.default_rng(0)
    for _ in range(20):
        idx = rng.integers(0, 1 << cb.bits(config), size=(config.n_sub, config.n_angles))
        rep = codec.AngleReport(config, cb, idx)
        back = codec.parse_payload(codec.serialize_payload(rep), config, cb)
        _ok(np.array_equal(back.angles, idx))
        v = codec.decompress(rep)
        _ok(np.array_equal(codec.compress(v, cb, as_indices=True), idx))


def _decompression():
    rng = np.random.default_rng(1)
    config = codec.StreamConfig()
    for bits in codec.CODEBOOKS:
        cb = codec.Codebook(*bits)
        idx = rng.integers(0, 1 << cb.bits(config), size=(50, config.n_sub, config.n_angles))
        v = codec.decompress(idx, config, cb)
        gram = np.einsum("...ki,...kj->...ij", v.conj(), v)
        _ok(np.abs(gram - np.eye(2)).max() <= 1e-6)
        last = v[..., -1, :]
        _ok(np.abs(last.imag).max() <= 1e-12 and last.real.min() >= -1e-12)


def _features():
    _ok(features.N_FEATURES == 134)
    counts = [w for _, w, _ in features.FEATURE_CLASSES]
    _ok(counts == [8, 6, 10, 8, 8, 3, 3, 16, 8, 8, 6, 8, 6, 10, 8, 6, 12])
    tr = simulator.render_trace(simulator.Scene(), simulator.TypingPlan("254519"))
    fs = features.extract_trace(tr, preprocess.select_reference(tr, "random", 0))
    _ok(fs.frames.shape == (tr.n_samples, 134) and np.all(np.isfinite(fs.frames)))
    q = np.linalg.qr(np.random.default_rng(2).normal(size=(3, 4, 2)))[0]
    d = features.grassmann_distance(q[:, None], q[None, :])
    _ok(np.allclose(d, d.T) and np.abs(np.diag(d)).max() < 1e-6)
    _ok(np.all(d[0, 2] <= d[0, 1] + d[1, 2] + 1e-9))


def _learncore():
    rng = np.random.default_rng(3)
    x = lc.Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    w = lc.Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    labels = np.array([0, 1, 2, 0])
    _ok(lc.check_gradients(lambda: lc.cross_entropy(x @ w, labels), [x, w]) < 1e-4)
    _ok(lc.grl_schedule(0.0) == 0.0)
    s = math.log(2.5)
    loss = lc.Tensor(np.array(2.5))
    lv = lc.Tensor(np.array([s]), requires_grad=True)
    lc.uncertainty_loss([loss], lv).backward()
    _ok(abs(lv.grad[0]) < 1e-12)


def _top100():
    rng = np.random.default_rng(4)
    for _ in range(50):
        p = rng.dirichlet(np.ones(10) * rng.choice([0.1, 1.0]), size=6)
        pin = "".join(map(str, rng.integers(0, 10, 6)))
        _ok(evaluation.top100(p, pin) == evaluation.top100(p, pin, method="beam"))
    t0 = time.perf_counter()
    evaluation.pin_scores(p)
    _ok(time.perf_counter() - t0 < 1.0)


def _splits():
    seen = {"RP": 720, "RW": 675, "RA": 600, "AP": 512}
    for sid, n in seen.items():
        spec = evaluation.split_instances(sid)[0]
        s = evaluation.make_splits(spec)
        _ok(len(s.train_domains) == n)
        parts = [s.train_domains] + list(s.tests().values())
        _ok(sum(map(len, parts)) == 960 == len({k for p in parts for k in p}))


def _determinism():
    a = simulator.render_trace(simulator.Scene(snr_db=20), simulator.TypingPlan("123456", rng_seed=3))
    b = simulator.render_trace(simulator.Scene(snr_db=20), simulator.TypingPlan("123456", rng_seed=3))
    _ok(a.angles.tobytes() == b.angles.tobytes())


CHECKS = {
    "codec": _codec,
    "decompression": _decompression,
    "features": _features,
    "learncore": _learncore,
    "top100": _top100,
    "splits": _splits,
    "determinism": _determinism,
}


def run_checks(names=None) -> dict:
    """Run the named checks (all by default); returns ``{name: None or error message}``."""
    out = {}
    for name in names or CHECKS:
        try:
            CHECKS[name]()
            out[name] = None
        except Exception as exc:  # report every failure, keep going
            out[name] = f"{type(exc).__name__}: {exc}" if str(exc) else type(exc).__name__
    return out
