"""Command-line interface: ``bfipin <subcommand> [flags]``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 invariant-suite
failure. Errors are also written to stderr as one JSON object. Flags may be
preset in a flat ``key = value`` file passed with ``--config``; explicit flags
win. ``BFIPIN_OUT`` overrides the default output directory.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from . import evaluation as E
from . import features as F
from . import preprocess as pp
from . import simulator as sim
from . import store
from .attacks import data as adata
from .attacks import model as M
from .attacks import windtalker as wt
from .attacks import wink
from .codec import CodecError, read_jsonl
from .trace import CHANNELS, POSITIONS, REFLECTORS, ROOMS, DomainKey, PinTrace

OUT_ENV = "BFIPIN_OUT"
EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 2, 3, 4
DATA_ERRORS = (CodecError, store.StoreError, pp.PreprocessError, F.FeatureError, E.EvalError,
               wt.AttackError, FileNotFoundError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_out(name: str) -> str:
    return str(Path(os.environ.get(OUT_ENV, "bfipin-out")) / name)


def _ints(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


def _levels(text, full) -> list[int]:
    """``"3"`` means the first three instances; ``"0,2"`` lists them explicitly."""
    vals = _ints(text)
    if len(vals) == 1 and "," not in str(text):
        if not 1 <= vals[0] <= len(full):
            raise UsageError(f"count {vals[0]} outside 1..{len(full)}")
        return list(full[:vals[0]])
    bad = [v for v in vals if v not in full]
    if bad:
        raise UsageError(f"instances {bad} not in {full}")
    return vals


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; values are JSON when they parse as JSON."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key.replace("-", "_")] = json.loads(value)
        except json.JSONDecodeError:
            out[key.replace("-", "_")] = value
    return out


def _record(out_dir, args, outputs, **extra) -> dict:
    rec = {"command": args.command, "argv": args.argv_norm, "outputs": store.file_digests(outputs, out_dir)}
    if args.config_values:
        rec["config"] = args.config_values
    rec.update(extra)
    return store.append_experiment(out_dir, rec)


def _print(obj):
    print(json.dumps(obj, sort_keys=True))


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    rooms = _levels(args.rooms, ROOMS)
    positions = _levels(args.positions, POSITIONS)
    channels, reflectors = _ints(args.channels), _ints(args.reflectors)
    if not channels or any(c not in CHANNELS for c in channels):
        raise UsageError(f"channels must be drawn from {CHANNELS}")
    if not reflectors or any(r not in REFLECTORS for r in reflectors):
        raise UsageError(f"reflectors must be drawn from {REFLECTORS}")
    snr = math.inf if args.snr_db is None else args.snr_db
    traces = sim.simulate_grid(rooms, positions, channels, reflectors, args.pins, args.seed, snr, args.hand_speed)
    generator = {"rooms": rooms, "positions": positions, "channels": channels, "reflectors": reflectors,
                 "pins_per_domain": args.pins, "seed": args.seed, "snr_db": args.snr_db,
                 "hand_speed": args.hand_speed}
    out = Path(args.out)
    if (out / store.MANIFEST).exists():
        raise store.StoreError("exists", f"{out} already holds a dataset")
    feats = None
    if args.features:
        feats = {t.trace_id: _features_for(t, args.reference, args.normalizer, args.seed) for t in traces}
    man = store.Dataset(out).write(traces, generator)
    if args.features:
        man = store.Dataset(out).add_features(feats, _feature_settings(args))
    _record(out, args, [out / store.MANIFEST], seeds=[args.seed], digest=man["digest"])
    _print({"dataset": str(out), "traces": len(traces), "digest": man["digest"]})
    return 0


def _feature_settings(args) -> dict:
    return {"reference": args.reference, "normalizer": args.normalizer, "seed": args.seed,
            "contract": F.CONTRACT_HASH}


def _features_for(trace: PinTrace, reference: str, normalizer: str, seed: int) -> np.ndarray:
    ref = pp.select_reference(trace, reference, E._trace_seed(trace, seed))
    return F.extract_trace(trace, ref, normalizer).frames


def cmd_ingest(args) -> int:
    with open(args.input) as fh:
        reports = list(read_jsonl(fh))
    if not reports:
        raise store.StoreError("empty-input", f"{args.input} has no reports")
    keys, digits = _ints(args.keystrokes), [int(c) for c in args.pin]
    if len(keys) != 6 or len(digits) != 6:
        raise UsageError("need six keystrokes and a six-digit pin")
    domain = DomainKey(*_ints(args.domain)).validate()
    rate = args.rate
    if rate is None:
        ts = np.array([r.timestamp for r in reports])
        dt = np.median(np.diff(ts)) if len(ts) > 1 else 0
        rate = float(1 / dt) if dt > 0 else 18.0
    try:
        trace = PinTrace.from_reports(reports, keys, digits, domain=domain, rate=rate,
                                      trace_id=args.trace_id or f"{domain.tag()}-{args.pin}-ingest")
    except ValueError as exc:
        if isinstance(exc, CodecError):
            raise
        raise store.StoreError("invalid-trace", str(exc)) from exc
    man = store.Dataset(args.out).write([trace])
    _record(args.out, args, [Path(args.out) / store.MANIFEST], digest=man["digest"])
    _print({"dataset": args.out, "trace_id": trace.trace_id, "samples": trace.n_samples})
    return 0


def cmd_features(args) -> int:
    ds = store.Dataset(args.data)
    frames = {}
    for tid in ds.trace_ids():
        frames[tid] = _features_for(ds.load(tid), args.reference, args.normalizer, args.seed)
    man = ds.add_features(frames, _feature_settings(args))
    _record(args.data, args, [ds.manifest_path], digest=man["digest"])
    _print({"dataset": args.data, "traces": len(frames), "columns": F.N_FEATURES})
    return 0


def _load(args):
    ds = store.Dataset(args.data)
    return ds, ds.load_all()


def _ablation(args) -> E.Ablation:
    timing = args.timing if args.timing == "uniform" else float(args.timing)
    return E.Ablation(timing=timing, context=args.context, reference=args.reference,
                      normalizer=args.normalizer, da_method=args.da_method, domain_def=args.domain_def,
                      view=args.view)


def _model_config(args) -> M.ModelConfig:
    over = {k: getattr(args, k) for k in ("epochs", "batch", "patience") if getattr(args, k) is not None}
    return M.preset(args.preset, seed=args.seed, **over)


def _held_out(args, grid):
    if args.split in (None, "in-domain"):
        return None
    if args.held_out:
        vals = _ints(args.held_out)
        if len(vals) != 2:
            raise UsageError("--held-out takes two instances, e.g. 0,1")
        return [E.SplitSpec.make(args.split, *vals)]
    return args.split


def cmd_train(args) -> int:
    ds, traces = _load(args)
    grid = E.Grid.from_domains(t.domain for t in traces)
    ab = _ablation(args)
    spec = _held_out(args, grid)
    if isinstance(spec, str):
        spec = E.split_instances(spec, grid)[:1]
    if spec is not None:
        seen = set(E.make_splits(spec[0], grid).train_domains)
        traces = [t for t in traces if DomainKey(*t.domain) in seen]
    items = [p for p in (E.prepare(t, ab, ab.resolved_view("model"), args.seed) for t in traces) if p]
    if not items:
        raise E.EvalError("insufficient-coverage", "no training traces")
    tr, fr = zip(*items)
    segs = adata.build_segments(tr, fr, ab.context)
    ti, vi = E.validation_split(segs.digits, 0.2, args.seed)
    cfg = E._model_config(_model_config(args), ab, DomainKey(*tr[0].domain), 0)
    clf, log = M.model_train(segs.subset(ti), segs.subset(vi), cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clf.save(out / "model.ckpt")
    (out / "train_log.json").write_text(json.dumps(log, indent=1, sort_keys=True) + "\n")
    outputs = [out / "model.ckpt", out / "train_log.json"]
    _record(out, args, outputs, seeds=[args.seed], ablation=ab.to_dict(),
            split=None if spec is None else spec[0].tag(), dataset=ds.manifest()["digest"])
    best = max(e["val_acc"] for e in log)
    _print({"model": str(out / "model.ckpt"), "epochs": len(log), "best_val_acc": best})
    return 0


def cmd_attack(args) -> int:
    ds, traces = _load(args)
    if args.trace_ids:
        keep = set(args.trace_ids.split(","))
        traces = [t for t in traces if t.trace_id in keep]
    ab = _ablation(args)
    view = ab.resolved_view(args.method)
    items = [p for p in (E.prepare(t, ab, view, args.seed) for t in traces) if p]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    if args.method == "wink":
        for tr, fr in items:
            res = wink.wink_rank(tr, fr)
            s = res.scores[int(tr.pin)]
            rows.append({"trace_id": tr.trace_id, "top": res.top(10),
                         "rank": 1 + int(np.count_nonzero(res.scores > s + E.TIE_TOL))})
    else:
        if args.method == "model":
            if not args.model:
                raise UsageError("attack --method model needs --model")
            clf = M.DigitClassifier.load(args.model)
            predict = clf.predict_proba
            context = (clf.window[0] - 1) // 2
        else:
            if not args.train_data:
                raise UsageError("attack --method windtalker needs --train-data")
            train = [p for p in (E.prepare(t, ab, view, args.seed) for t in store.Dataset(args.train_data).load_all())
                     if p]
            tsegs = adata.build_segments(*zip(*train), ab.context)
            bank = wt.windtalker_fit(tsegs.x, tsegs.digits)

            def predict(x):
                return wt.windtalker_predict(bank, x)
            context = ab.context
        for tr, fr in items:
            probs = predict(adata.build_segments([tr], [fr], context).x)
            r = E.top100(probs, tr.pin)
            rows.append({"trace_id": tr.trace_id, "probs": np.round(probs, 12).tolist(),
                         "rank": r.rank, "hit": r.hit})
    path = out / "predictions.jsonl"
    path.write_text("".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in rows))
    _record(out, args, [path], seeds=[args.seed], method=args.method, ablation=ab.to_dict())
    hits = [r["rank"] <= E.TOP_K for r in rows]
    _print({"predictions": str(path), "traces": len(rows), "top100": float(np.mean(hits)) if hits else None})
    return 0


def cmd_evaluate(args) -> int:
    ds, traces = _load(args)
    grid = E.Grid.from_domains(t.domain for t in traces)
    spec = _held_out(args, grid)
    base = _ablation(args)
    kw = dict(max_instances=args.max_instances, config=_model_config(args), seed=args.seed,
              workers=args.workers)
    if args.ablation:
        reports = E.run_ablation(args.ablation, args.method, traces, spec, base, **kw)
    else:
        reports = {"base": E.evaluate(args.method, traces, spec, base, **kw)}
    out = Path(args.out)
    outputs, summary = [], {}
    for value, rep in reports.items():
        sub = out / (f"{args.ablation}={value}" if args.ablation else "base")
        outputs += rep.write(sub)
        summary[str(value)] = rep.summary()
        print(rep.table())
    _record(out, args, outputs, seeds=[args.seed], method=args.method, ablation=base.to_dict(),
            sweep=args.ablation, dataset=ds.manifest()["digest"])
    return 0


def cmd_splits(args) -> int:
    grid = E.Grid()
    ids = [args.id] if args.id else list(E.SPLIT_FACTORS)
    print(f"{'ID':<4}{'held out':<22}{'seen domains':>14}")
    for sid in ids:
        if sid not in E.SPLIT_FACTORS:
            raise UsageError(f"unknown split id {sid!r}")
        s = E.make_splits(E.split_instances(sid, grid)[0], grid)
        held = ", ".join(E.SPLIT_FACTORS[sid])
        print(f"{sid:<4}{held:<22}{len(s.train_domains):>14}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_checks
    results = run_checks(args.check or None)
    for name, err in results.items():
        _print({"check": name, "ok": err is None, **({"error": err} if err else {})})
    failed = [n for n, e in results.items() if e]
    if args.data:
        problems = store.Dataset(args.data).verify()
        _print({"check": "dataset", "ok": not problems, "problems": problems})
        failed += ["dataset"] if problems else []
    if failed:
        raise InvariantFailure(failed)
    return 0


class InvariantFailure(Exception):
    pass


# --------------------------------------------------------------------------
# parser


def _attack_flags(p):
    p.add_argument("--timing", default="0", help="keystroke jitter sigma in samples, or 'uniform'")
    p.add_argument("--context", type=int, default=2)
    p.add_argument("--reference", default="random", choices=pp.REFERENCE_POLICIES)
    p.add_argument("--normalizer", default="divide", choices=pp.NORMALIZERS)
    p.add_argument("--da-method", default="none", choices=M.DA_METHODS)
    p.add_argument("--domain-def", default="physical", choices=M.DOMAIN_DEFS)
    p.add_argument("--view", choices=("features", "raw"))
    p.add_argument("--seed", type=int, default=0)


def _model_flags(p):
    p.add_argument("--preset", default="easy", choices=sorted(M.PRESETS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--patience", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bfipin", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--config", help="flat key = value file with flag defaults")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="render a domain grid of labeled traces")
    p.add_argument("--rooms", default="1", help="count or comma list")
    p.add_argument("--positions", default="1")
    p.add_argument("--channels", default="44", help="comma list of channel ids")
    p.add_argument("--reflectors", default="0", help="comma list of angles")
    p.add_argument("--pins", type=int, default=10, help="PINs per domain")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--hand-speed", type=float)
    p.add_argument("--features", action="store_true", help="also write the feature layer")
    p.add_argument("--reference", default="random", choices=pp.REFERENCE_POLICIES)
    p.add_argument("--normalizer", default="divide", choices=pp.NORMALIZERS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate, out_name="dataset")

    p = sub.add_parser("ingest", help="add a captured JSONL report stream to a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--pin", required=True)
    p.add_argument("--keystrokes", required=True, help="six comma-separated sample indices")
    p.add_argument("--domain", default="0,0,44,0", help="room,position,channel,reflector")
    p.add_argument("--rate", type=float)
    p.add_argument("--trace-id")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest, out_name="dataset")

    p = sub.add_parser("features", help="materialize the feature layer of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--reference", default="random", choices=pp.REFERENCE_POLICIES)
    p.add_argument("--normalizer", default="divide", choices=pp.NORMALIZERS)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the digit classifier on seen domains")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=tuple(E.SPLIT_FACTORS) + ("in-domain",))
    p.add_argument("--held-out", help="the two held-out instances, e.g. 0,1")
    _attack_flags(p)
    _model_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train, out_name="model")

    p = sub.add_parser("attack", help="predict PINs for the traces of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=E.METHODS)
    p.add_argument("--model", help="checkpoint for --method model")
    p.add_argument("--train-data", help="template dataset for --method windtalker")
    p.add_argument("--trace-ids")
    _attack_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack, out_name="attack")

    p = sub.add_parser("evaluate", help="leave-out evaluation and ablation sweeps")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, choices=E.METHODS)
    p.add_argument("--split", default="in-domain", choices=tuple(E.SPLIT_FACTORS) + ("in-domain",))
    p.add_argument("--held-out")
    p.add_argument("--max-instances", type=int)
    p.add_argument("--ablation", choices=tuple(E.SWEEPS))
    p.add_argument("--workers", type=int, default=1)
    _attack_flags(p)
    _model_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate, out_name="evaluate")

    p = sub.add_parser("splits", help="print the leave-out split table")
    p.add_argument("--id", choices=tuple(E.SPLIT_FACTORS))
    p.set_defaults(func=cmd_splits)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--check", action="append", choices=None, help="run only this check (repeatable)")
    p.add_argument("--data", help="also re-hash a dataset directory")
    p.set_defaults(func=cmd_verify)
    return ap


def parse(argv) -> argparse.Namespace:
    ap = build_parser()
    args = ap.parse_args(argv)
    cfg = {}
    if args.config:
        try:
            cfg = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        sub = ap._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys {unknown}")
        sub.set_defaults(**cfg)
        args = ap.parse_args(argv)
    if hasattr(args, "out") and args.out is None and hasattr(args, "out_name"):
        args.out = _default_out(args.out_name)
    args.argv_norm = _normalized_argv(argv)
    args.config_values = cfg
    return args


def _normalized_argv(argv) -> list:
    # drop --out and --config so a record replays into any directory
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--out", "--config"):
            skip = True
            continue
        if a.startswith(("--out=", "--config=")):
            continue
        out.append(a)
    return out


def replay(record: dict, out_dir) -> bool:
    """Re-run a recorded command into ``out_dir``; True when every output digest matches."""
    argv = list(record["argv"])
    if record.get("config"):
        cfg = Path(tempfile.mkdtemp()) / "replay.cfg"
        cfg.write_text("".join(f"{k} = {json.dumps(v)}\n" for k, v in record["config"].items()))
        argv = ["--config", str(cfg)] + argv
    if record["command"] in ("simulate", "ingest", "train", "attack", "evaluate"):
        argv += ["--out", str(out_dir)]
    code = main(argv)
    if code != 0:
        return False
    again = store.read_experiments(out_dir)[-1]
    return again["outputs"] == record["outputs"]


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit": code}) + "\n")
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except InvariantFailure as exc:
        return _fail(EXIT_INVARIANT, "invariant-failure", ", ".join(exc.args[0]))
    except DATA_ERRORS as exc:
        return _fail(EXIT_DATA, getattr(exc, "kind", type(exc).__name__), str(exc))


if __name__ == "__main__":
    sys.exit(main())
