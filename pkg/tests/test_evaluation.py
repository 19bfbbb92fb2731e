import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfipin import evaluation as E
from bfipin import simulator as sim
from bfipin.trace import DomainKey

SEEN = {"RP": 720, "RW": 675, "RA": 600, "AP": 512}


# --------------------------------------------------------------------------
# splits


@pytest.mark.parametrize("split_id", sorted(SEEN))
def test_seen_domain_counts(split_id):
    for spec in E.split_instances(split_id)[:7]:
        assert len(E.make_splits(spec).train_domains) == SEEN[split_id]


def test_full_grid_size():
    assert E.Grid().size == 960 == len(set(E.Grid().keys()))


@pytest.mark.parametrize("split_id", sorted(SEEN))
def test_partition_every_instance(split_id):
    grid = E.Grid()
    keys = set(grid.keys())
    for spec in E.split_instances(split_id, grid):
        s = E.make_splits(spec, grid)
        parts = [s.train_domains] + list(s.tests().values())
        flat = [k for p in parts for k in p]
        assert len(flat) == len(set(flat)) == len(keys)
        assert set(flat) == keys
        assert not set(s.train_domains) & {k for p in s.tests().values() for k in p}


def test_first_order_structure():
    s = E.make_splits(E.SplitSpec.make("RP", 3, 1))
    assert all(k.room == 3 and k.position != 1 for k in s.first_order_tests["room"])
    assert all(k.position == 1 and k.room != 3 for k in s.first_order_tests["position"])
    assert len(s.first_order_tests["room"]) == 4 * 4 * 3
    assert len(s.first_order_tests["position"]) == 15 * 4 * 3
    assert all(k.room == 3 and k.position == 1 for k in s.second_order_test)
    assert len(s.second_order_test) == 12


def test_instance_counts():
    assert len(E.split_instances("RP")) == 16 * 5
    assert len(E.split_instances("AP")) == 3 * 5


@pytest.mark.parametrize("bad", [E.SplitSpec("RP", (("room", 16), ("position", 0))),
                                 E.SplitSpec("RW", (("room", 0), ("channel", 45))),
                                 E.SplitSpec("RP", (("position", 0), ("room", 0))),
                                 E.SplitSpec("XX", (("room", 0), ("position", 0)))])
def test_invalid_instance(bad):
    with pytest.raises(E.EvalError) as e:
        E.make_splits(bad)
    assert e.value.kind == "invalid-instance"


def test_grid_slice():
    g = E.Grid(room=(0, 1, 2, 3), position=(0, 1, 2), channel=(44,), reflector=(0,))
    s = E.make_splits(E.SplitSpec.make("RP", 0, 0), g)
    assert len(s.train_domains) == 6
    with pytest.raises(E.EvalError):
        E.make_splits(E.SplitSpec.make("RW", 0, 44), g)


def test_validation_split_stratified():
    y = np.repeat(np.arange(10), 20)
    tr, va = E.validation_split(y, 0.2, seed=3)
    assert len(va) == 40 and len(np.intersect1d(tr, va)) == 0
    assert np.all(np.bincount(y[va], minlength=10) == 4)
    tr2, va2 = E.validation_split(y, 0.2, seed=3)
    np.testing.assert_array_equal(va, va2)
    _, va1 = E.validation_split([0, 1, 1], 0.5)
    assert va1.tolist() in ([1], [2])  # singleton class 0 stays in training


# --------------------------------------------------------------------------
# Top-100


def test_one_hot_rank_one():
    p = np.eye(10)[[2, 5, 4, 5, 1, 9]]
    assert E.top100(p, "254519") == E.RankResult(True, 1)
    assert E.top100(p, "254519", method="beam") == E.RankResult(True, 1)


def test_uniform_total_tie():
    p = np.full((6, 10), 0.1)
    for pin in ("000000", "254519", "999999"):
        assert E.top100(p, pin) == E.RankResult(True, 1)
        assert E.top100(p, pin, method="beam") == E.RankResult(True, 1)
    assert E.top100(p, "254519", ties="pessimistic").rank == 10 ** 6


def test_half_mass_example():
    true = [1, 2, 3, 6, 9, 8]
    p = np.full((6, 10), 0.5 / 9)
    p[np.arange(6), true] = 0.5
    assert E.top100(p, "123698").rank == 1
    rng = np.random.default_rng(0)
    for _ in range(10):
        off = list(true)
        i = rng.integers(6)
        off[i] = (off[i] + rng.integers(1, 10)) % 10
        pin = "".join(map(str, off))
        assert E.top100(p, pin).rank == 2
        assert E.top100(p, pin, method="beam").rank == 2


def test_brute_force_reference_scores():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(10), size=6)
    s = E.pin_scores(p)
    for pin in rng.integers(0, 10 ** 6, 20):
        d = [int(c) for c in f"{pin:06d}"]
        assert s[pin] == pytest.approx(np.log(p[np.arange(6), d]).sum(), abs=1e-12)


def test_beam_matches_brute_random_grids():
    rng = np.random.default_rng(7)
    for i in range(200):
        p = rng.dirichlet(np.full(10, [0.05, 0.3, 1.0, 10.0][i % 4]), size=6)
        if i % 3 == 0:
            pin = "".join(str(np.argsort(-r)[rng.integers(0, 3)]) for r in p)
        else:
            pin = "".join(map(str, rng.integers(0, 10, 6)))
        assert E.top100(p, pin, method="beam") == E.top100(p, pin)


def test_beam_top_list_matches_brute():
    rng = np.random.default_rng(2)
    p = rng.dirichlet(np.ones(10), size=6)
    pins, scores = E.beam_top(p, 100)
    s = E.pin_scores(p)
    ref = np.lexsort((np.arange(10 ** 6), -s))[:100]
    np.testing.assert_array_equal(pins[:100], ref)


def test_count_ahead_matches_brute():
    rng = np.random.default_rng(4)
    p = rng.dirichlet(np.ones(10), size=6)
    s = E.pin_scores(p)
    for pin in rng.integers(0, 10 ** 6, 10):
        assert E.count_ahead(p, s[pin]) == int(np.count_nonzero(s > s[pin] + E.TIE_TOL))


def test_zero_probabilities():
    p = np.eye(10)[[0, 0, 0, 0, 0, 1]]
    assert E.top100(p, "000001").rank == 1
    # every zero-probability PIN ties at -inf, so only the single finite PIN ranks ahead
    r = E.top100(p, "000002")
    assert r == E.top100(p, "000002", method="beam") == E.RankResult(True, 2)
    assert E.top100(p, "000002", ties="pessimistic").rank == 10 ** 6


@pytest.mark.parametrize("grid", [np.full((6, 10), 0.2), np.full((5, 10), 0.1), -np.eye(10)[:6],
                                  np.full((6, 10), np.nan)])
def test_invalid_distribution(grid):
    with pytest.raises(E.EvalError) as e:
        E.top100(grid, "000000")
    assert e.value.kind == "invalid-distribution"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.2, 5.0))
def test_monotone_transform_invariance(seed, gamma):
    # p -> p^gamma / Z scales every log score by gamma and shifts it by a constant
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(10), size=6)
    q = p ** gamma
    q /= q.sum(axis=1, keepdims=True)
    pin = "".join(str(np.argsort(-r)[rng.integers(0, 4)]) for r in p)
    assert E.top100(p, pin).hit == E.top100(q, pin).hit


# --------------------------------------------------------------------------
# evaluation drivers


@pytest.fixture(scope="module")
def tiny():
    return sim.simulate_grid(rooms=(0, 1), positions=(0, 1), seed=0,
                             pins=("012345", "678951", "234567"))


def test_windtalker_in_domain_perfect(tiny):
    r = E.evaluate("windtalker", tiny, None, E.Ablation(context=0))
    s = r.summary()["in-domain"]
    assert s["acc_mean"] == 1.0 and s["top100_mean"] == 1.0
    assert s["top100_std"] == 0.0 and s["n_instances"] == 1


def test_confusion_rows_are_class_counts(tiny):
    r = E.evaluate("windtalker", tiny, "RP", max_instances=2)
    for name in r.test_names():
        for inst in r.per_instance:
            m = inst[name]
            # each test trace contributes one row entry per keystroke
            assert m.confusion.sum() == 6 * m.n_pins
        assert 0 <= r.summary()[name]["top100_mean"] <= 1
    conf = r.confusion("first:room")
    pins = [t for t in tiny if t.domain.room == 0 and t.domain.position == 1] + \
           [t for t in tiny if t.domain.room == 1 and t.domain.position == 1]
    assert conf.sum() == 6 * len(pins)


def test_report_outputs(tiny, tmp_path):
    r = E.evaluate("windtalker", tiny, "RP", max_instances=1)
    paths = r.write(tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert set(data["summary"]) == {"first:room", "first:position", "second"}
    assert (tmp_path / "confusion_first_room.csv").read_text().startswith("true\\pred,0,1")
    assert len(paths) == 5
    assert "first:room" in r.table()


def test_insufficient_coverage(tiny):
    with pytest.raises(E.EvalError) as e:
        E.evaluate("windtalker", tiny, "RP", grid=E.Grid(room=(0, 1, 2), position=(0, 1),
                                                         channel=(44,), reflector=(0,)))
    assert e.value.kind == "insufficient-coverage"


def test_wink_in_domain_runs(tiny):
    r = E.evaluate("wink", tiny[:2], None)
    m = r.per_instance[0]["in-domain"]
    assert m.n_pins == 2 and all(1 <= k <= 10 ** 6 for k in m.ranks)


def test_workers_do_not_change_report(tiny):
    a = E.evaluate("windtalker", tiny, "RP", max_instances=2)
    b = E.evaluate("windtalker", tiny, "RP", max_instances=2, workers=2)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())


def test_leaky_reference_skips_traces_without_five(tiny):
    r = E.evaluate("windtalker", tiny, None, E.Ablation(reference="leaky_digit5", view="features"))
    assert r.skipped == sum(5 not in t.digits for t in tiny)


def test_ablation_validation():
    with pytest.raises(ValueError):
        E.Ablation(context=41)
    with pytest.raises(ValueError):
        E.Ablation(timing=-1)
    with pytest.raises(ValueError):
        E.Ablation(reference="oracle")
    assert E.Ablation().resolved_view("model") == "features"
    assert E.Ablation().resolved_view("windtalker") == "raw"


def test_validation_split_never_empty_when_possible():
    tr, va = E.validation_split([0, 1, 1, 2, 3], 0.2, 0)
    assert len(va) == 1 and 1 in np.asarray([0, 1, 1, 2, 3])[va]
    assert len(E.validation_split([0, 1, 2], 0.2, 0)[1]) == 0
