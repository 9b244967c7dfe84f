import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings

from streamsplit.errors import InputError
from streamsplit.stream import (GENERATOR_KINDS, Dataset, GeneratorSpec, Mode, MultiDataset, Observation,
                                StreamHandle, toy_classification, toy_regression, generate,
                                open_stream, read_dataset, read_multi_dataset, with_deletions,
                                write_dataset)
from streamsplit.oracle import oracle_classification, oracle_regression, regression_loss_at

from conftest import regression_datasets

DATA = Path(__file__).parent / "data"


def test_two_record_csv():
    h = open_stream(DATA / "two.csv", "regression", N=10)
    assert h.passes_used == 0
    assert h.meta.m == 2 and h.meta.D == 2 and h.meta.N == 10


def test_toy_regression_meta():
    h = open_stream(DATA / "toy_regression.csv", "regression", N=10)
    assert (h.meta.m, h.meta.D, h.meta.N) == (14, 9, 10)


def test_out_of_domain_record_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n4,7\n11,3\n")
    with pytest.raises(InputError, match=r"line 3: x out of domain"):
        read_dataset(p, "regression", N=10)


@pytest.mark.parametrize("body,match", [
    ("x,y\n4,abc\n", "line 2"),
    ("x,y\n4\n", "line 2: expected 2 fields"),
    ("x,y\n1,-2\n", "label out of range"),
    ("a,b\n1,1\n", "expected header"),
])
def test_malformed_records(tmp_path, body, match):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(InputError, match=match):
        read_dataset(p, "regression", N=10, M=5)


def test_classification_labels_checked(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("x,y\n1,+1\n2,0\n")
    with pytest.raises(InputError, match="line 3"):
        read_dataset(p, "classification")


def test_jsonl_roundtrip(tmp_path):
    ds = toy_classification()
    p = tmp_path / "c.jsonl"
    write_dataset(ds, p)
    first = json.loads(p.read_text().splitlines()[0])
    assert set(first) == {"x", "y"}
    back = read_dataset(p, "classification", N=10)
    assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y)


def test_malformed_jsonl(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"x": 1, "y": 0.5}\n{"x": 2\n')
    with pytest.raises(InputError, match="line 2: malformed JSON"):
        read_dataset(p)


def test_replay_is_deterministic():
    h = StreamHandle(toy_regression(), chunk_size=3)
    a = list(h.elements())
    b = list(h.elements())
    assert a == b and h.passes_used == 2
    assert a[0] == Observation(1, 6.0)


def test_empty_pass_counts():
    h = StreamHandle(Dataset([], [], 10))
    assert list(h.next_pass()) == []
    assert h.passes_used == 1


def test_abandoned_pass_is_not_counted():
    h = StreamHandle(toy_regression(), chunk_size=2)
    it = h.next_pass()
    next(it)
    assert h.passes_used == 0


def test_peak_words_keeps_maximum():
    h = StreamHandle(toy_regression())
    h.account(10)
    h.account(4)
    assert h.peak_words == 10


def test_observation_validation():
    with pytest.raises(InputError):
        Observation(0, 1.0).validate(Mode.REGRESSION, 10, 5)
    with pytest.raises(InputError):
        Observation(1, 0).validate(Mode.CLASSIFICATION, 10)
    Observation(10, 5.0).validate(Mode.REGRESSION, 10, 5)


def test_mode_aliases():
    assert Mode.parse("cls") is Mode.CLASSIFICATION
    with pytest.raises(InputError):
        Mode.parse("nope")


def test_noiseless_step_has_zero_optimum():
    ds = generate(GeneratorSpec("piecewise-step", m=100, N=100, step=50, seed=1))
    assert oracle_regression(ds, all_splits=True).opt == 0.0
    assert regression_loss_at(ds, 50).loss == 0.0
    left, right = ds.y[ds.x <= 50], ds.y[ds.x > 50]
    assert len(set(left)) == 1 and len(set(right)) == 1 and left[0] != right[0]


def test_two_cluster_classification_is_separable():
    ds = generate(GeneratorSpec("two-cluster", m=500, N=100, seed=4, mode=Mode.CLASSIFICATION))
    assert oracle_classification(ds).opt == 0.0


@pytest.mark.parametrize("kind", GENERATOR_KINDS)
@pytest.mark.parametrize("mode", list(Mode))
def test_generation_is_reproducible(kind, mode):
    spec = GeneratorSpec(kind, m=1000, N=50, noise=0.3, seed=7, mode=mode)
    a, b = generate(spec), generate(spec)
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert a.mode is mode and len(a) == 1000


def test_generator_spec_rejects_bad_values():
    with pytest.raises(InputError):
        generate(GeneratorSpec("piecewise-step", m=10, N=10, noise=1.5))
    with pytest.raises(InputError):
        generate(GeneratorSpec("spiral", m=10, N=10))


def test_deletions_cancel():
    ds = toy_regression()
    turn = with_deletions(ds, 0.5, seed=3)
    assert turn.has_deletions and len(turn) > len(ds)
    net = turn.net()
    assert net.m == turn.m == len(ds) - (len(turn) - len(ds))
    kept = Counter(zip(ds.x.tolist(), ds.y.tolist()))
    kept.subtract(Counter(zip(turn.x[len(ds):].tolist(), turn.y[len(ds):].tolist())))
    assert Counter(zip(net.x.tolist(), net.y.tolist())) == +kept


def test_deleting_missing_record_is_an_error():
    ds = Dataset([1, 2], [0.5, 0.5], 5, w=[1, -1])
    with pytest.raises(InputError, match="never inserted"):
        ds.net()


def test_multi_attribute_file(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("x1,x2,y\n1,3,0.5\n2,1,0.25\n")
    md = read_multi_dataset(p, 2, "regression", N=3)
    assert md.d == 2 and md.m == 2
    assert md.attribute(1).x.tolist() == [3, 1]
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,x2,y\n1,3,0.5\n2,0.25\n")
    with pytest.raises(InputError, match="line 3"):
        read_multi_dataset(bad, 2)


def test_multi_dataset_shape_check():
    with pytest.raises(InputError):
        MultiDataset(np.ones((3, 2)), np.ones(2), 5)


@settings(max_examples=50, deadline=None)
@given(regression_datasets())
def test_csv_roundtrip_preserves_data(tmp_path_factory, ds):
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    write_dataset(ds, p)
    back = read_dataset(p, "regression", N=ds.N, M=ds.M)
    assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y)
