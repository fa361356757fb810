import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sheaflab import io as sio
from sheaflab.errors import ParseError, SchemaVersionMismatch, ValidationError
from sheaflab.generators import random_instance
from sheaflab.sheaf import constant_sheaf
from sheaflab.trajectory import gen_punctured_grid, gen_trajectories


def _same_sheaf(F, G):
    assert F.base.elements == G.base.elements and F.base.covers == G.base.covers
    assert F.base.signs == G.base.signs
    assert F.stalk_dim == G.stalk_dim
    for c in F.base.covers:
        assert np.array_equal(F.restriction[c], G.restriction[c])
    assert set(F.inner) == set(G.inner)
    for s in F.inner:
        assert np.array_equal(F.inner[s], G.inner[s])


@given(st.integers(0, 2**31 - 1))
def test_sheaf_round_trip(tmp_path_factory, seed):
    _, P, F = random_instance(np.random.default_rng(seed), max_elements=40)
    path = tmp_path_factory.mktemp("rt") / "sheaf.json"
    sio.save_sheaf(F, path)
    G = sio.load_sheaf(path)
    _same_sheaf(F, G)
    first = path.read_bytes()
    sio.save_sheaf(G, path)
    assert path.read_bytes() == first


def test_complex_round_trip(tmp_path, hollow_triangle):
    sio.save_complex(hollow_triangle, tmp_path / "c.json")
    P = sio.load_complex(tmp_path / "c.json")
    assert P.elements == hollow_triangle.poset.elements and P.signs == hollow_triangle.poset.signs
    X = sio.as_simplicial(P)
    assert X.simplices == hollow_triangle.simplices


def test_cochain_round_trip(tmp_path, rng):
    x = rng.standard_normal(7)
    sio.save_cochain(x, tmp_path / "x.json", 1, labels=[str(i) for i in range(7)])
    y, k = sio.load_cochain(tmp_path / "x.json")
    assert k == 1 and np.array_equal(x, y)


def test_results_round_trip(tmp_path):
    doc = {"a": np.float64(0.1), "b": np.arange(3), "c": (True, np.bool_(False))}
    sio.save_results(doc, tmp_path / "r.json")
    assert sio.load_results(tmp_path / "r.json") == {"a": 0.1, "b": [0, 1, 2], "c": [True, False]}


def test_schema_mismatch(tmp_path, edge):
    sio.save_sheaf(constant_sheaf(edge), tmp_path / "s.json")
    doc = json.loads((tmp_path / "s.json").read_text())
    doc["schema"] = "sheaflab-v0"
    (tmp_path / "s.json").write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionMismatch):
        sio.load_sheaf(tmp_path / "s.json")


def test_parse_errors(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ParseError):
        sio.load_complex(tmp_path / "bad.json")
    with pytest.raises(ParseError):
        sio.load_complex(tmp_path / "missing.json")
    (tmp_path / "nofield.json").write_text(json.dumps({"schema": sio.SCHEMA_VERSION}))
    with pytest.raises(ParseError):
        sio.load_complex(tmp_path / "nofield.json")


def test_bad_restriction_shape_names_covering(tmp_path, edge):
    doc = sio.sheaf_to_dict(constant_sheaf(edge, 2))
    doc["restrictions"][0]["matrix"] = [[1.0, 0.0]]
    with pytest.raises(ValidationError, match="u->u,v"):
        sio.sheaf_from_dict(doc)


def test_stated_rank_checked():
    doc = {"elements": [{"id": "a", "rank": 0}, {"id": "b", "rank": 5}],
           "coverings": [{"from": "a", "to": "b"}]}
    with pytest.raises(ValidationError, match="'b'"):
        sio.complex_from_dict(doc)


def test_cyclic_complex_rejected():
    doc = {"elements": [{"id": "a"}, {"id": "b"}],
           "coverings": [{"from": "a", "to": "b"}, {"from": "b", "to": "a"}]}
    with pytest.raises(ValidationError):
        sio.complex_from_dict(doc)


def test_dataset_round_trip(tmp_path):
    grid = gen_punctured_grid()
    data = gen_trajectories(grid, 250, 10, 0.8, seed=2)
    sio.save_dataset(data, tmp_path / "d.jsonl")
    back = sio.load_dataset(tmp_path / "d.jsonl")
    assert len(back) == 500 and back.params == data.params
    assert back.trajectories == data.trajectories
    first = (tmp_path / "d.jsonl").read_bytes()
    sio.save_dataset(back, tmp_path / "d.jsonl")
    assert (tmp_path / "d.jsonl").read_bytes() == first


def test_dataset_bad_line(tmp_path):
    head = json.dumps({"schema": sio.SCHEMA_VERSION, "params": {}})
    (tmp_path / "d.jsonl").write_text(head + "\n{\"nodes\": [1]}\n")
    with pytest.raises(ParseError, match=":2:"):
        sio.load_dataset(tmp_path / "d.jsonl")


def test_checkpoint_round_trip(tmp_path, rng):
    params = {"layer0.W": rng.standard_normal((3, 2)), "b": rng.standard_normal(4), "s": np.array(2.5)}
    sio.save_checkpoint(params, tmp_path / "m.bin", {"seed": 3})
    back, meta = sio.load_checkpoint(tmp_path / "m.bin")
    assert meta == {"seed": 3}
    for k, v in params.items():
        assert np.array_equal(back[k], v)
    assert (tmp_path / "m.bin").stat().st_size == 8 * 11
    (tmp_path / "m.bin").write_bytes((tmp_path / "m.bin").read_bytes()[:-8])
    with pytest.raises(ValidationError):
        sio.load_checkpoint(tmp_path / "m.bin")
