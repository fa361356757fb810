import json

import numpy as np
import pytest

from sheaflab import io as sio
from sheaflab.cli import main
from sheaflab.poset import build_poset
from sheaflab.sheaf import Sheaf, lying_sheaf

from conftest import path_graph


def _run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


@pytest.fixture
def triangle_file(tmp_path, hollow_triangle):
    path = tmp_path / "triangle.json"
    sio.save_complex(hollow_triangle, path)
    return path


def test_cohomology_hollow_triangle(tmp_path, triangle_file, capsys):
    code, out = _run(["cohomology", "--input", str(triangle_file), "--out", str(tmp_path / "o"), "--format", "json"], capsys)
    assert code == 0
    rows = json.loads(out.out)["betti"]
    assert rows[0]["roos"] == rows[0]["cellular"] == 1
    assert rows[1]["roos"] == rows[1]["cellular"] == 1
    assert (tmp_path / "o" / "cohomology.csv").read_text().startswith("grading,roos,cellular")


def test_validate_reports_violation(tmp_path, capsys):
    P = build_poset(["b", "p", "q", "t"], [("b", "p"), ("b", "q"), ("p", "t"), ("q", "t")])
    res = {c: np.ones((1, 1)) for c in P.covers}
    res[("q", "t")] = -np.ones((1, 1))
    sio.save_sheaf(Sheaf(P, {s: 1 for s in P.elements}, res), tmp_path / "bad.json")
    code, _ = _run(["validate", "--sheaf", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")], capsys)
    assert code == 1
    assert sio.load_results(tmp_path / "o" / "validate.json")["ok"] is False


def test_diffuse_energy_monotone(tmp_path, triangle_file, capsys):
    code, out = _run(["diffuse", "--input", str(triangle_file), "--grading", "1", "--seed", "3",
                      "--out", str(tmp_path), "--format", "json"], capsys)
    assert code == 0
    energies = [r["energy"] for r in json.loads(out.out)["trace"]]
    assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))


def test_diffuse_from_cochain_file(tmp_path, triangle_file, capsys):
    sio.save_cochain(np.array([1.0, -1.0, 1.0]), tmp_path / "x.json", 1)
    code, out = _run(["diffuse", "--input", str(triangle_file), "--grading", "1", "--x0", str(tmp_path / "x.json"),
                      "--out", str(tmp_path), "--format", "json"], capsys)
    assert code == 0
    limit = json.loads(out.out)["limit"]
    np.testing.assert_allclose(limit, [1.0, -1.0, 1.0], atol=1e-12)  # already harmonic


def test_hodge_command(tmp_path, triangle_file, capsys):
    code, out = _run(["hodge", "--input", str(triangle_file), "--grading", "1", "--seed", "0",
                      "--out", str(tmp_path), "--format", "json"], capsys)
    doc = json.loads(out.out)
    assert code == 0 and doc["betti"] == 1 and doc["reconstruction_error"] < 1e-12


def test_separate_lying_1d(tmp_path, capsys):
    code, out = _run(["separate", "--family", "lying-1d", "--seed", "0", "--trials", "3",
                      "--out", str(tmp_path), "--format", "json"], capsys)
    assert code == 0 and json.loads(out.out)["rate"] == 1.0


def test_lying_sheaf_file_sections(tmp_path, capsys):
    G = path_graph(5)
    sio.save_sheaf(lying_sheaf(G, ["0", "1"]), tmp_path / "lying.json")
    code, out = _run(["cohomology", "--sheaf", str(tmp_path / "lying.json"), "--out", str(tmp_path), "--format", "json"], capsys)
    assert code == 0 and json.loads(out.out)["global_sections"] == 1


def test_energy_bound_command(tmp_path, capsys):
    code, out = _run(["energy-bound", "--seed", "1", "--trials", "5", "--out", str(tmp_path), "--format", "csv"], capsys)
    assert code == 0 and out.out.splitlines()[0] == "trial,lhs,rhs,lambda_star,holds"


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["cohomology", "--out", str(tmp_path)])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["no-such-command"])
    assert e.value.code == 2


def test_bad_input_file(tmp_path, capsys):
    (tmp_path / "x.json").write_text("[]")
    code, out = _run(["cohomology", "--input", str(tmp_path / "x.json"), "--out", str(tmp_path)], capsys)
    assert code == 1 and "ParseError" in out.err


def test_outputs_byte_identical(tmp_path, triangle_file, capsys):
    for name in ("a", "b"):
        assert main(["diffuse", "--input", str(triangle_file), "--grading", "1", "--seed", "5",
                     "--out", str(tmp_path / name), "--format", "csv"]) == 0
        assert main(["separate", "--family", "lying-ld", "--classes", "3", "--seed", "2", "--trials", "2",
                     "--out", str(tmp_path / name)]) == 0
    for f in ("diffuse.json", "diffuse.csv", "separate.json", "separate.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_trajectory_pipeline(tmp_path, capsys):
    d = tmp_path / "traj"
    assert main(["gen-traj", "--seed", "0", "--count", "20", "--out", str(d)]) == 0
    data = sio.load_dataset(d / "trajectories.jsonl")
    assert len(data) == 40 and data.params["grid_size"] == 12
    assert main(["train-traj", "--input", str(d / "trajectories.jsonl"), "--method", "learned-NSD", "--seed", "0",
                 "--hidden", "4", "--layers", "1", "--epochs", "1", "--out", str(d)]) == 0
    params, meta = sio.load_checkpoint(d / "model.bin")
    assert meta["method"] == "learned-NSD" and "learner.r1.W1" in params
    assert (d / "restrictions.csv").read_text().startswith("edge,triangle,region,magnitude")
    assert main(["eval-traj", "--input", str(d / "trajectories.jsonl"), "--methods", "ker-handcrafted", "ker-up",
                 "--seed", "0", "--seeds", "2", "--out", str(d)]) == 0
    res = sio.load_results(d / "eval-traj.json")
    assert set(res["median"]) == {"ker-handcrafted", "ker-up"} and len(res["runs"]) == 4
