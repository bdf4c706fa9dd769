import json
import subprocess
import sys

import numpy as np
import pytest

from gtrans import io
from gtrans.cli import main
from gtrans.datasets import load_dataset
from gtrans.errors import EmptyInputError, InputError
from gtrans.graphons import build_prob_matrix, sample_adjacency, sample_latents


def write_graph(path, gid, n, seed):
    r = np.random.default_rng(seed)
    A = sample_adjacency(build_prob_matrix(gid, sample_latents(n, r)), r)
    io.write_edge_list(path, A)
    return A


class TestEdgeList:
    def test_path_graph(self):
        A, info = io.parse_edge_list("0 1\n1 2\n")
        np.testing.assert_array_equal(A, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        assert info == {"nodes": 3, "edges": 2, "self_loops": 0, "duplicates": 0}

    def test_self_loop_dropped(self):
        A, info = io.parse_edge_list("0 0\n0 1\n")
        assert info["self_loops"] == 1 and info["edges"] == 1
        assert not np.diag(A).any()

    def test_duplicates_and_comments(self):
        A, info = io.parse_edge_list("# header\n0 1\n1 0  # reversed\n\n0 1\n")
        assert info["edges"] == 1 and info["duplicates"] == 2

    def test_karate(self):
        A, info = load_dataset("karate")
        assert (info["nodes"], info["edges"]) == (34, 78)
        assert A.sum() == 156

    @pytest.mark.parametrize("text", ["", "# only comments\n\n"])
    def test_empty(self, text):
        with pytest.raises(EmptyInputError):
            io.parse_edge_list(text)

    @pytest.mark.parametrize("text", ["0 1 2\n", "0\n", "a b\n", "0 -1\n"])
    def test_malformed(self, text):
        with pytest.raises(InputError):
            io.parse_edge_list(text)

    def test_out_of_range_with_node_count(self):
        with pytest.raises(InputError):
            io.parse_edge_list("0 5\n", nodes=4)
        A, _ = io.parse_edge_list("0 1\n", nodes=4)
        assert A.shape == (4, 4)

    def test_round_trip(self, tmp_path):
        A = write_graph(tmp_path / "g.txt", 6, 30, 0)
        B, _ = io.load_edge_list(tmp_path / "g.txt", nodes=30)
        np.testing.assert_array_equal(A, B)

    def test_missing_dataset(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GTRANS_DATA_DIR", str(tmp_path))
        with pytest.raises(InputError):
            load_dataset("no-such-graph")


class TestSerialization:
    def test_matrix_round_trip_is_exact(self, tmp_path, rng):
        M = rng.random((4, 5)) / 3
        io.write_matrix_csv(tmp_path / "m.csv", M)
        np.testing.assert_array_equal(io.read_matrix_csv(tmp_path / "m.csv"), M)

    def test_json_floats(self):
        text = io.dumps({"x": 0.1, "y": np.float64(1) / 3, "z": float("nan"), "k": 2, "b": True})
        data = json.loads(text)
        assert data["y"] == 1 / 3 and data["z"] is None and data["k"] == 2 and data["b"] is True
        assert "0.33333333333333331" in text

    def test_config_schema(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"schema": 1, "reps": 3}))
        assert io.load_config(p, {"reps"}) == {"reps": 3}
        p.write_text(json.dumps({"schema": 2, "reps": 3}))
        with pytest.raises(InputError):
            io.load_config(p, {"reps"})
        p.write_text(json.dumps({"schema": 1, "repz": 3}))
        with pytest.raises(InputError):
            io.load_config(p, {"reps"})


@pytest.fixture(scope="module")
def graph_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("graphs")
    write_graph(d / "source.txt", 6, 120, 1)
    write_graph(d / "target.txt", 6, 30, 2)
    return d


def read_json(path):
    return json.loads(path.read_text())


class TestCli:
    def test_estimate(self, tmp_path):
        assert main(["estimate", "--dataset", "karate", "--out-dir", str(tmp_path)]) == 0
        P = io.read_matrix_csv(tmp_path / "estimate.csv")
        assert P.shape == (34, 34)
        assert read_json(tmp_path / "result.json")["n"] == 34
        assert (tmp_path / "metadata.json").exists()

    def test_transfer_is_reproducible(self, tmp_path, graph_files):
        args = ["transfer", "--source-edges", str(graph_files / "source.txt"),
                "--target-edges", str(graph_files / "target.txt"), "--seed", "1"]
        assert main(args + ["--out-dir", str(tmp_path / "a"), "--write-stages"]) == 0
        assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "result.json").read_bytes()
        assert a == (tmp_path / "b" / "result.json").read_bytes()
        res = read_json(tmp_path / "a" / "result.json")
        assert res["debiased"] == (res["d"] > res["delta"])
        assert (tmp_path / "a" / "p_trans2.csv").exists()
        assert read_json(tmp_path / "a" / "coupling.json")["converged"] in (True, False)

    def test_usage_error(self, tmp_path, capsys):
        assert main(["frobnicate"]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["exit_code"] == 2

    def test_input_error_writes_error_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("0 1 2\n")
        out = tmp_path / "out"
        assert main(["estimate", "--edges", str(bad), "--out-dir", str(out)]) == 3
        assert read_json(out / "error.json")["exit_code"] == 3
        assert json.loads(capsys.readouterr().err)["exit_code"] == 3

    def test_bad_log_level(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GTRANS_LOG", "loud")
        assert main(["graphon-table", "--grid", "5", "--out-dir", str(tmp_path)]) == 2

    def test_graphon_table(self, tmp_path):
        assert main(["graphon-table", "--grid", "11", "--out-dir", str(tmp_path)]) == 0
        assert len(read_json(tmp_path / "result.json")["graphons"]) == 10
        assert io.read_matrix_csv(tmp_path / "graphon_6.csv")[-1, -1] == 0.5

    def test_simulate(self, tmp_path):
        cfg = tmp_path / "s.json"
        cfg.write_text(json.dumps({"schema": 1, "kind": "cross-graphon", "n_s": [40], "n_t": 12,
                                   "reps": 2, "methods": ["ns", "usvt"], "seed": 3}))
        assert main(["simulate", "--scenario", str(cfg), "--workers", "1",
                     "--out-dir", str(tmp_path / "o")]) == 0
        lines = (tmp_path / "o" / "runs.csv").read_text().splitlines()
        assert lines[0].startswith("scenario,") and len(lines) == 5

    def test_simulate_rejects_unknown_key(self, tmp_path):
        cfg = tmp_path / "s.json"
        cfg.write_text(json.dumps({"schema": 1, "seed": 1, "colour": "red"}))
        assert main(["simulate", "--scenario", str(cfg), "--out-dir", str(tmp_path)]) == 3

    def test_cv(self, tmp_path, graph_files):
        assert main(["cv", "--source-edges", str(graph_files / "source.txt"),
                     "--target-edges", str(graph_files / "target.txt"), "--seed", "0",
                     "--candidates", "0.1,0.2", "--out-dir", str(tmp_path)]) == 0
        assert read_json(tmp_path / "result.json")["delta_hat"] in (0.1, 0.2)

    def test_linkpred(self, tmp_path, graph_files):
        assert main(["linkpred", "--source-edges", str(graph_files / "source.txt"),
                     "--target-dataset", "karate", "--reps", "2", "--seed", "0",
                     "--methods", "ns,gtrans-gw", "--out-dir", str(tmp_path)]) == 0
        res = read_json(tmp_path / "result.json")
        assert set(res["methods"]) == {"ns", "gtrans-gw"}

    def test_console_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "gtrans.cli", "graphon-table", "--grid", "3",
                               "--out-dir", str(tmp_path)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
