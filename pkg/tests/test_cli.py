import json

import numpy as np
import pytest

from sepflow import random_capacity_grid, save_dimacs, grid_r_division, save_partition
from sepflow.cli import main


def run(argv):
    return main(argv)


class TestMaxflowCommand:
    def test_grid_run_emits_json(self, tmp_path, capsys):
        out = tmp_path / "res.json"
        code = run(["maxflow", "--grid", "6x6", "--random-capacities", "--eps", "0.1",
                    "--r", "16", "--seed", "7", "--json", str(out)])
        assert code == 0
        payload = json.loads(out.read_text())
        for key in ("flow_value", "eps", "iterations_outer", "iterations_inner_total",
                    "max_edge_congestion", "per_group_congestion_max", "timings", "seed"):
            assert key in payload
        assert payload["flow_value"] > 0
        assert payload["max_edge_congestion"] <= 1 + 1e-9

    def test_dimacs_input(self, tmp_path):
        g = random_capacity_grid(5, 5, seed=2)
        gpath = tmp_path / "g.dimacs"
        save_dimacs(g, gpath, s=0, t=24)
        part = grid_r_division(5, 5, 1, 16, terminals=(0, 24), graph=g)
        ppath = tmp_path / "g.part"
        save_partition(part, ppath)
        out = tmp_path / "res.json"
        code = run(["maxflow", "--input", str(gpath), "--partition", str(ppath),
                    "--eps", "0.1", "--r", "16", "--json", str(out)])
        assert code == 0

    def test_bad_partition_exits_one(self, tmp_path, capsys):
        g = random_capacity_grid(5, 5, seed=2)
        gpath = tmp_path / "g.dimacs"
        save_dimacs(g, gpath, s=0, t=24)
        ppath = tmp_path / "bad.part"
        ppath.write_text("k 1 r 16\ng 0 0 1 2\n")  # misses most edges
        code = run(["maxflow", "--input", str(gpath), "--partition", str(ppath),
                    "--json", str(tmp_path / "r.json")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_overdemand_fixed_flow_exits_two(self, tmp_path):
        out = tmp_path / "res.json"
        cut = tmp_path / "cut.txt"
        code = run(["maxflow", "--grid", "5x5", "--flow", "100", "--eps", "0.1",
                    "--seed", "1", "--json", str(out), "--emit-cut", str(cut)])
        assert code == 2
        payload = json.loads(out.read_text())
        assert payload["status"] == "fail"
        assert payload["certificate"]["gradient_capacity"] <= 1 + 1e-8
        assert cut.exists() and cut.read_text().strip()

    def test_emit_flow_and_trace(self, tmp_path):
        out = tmp_path / "r.json"
        fpath = tmp_path / "flow.csv"
        tpath = tmp_path / "trace.csv"
        code = run(["maxflow", "--grid", "5x5", "--random-capacities", "--seed", "3",
                    "--r", "16", "--json", str(out), "--emit-flow", str(fpath),
                    "--trace", str(tpath)])
        assert code == 0
        flow = np.loadtxt(fpath, delimiter=",")
        assert flow.size == 40  # 5x5 grid edge count
        header = tpath.read_text().splitlines()[0]
        assert header.startswith("probe,")

    def test_recursive_sparsifiers(self, tmp_path):
        out = tmp_path / "r.json"
        code = run(["maxflow", "--grid", "8x8", "--random-capacities", "--recursive",
                    "--seed", "5", "--r", "32", "--json", str(out)])
        assert code == 0
        assert json.loads(out.read_text())["flow_value"] > 0


class TestDeterminism:
    def strip_timings(self, payload):
        payload = dict(payload)
        payload.pop("timings", None)
        return payload

    def test_identical_json_and_flow(self, tmp_path, monkeypatch):
        results = []
        for threads, tag in (("1", "a"), ("4", "b")):
            monkeypatch.setenv("SEPFLOW_THREADS", threads)
            out = tmp_path / f"{tag}.json"
            flow = tmp_path / f"{tag}.flow"
            code = run(["maxflow", "--grid", "6x6", "--random-capacities", "--seed", "11",
                        "--r", "16", "--json", str(out), "--emit-flow", str(flow)])
            assert code == 0
            results.append((self.strip_timings(json.loads(out.read_text())),
                            flow.read_bytes()))
        assert results[0][0] == results[1][0]
        assert results[0][1] == results[1][1]


class TestBenchCommand:
    def test_csv_shape_and_ratio(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = run(["bench", "--grids", "6,8", "--eps", "0.1", "--r", "16",
                    "--seed", "3", "--no-timing", "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].split(",")[:4] == ["instance", "n", "m", "r"]
        assert len(lines) == 3
        for line in lines[1:]:
            ratio = float(line.split(",")[7])
            assert ratio >= 1 - 0.1

    def test_repeat_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            assert run(["bench", "--grids", "6", "--eps", "0.1", "--r", "16",
                        "--seed", "9", "--no-timing", "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()
