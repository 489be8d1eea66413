"""End-to-end CLI runs, in-process via main(argv) plus one real subprocess."""

import hashlib
import json
import os
import subprocess
import sys

import pytest

from gridflow.cli import main
from gridflow.core import Solution, parse_scen, validate, Instance
from gridflow.grid import bfs_distance, parse_map
from gridflow.metrics import aggregate, attach_performance, episode_metrics
from gridflow.sim import EpisodeTrace


def run_cli(*argv):
    return main(list(argv))


OPEN_MAP = "type octile\nheight 4\nwidth 4\nmap\n....\n....\n....\n....\n"


@pytest.fixture
def open_map(tmp_path):
    path = tmp_path / "open.map"
    path.write_text(OPEN_MAP)
    return str(path)


class TestGenMaps:
    def test_writes_parseable_maps(self, tmp_path, capsys):
        out = tmp_path / "maps"
        assert run_cli(
            "gen-maps", "--count", "3", "--height", "12", "--width", "12",
            "--density", "0.4", "--seed", "5", "--out-dir", str(out),
        ) == 0
        files = sorted(os.listdir(out))
        assert files == ["maze-000.map", "maze-001.map", "maze-002.map"]
        for name in files:
            grid = parse_map((out / name).read_text())
            assert grid.height == 12 and grid.width == 12
        summary = json.loads(capsys.readouterr().out)
        assert summary["maps"] == 3

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run_cli("gen-maps", "--count", "2", "--seed", "9", "--out-dir", str(out))
        for name in os.listdir(a):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestGenScens:
    def test_scens_are_feasible(self, tmp_path, open_map, capsys):
        out = tmp_path / "scens"
        assert run_cli(
            "gen-scens", "--map", open_map, "--agents", "3", "--count", "2",
            "--seed", "1", "--out", str(out),
        ) == 0
        grid = parse_map(OPEN_MAP)
        names = sorted(os.listdir(out))
        assert names == ["open-a3-c0.scen", "open-a3-c1.scen"]
        for name in names:
            pairs = parse_scen((out / name).read_text())
            assert len(pairs) == 3
            for s, g in pairs:
                assert bfs_distance(grid, g).at(s) >= 0


class TestSolve:
    def test_single_agent_soc_is_bfs_distance(self, tmp_path, open_map, capsys):
        scen = tmp_path / "one.scen"
        scen.write_text("version 1\n0\topen\t4\t4\t0\t0\t3\t3\t0\n")
        out = tmp_path / "sol.json"
        assert run_cli(
            "solve", "--map", open_map, "--scen", str(scen), "--out", str(out)
        ) == 0
        report = json.loads(capsys.readouterr().out)
        grid = parse_map(OPEN_MAP)
        assert report["ok"] is True
        assert report["soc"] == bfs_distance(grid, (3, 3)).at((0, 0))
        sol = Solution.from_json(out.read_text())
        inst = Instance(grid, [(0, 0)], [(3, 3)])
        assert validate(inst, sol).ok

    def test_unsolvable_exits_nonzero(self, tmp_path, capsys):
        map_path = tmp_path / "cor.map"
        map_path.write_text("1 2\n..\n")
        scen = tmp_path / "swap.scen"
        scen.write_text(
            "version 1\n"
            "0\tcor\t2\t1\t0\t0\t1\t0\t0\n"
            "0\tcor\t2\t1\t1\t0\t0\t0\t0\n"
        )
        out = tmp_path / "sol.json"
        code = run_cli("solve", "--map", map_path.as_posix(), "--scen", str(scen), "--out", str(out))
        captured = capsys.readouterr()
        assert code == 1
        err = json.loads(captured.err.strip().splitlines()[-1])
        assert err["error"] == "SolveFailed"

    def test_multi_scen_parallel(self, tmp_path, open_map, capsys):
        scens = []
        for i in range(3):
            s = tmp_path / f"s{i}.scen"
            s.write_text(f"version 1\n0\topen\t4\t4\t{i}\t0\t3\t3\t0\n")
            scens.append(str(s))
        out = tmp_path / "sols"
        assert run_cli(
            "solve", "--map", open_map, "--scen", *scens, "--out", str(out), "--jobs", "2"
        ) == 0
        assert sorted(os.listdir(out)) == ["s0.json", "s1.json", "s2.json"]
        lines = capsys.readouterr().out.strip().splitlines()
        assert [json.loads(l)["scen"] for l in lines] == scens


class TestEvaluate:
    def test_expert_replay_csr_one(self, tmp_path, open_map, capsys):
        scen = tmp_path / "e.scen"
        scen.write_text(
            "version 1\n"
            "0\topen\t4\t4\t0\t0\t3\t3\t0\n"
            "0\topen\t4\t4\t3\t3\t0\t0\t0\n"
        )
        out = tmp_path / "trace.jsonl"
        assert run_cli(
            "evaluate", "--map", open_map, "--scen", str(scen),
            "--policy", "builtin:expert_replay", "--collision", "strict",
            "--out", str(out),
        ) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["csr"] == 1.0
        trace = EpisodeTrace.load(out)
        assert trace.result["solved"] is True

    def test_policy_command_subprocess(self, tmp_path, open_map, capsys):
        scen = tmp_path / "e.scen"
        scen.write_text("version 1\n0\topen\t4\t4\t0\t0\t2\t2\t0\n")
        out = tmp_path / "trace.jsonl"
        cmd = f"{sys.executable} -m gridflow.policy_host greedy_gradient"
        assert run_cli(
            "evaluate", "--map", open_map, "--scen", str(scen),
            "--policy", cmd, "--out", str(out),
        ) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["csr"] == 1.0


class TestExportDataset:
    def test_double_build_identical_sha256(self, tmp_path, capsys):
        recipe = tmp_path / "recipe.json"
        recipe.write_text(
            json.dumps(
                {
                    "name": "tiny",
                    "seed": 3,
                    "maps": {"count": 1, "height": 10, "width": 10, "density": 0.4},
                    "scenarios": [{"count": 1, "agents": 2}],
                }
            )
        )
        digests = []
        for sub in ("d1", "d2"):
            out = tmp_path / sub
            assert run_cli(
                "export-dataset", "--recipe", str(recipe), "--out-dir", str(out)
            ) == 0
            digests.append(json.loads(capsys.readouterr().out)["samples_sha256"])
            blob = (out / "samples.bin").read_bytes()
            assert hashlib.sha256(blob).hexdigest() == digests[-1]
        assert digests[0] == digests[1]


class TestAggregateAndRender:
    def test_pipeline_round_trip(self, tmp_path, open_map, capsys):
        scens = []
        for i in range(2):
            s = tmp_path / f"open-a2-c{i}.scen"
            s.write_text(
                "version 1\n"
                f"0\topen\t4\t4\t{i}\t0\t3\t3\t0\n"
                f"0\topen\t4\t4\t3\t3\t0\t{i}\t0\n"
            )
            scens.append(str(s))
        traces = tmp_path / "traces"
        assert run_cli(
            "evaluate", "--map", open_map, "--scen", *scens,
            "--policy", "builtin:pibt_step", "--collision", "tolerant",
            "--out", str(traces),
        ) == 0
        capsys.readouterr()
        prefix = tmp_path / "summary"
        assert run_cli("aggregate", "--traces", str(traces), "--out", str(prefix)) == 0
        rows = json.loads(capsys.readouterr().out)
        assert json.loads((tmp_path / "summary.json").read_text()) == rows
        assert (tmp_path / "summary.csv").read_text().startswith("map,num_agents")

        reports = [
            episode_metrics(EpisodeTrace.load(traces / f"open-a2-c{i}.trace.jsonl"))
            for i in range(2)
        ]
        attach_performance(reports)
        assert rows == json.loads(json.dumps(aggregate(reports)))

        frames = tmp_path / "frames"
        assert run_cli(
            "render", "--trace", str(traces / "open-a2-c0.trace.jsonl"),
            "--format", "ascii", "--out-dir", str(frames),
        ) == 0
        assert (frames / "animation.txt").exists()


class TestBench:
    def test_scalability_table(self, tmp_path, open_map, capsys):
        out = tmp_path / "bench.json"
        assert run_cli(
            "bench-scalability", "--policy", "builtin:random_valid",
            "--agents", "2,4", "--map", open_map, "--episodes", "1",
            "--max-steps", "10", "--seed", "4", "--out", str(out),
        ) == 0
        table = json.loads(capsys.readouterr().out)
        assert [r["agents"] for r in table["rows"]] == [2, 4]
        assert table["pairs"][0]["agents_1"] == 2
        assert table["pairs"][0]["scalability"] > 0
        assert json.loads(out.read_text()) == table

    def test_single_count_rejected(self, capsys):
        assert run_cli(
            "bench-scalability", "--policy", "builtin:random_valid", "--agents", "8"
        ) == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "ValueError"


class TestErrorsAndLogging:
    def test_missing_map_structured_error(self, tmp_path, capsys):
        code = run_cli(
            "solve", "--map", str(tmp_path / "nope.map"),
            "--scen", str(tmp_path / "nope.scen"), "--out", str(tmp_path / "o.json"),
        )
        assert code == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert "error" in err and "detail" in err

    def test_log_env_var_controls_verbosity(self, tmp_path):
        env = dict(os.environ, GRIDFLOW_LOG="info", PYTHONPATH="src")
        proc = subprocess.run(
            [
                sys.executable, "-m", "gridflow.cli", "gen-maps",
                "--count", "1", "--out-dir", str(tmp_path / "m"),
            ],
            capture_output=True,
            text=True,
            env=env,
            cwd=os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
        )
        assert proc.returncode == 0
        assert "wrote" in proc.stderr
