import json
import subprocess
import sys

import pytest

from hgs.cli import EXIT_CONFIG, EXIT_NO_MATCH, EXIT_OK, EXIT_TRANSPORT, main
from hgs.harness import ExperimentConfig, launch_processes, stop_processes
from hgs.jgf import load_graph, read_jgf

SMALL = {
    "levels": [{"nodes": 8, "sockets": 2, "cores": 4, "racks": 1},
               "node:4 socket:8 core:32", "node:2 socket:4 core:16"],
    "suite": ["node:1 socket:2 core:8", "node:2 socket:4 core:16"],
    "repetitions": 12,
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(SMALL))
    return path


def test_build_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["build", "node:2 socket:4 core:64", "--out", str(a)]) == EXIT_OK
    assert "size 143" in capsys.readouterr().err
    assert main(["build", "--jgf", str(a), "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert load_graph(read_jgf(a)).size == 143


@pytest.mark.parametrize("argv", [["build", ""], ["build", "socket:2"], ["build", "--jgf", "/nope"],
                                  ["grow", "node:1 [core:2"], ["fit", "/nope.jsonl"]])
def test_configuration_errors(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert capsys.readouterr().err.startswith("error:")


def test_grow_outcomes(config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["grow", "node:3 socket:6 core:24", "--config", str(config),
                 "--out", str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "outcome satisfied_by_parent" in text and "levels_traversed 3" in text
    assert (out / "samples.jsonl").read_text().count("\n") >= 3
    assert main(["grow", "node:9", "--config", str(config)]) == EXIT_NO_MATCH
    assert "outcome failed" in capsys.readouterr().out


def test_bench_then_fit(config, tmp_path, capsys):
    out = tmp_path / "bench"
    assert main(["bench", "--config", str(config), "--out", str(out), "--transport", "tcp"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["complete"] and summary["trials"] == 24
    capsys.readouterr()
    assert main(["fit", str(out / "samples.jsonl"), "--out", str(out / "fit.json")]) == EXIT_OK
    table = capsys.readouterr().out
    assert "comms" in table and "add_update" in table
    rows = json.loads((out / "fit.json").read_text())["models"]
    assert {(r["phase"], r["transport"]) for r in rows} >= {("comms", "inter"),
                                                            ("add_update", None)}


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"levls": []}')
    assert main(["bench", "--config", str(path)]) == EXIT_CONFIG


def test_connect_refused():
    assert main(["grow", "core:1", "--connect", "127.0.0.1:1"]) == EXIT_TRANSPORT


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "hgs", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "build" in r.stdout


def test_one_process_per_level(tmp_path, capsys):
    cfg = ExperimentConfig(**{**SMALL, "transport": "tcp"})
    procs = launch_processes(cfg, tmp_path)
    try:
        leaf = procs[-1][1]
        assert main(["grow", "node:3 socket:6 core:24", "--connect", leaf]) == EXIT_OK
        assert "levels_traversed 3" in capsys.readouterr().out
        assert main(["grow", "node:8", "--connect", leaf]) == EXIT_NO_MATCH
    finally:
        stop_processes(procs)
    assert all(p.poll() is not None for p, _ in procs)
