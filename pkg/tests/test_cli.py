"""End-to-end command-line runs."""
import csv
import json

import pytest

from esi.cli import main

RINGDOWN = {"duration": 8.0, "record_step": 0.01, "events": [
    {"time": 1.0, "kind": "vref_step", "target": "G1", "fraction": 0.05},
    {"time": 1.1, "kind": "vref_step", "target": "G1", "fraction": 0.0}]}
AMBIENT = {"duration": 8.0, "record_step": 0.01, "ambient": {"amplitude": 0.02, "seed": 1}}
ESI = {"degree": 1, "block_rows": 20, "rank_rule": "fixed", "order": 16}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err
    return code, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scen = write(root / "ringdown.json", RINGDOWN)
    esi = write(root / "esi.json", ESI)
    assert main(["simulate", "two_area", scen, "--snr", "30", "--seed", "7", "--start", "1.2",
                 "--out", str(root / "sim")]) == 0
    return root


def test_simulate_outputs(workspace):
    sim = workspace / "sim"
    man = json.loads((sim / "manifest.json").read_text())
    assert man["subcommand"] == "simulate" and man["seed"] == 7 and man["clean"] is False
    assert man["configs"]["network"] == "case:two_area"
    assert set(man) >= {"inputs", "outputs", "version", "duration_s"}
    rows = (sim / "measurements.csv").read_text().splitlines()
    assert rows[0] == "time,1:V,2:V,3:V,4:V,1:f,2:f,3:f,4:f"
    assert len(rows) == 1 + 681
    truth = json.loads((sim / "truth.json").read_text())
    assert truth["kind"] == "simulation-truth"
    assert {"eigenvalues", "participation", "states", "M_sys", "electromechanical"} <= set(truth["arrays"])


def test_simulate_is_deterministic(workspace, capsys):
    out = workspace / "again"
    code, _ = run(capsys, "simulate", "two_area", workspace / "ringdown.json", "--snr", "30", "--seed", "7",
                  "--start", "1.2", "--out", out)
    assert code == 0
    assert (out / "measurements.csv").read_bytes() == (workspace / "sim" / "measurements.csv").read_bytes()
    assert (out / "truth.bin").read_bytes() == (workspace / "sim" / "truth.bin").read_bytes()


def test_clean_flag(workspace, capsys):
    out = workspace / "clean"
    code, _ = run(capsys, "simulate", "two_area", workspace / "ringdown.json", "--snr", "none",
                  "--channels", "V@gen", "--out", out)
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["clean"] is True
    assert json.loads((out / "measurements.json").read_text())["snr"] is None


def test_identify_and_participation(workspace, capsys):
    sim, out = workspace / "sim", workspace / "id"
    code, _ = run(capsys, "identify", sim / "measurements.csv", workspace / "esi.json", "--out", out)
    assert code == 0
    assert (out / "model.json").exists() and (out / "model.bin").exists()
    modes = list(csv.DictReader(open(out / "modes.csv")))
    assert modes and {"frequency_hz", "damping_ratio", "unstable"} <= set(modes[0])
    first = (out / "modes.csv").read_bytes()
    code, _ = run(capsys, "identify", sim / "measurements.csv", workspace / "esi.json", "--out", out)
    assert (out / "modes.csv").read_bytes() == first
    code, _ = run(capsys, "analyze", out / "model.json", "--participation", "--out", workspace / "pf")
    assert code == 0
    rows = list(csv.DictReader(open(workspace / "pf" / "participation.csv")))
    by_mode = {}
    for r in rows:
        by_mode.setdefault(r["mode"], 0.0)
        by_mode[r["mode"]] += float(r["participation"])
    assert all(abs(v - 1.0) < 1e-9 for v in by_mode.values())


def test_analyze_inertia(workspace, capsys):
    amb = write(workspace / "ambient.json", AMBIENT)
    sim = workspace / "amb"
    code, _ = run(capsys, "simulate", "two_area", amb, "--channels", "P@gen,omega", "--out", sim)
    assert code == 0
    code, _ = run(capsys, "identify", sim / "measurements.csv", workspace / "esi.json", "--out", sim / "id")
    assert code == 0
    inertia_cfg = write(workspace / "esi_inertia.json",
                        {"degree": 1, "block_rows": 10, "rank_rule": "fixed", "order": 40})
    code, err = run(capsys, "analyze", sim / "id" / "model.json", "--inertia", "--measurements",
                    sim / "measurements.csv", "--esi-config", inertia_cfg, "--out", sim / "inertia")
    assert code == 0, err
    rows = list(csv.DictReader(open(sim / "inertia" / "inertia.csv")))
    assert len(rows) == 2
    assert all(abs(float(r["M_sys"]) - 46.0) < 0.05 * 46.0 for r in rows)


def test_compare_and_report(workspace, capsys):
    sim, out = workspace / "sim", workspace / "cmp"
    code, err = run(capsys, "compare", sim / "measurements.csv", sim / "truth.json", "--esi-config",
                    workspace / "esi.json", "--center", "--band", "0.1,2.5", "--out", out, "--report")
    assert code == 0, err
    doc = json.loads((out / "compare.json").read_text())
    assert [r["method"] for r in doc["reports"]] == ["esi", "prony", "matrix-pencil"]
    rows = list(csv.DictReader(open(out / "eigenvalues.csv")))
    assert {r["method"] for r in rows} == {"linearized", "esi", "prony", "matrix-pencil"}
    assert (out / "eigenvalues.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_report_figures(workspace, capsys):
    out = workspace / "fig"
    code, _ = run(capsys, "identify", workspace / "sim" / "measurements.csv", workspace / "esi.json",
                  "--out", out, "--report")
    assert code == 0 and (out / "modes.png").exists()
    code, _ = run(capsys, "analyze", out / "model.json", "--participation", "--out", out, "--report")
    assert code == 0 and (out / "participation.png").exists()


def _error(err):
    doc = json.loads(err.strip().splitlines()[-1])
    assert {"error", "exit_code", "message", "subcommand"} <= set(doc)
    return doc


def test_missing_scenario_is_config_error(workspace, capsys):
    code, err = run(capsys, "simulate", "two_area", workspace / "nope.json", "--out", workspace / "x")
    assert code == 2
    assert "nope.json" in _error(err)["message"]


def test_bad_network_reports_pointer(workspace, capsys):
    net = write(workspace / "net.json", {"buses": [1, 2], "lines": [{"from": 1, "to": 3, "x": 0.1}],
                                          "generators": [{"bus": 1}]})
    code, err = run(capsys, "simulate", net, workspace / "ringdown.json", "--out", workspace / "x")
    assert code == 2
    assert _error(err)["pointer"] == "/lines/0/to"


@pytest.mark.parametrize("argv", [
    ["compare", "{sim}/measurements.csv", "{sim}/truth.json", "--methods", "era"],
    ["identify", "{sim}/measurements.csv", "{root}/nope.json"],
    ["analyze", "{root}/id/model.json"],
    ["identify", "{sim}/measurements.csv", "{root}/esi.json", "--channels", "99:V"],
    ["compare", "{sim}/measurements.csv", "{root}/id/model.json"],
    ["simulate"],
    ["simulate", "two_area", "{root}/ringdown.json", "--snr", "loud"],
])
def test_config_errors_exit_2(workspace, capsys, argv):
    (workspace / "id").mkdir(exist_ok=True)
    if not (workspace / "id" / "model.json").exists():
        main(["identify", str(workspace / "sim" / "measurements.csv"), str(workspace / "esi.json"),
              "--out", str(workspace / "id")])
    args = [a.format(sim=workspace / "sim", root=workspace) for a in argv]
    code, _ = run(capsys, *args)
    assert code == 2


def test_numerical_failure_exit_3(workspace, capsys):
    cfg = write(workspace / "huge.json", {"degree": 1, "block_rows": 10, "rank_rule": "fixed", "order": 500})
    code, err = run(capsys, "identify", workspace / "sim" / "measurements.csv", cfg, "--out", workspace / "x")
    assert code == 3
    assert _error(err)["error"] == "ESIError"
