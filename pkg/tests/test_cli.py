import csv
import json
from pathlib import Path

import pytest

from vagdfn.cli import main
from vagdfn.config import SCHEMA, dump, from_dict, load
from vagdfn.errors import ConfigurationError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small(scenario="single_fracture", **sections):
    doc = {"schema": SCHEMA, "scenario": scenario, "solver": {"method": "direct"}}
    doc.update(sections)
    return doc


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


@pytest.mark.parametrize("name", ["single_fracture", "four_fractures", "hex3d"])
def test_bundled_configs_load(name):
    cfg = load(CONFIGS / f"{name}.json")
    assert cfg.scenario == name and cfg.schema == SCHEMA
    assert cfg.solver.method == "direct"


def test_defaults_per_scenario():
    assert from_dict(small("four_fractures")).mesh.n_x == 50
    hx = from_dict(small("hex3d", boundary={"type": "planes", "concentration": 0.0,
                                            "planes": [{"axis": "z", "value": 0.0, "pressure": 1.0}]}))
    assert hx.transport.snapshot_times == [0.0, 0.2, 0.4, 0.5]


@pytest.mark.parametrize("doc", [
    {"scenario": "single_fracture"},
    {"schema": "vagdfn.run/0", "scenario": "single_fracture"},
    {"schema": SCHEMA, "scenario": "nope"},
    {"schema": SCHEMA, "scenario": "single_fracture", "extra": 1},
    {"schema": SCHEMA, "scenario": "single_fracture", "mesh": {"nx": 10}},
    {"schema": SCHEMA, "scenario": "single_fracture", "physics": {"width": -1.0}},
    {"schema": SCHEMA, "scenario": "single_fracture", "transport": {"snapshot_times": [0.7]}},
    {"schema": SCHEMA, "scenario": "single_fracture", "transport": {"omega_m": 1.0}},
    {"schema": SCHEMA, "scenario": "single_fracture", "wells": [{"name": "w", "kind": "rate", "bogus": 1}]},
    {"schema": SCHEMA, "scenario": "hex3d", "boundary": {"type": "planes", "planes": [
        {"axis": "q", "value": 0.0, "pressure": 1.0}]}},
    {"schema": SCHEMA, "scenario": "from_mesh_file"},
])
def test_invalid_configs(doc):
    with pytest.raises(ConfigurationError):
        from_dict(doc)


def test_dump_round_trip(tmp_path):
    cfg = from_dict(small(mesh={"n_x": 8}))
    dump(cfg, tmp_path / "c.json")
    assert load(tmp_path / "c.json") == cfg


def test_missing_config_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    assert main(["run", "--config", str(missing)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigurationError" and str(missing) in err["message"]


def test_run_writes_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, small(mesh={"n_x": 8}, transport={"series_every": 5}))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    for t in ("0", "0p25", "0p5"):
        assert {f"tracer_t{t}.vtk", f"tracer_t{t}.csv"} <= names
    assert {"mesh.txt", "pressure.vtk", "pressure.csv", "solver_log.csv", "tracer_volumes.csv", "errors.csv",
            "manifest.json"} <= names
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["schema"] == SCHEMA and "numpy" in man["versions"]
    assert man["summary"]["max_principle_violation"] == 0.0
    assert sorted(man["outputs"]) == man["outputs"]
    with open(out / "errors.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["n_x", "final_time", "err_matrix", "err_fracture"] and rows[1][0] == "8"
    assert (out / "errors.csv").read_bytes().count(b"\r\n") == 2
    status = json.loads(capsys.readouterr().out)
    assert status["status"] == "ok"


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, small(mesh={"n_x": 8}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(b), "--np", "1"]) == 0
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for name in sorted(p.name for p in a.glob("*.vtk")):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_parallel_run_matches_sequential_csv(tmp_path):
    cfg = write(tmp_path, small(mesh={"n_x": 8}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(b), "--np", "3"]) == 0
    assert (b / "part_timings.csv").exists()
    for name in ("pressure.csv", "tracer_t0p5.csv", "errors.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_wells_csv(tmp_path):
    doc = small("hex3d", mesh={"n_x": 4, "stretch": 1.0},
                boundary={"type": "planes", "concentration": 0.0,
                          "planes": [{"axis": "z", "value": 0.0, "pressure": 1.0, "concentration": 1.0},
                                     {"axis": "z", "value": 1.0, "pressure": 0.0}]},
                wells=[{"name": "prod", "kind": "pressure", "faces": [5], "dx": [0.25], "dz": 0.25,
                        "radius": 0.001, "pressure": 0.2}],
                transport={"final_time": 0.2, "snapshot_times": [0.0, 0.1, 0.2]})
    out = tmp_path / "w"
    assert main(["run", "--config", str(write(tmp_path, doc)), "--out", str(out)]) == 0
    with open(out / "wells.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["time"]) for r in rows] == [0.0, 0.1, 0.2]
    assert all(r["well"] == "prod" for r in rows)
    man = json.loads((out / "manifest.json").read_text())
    assert man["summary"]["max_mass_defect"] < 1e-12


def test_convergence_command(tmp_path, capsys):
    cfg = write(tmp_path, small())
    out = tmp_path / "conv"
    assert main(["convergence", "--config", str(cfg), "--levels", "8,16,32", "--out", str(out)]) == 0
    with open(out / "convergence.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["n_x"]) for r in rows] == [8, 16, 32]
    errs = [float(r["err_matrix"]) for r in rows]
    assert errs[0] > errs[1] > errs[2]
    assert json.loads((out / "manifest.json").read_text())["command"] == "convergence"
    assert capsys.readouterr().out.startswith("n_x,err_matrix")


@pytest.mark.parametrize("levels", ["100", "100,200"])
def test_convergence_needs_three_levels(tmp_path, capsys, levels):
    cfg = write(tmp_path, small())
    assert main(["convergence", "--config", str(cfg), "--levels", levels, "--out", str(tmp_path / "c")]) == 1
    assert "at least 3" in json.loads(capsys.readouterr().err)["message"]


def test_bad_levels_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["convergence", "--config", "x.json", "--levels", "a,b"])
    assert exc.value.code == 2


def test_module_error_exit(tmp_path, capsys):
    # n_x = 6 is not a multiple of 4 for the single-fracture grid
    cfg = write(tmp_path, small(mesh={"n_x": 6}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "InvalidParameterError"


@pytest.mark.slow
def test_bundled_single_fracture_run(tmp_path):
    out = tmp_path / "sf"
    assert main(["run", "--config", str(CONFIGS / "single_fracture.json"), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"tracer_t0.vtk", "tracer_t0p25.vtk", "tracer_t0p5.vtk", "errors.csv"} <= names
    with open(out / "errors.csv", newline="") as fh:
        row = list(csv.DictReader(fh))[0]
    assert int(row["n_x"]) == 100 and float(row["final_time"]) == 0.5


@pytest.mark.slow
def test_bundled_hex3d_run(tmp_path):
    out = tmp_path / "hx"
    assert main(["run", "--config", str(CONFIGS / "hex3d.json"), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"tracer_t0.vtk", "tracer_t0p2.vtk", "tracer_t0p4.vtk", "tracer_t0p5.vtk"} <= names
    man = json.loads((out / "manifest.json").read_text())
    assert man["summary"]["n_cells"] == 32 ** 3
