import csv
import json
import subprocess
import sys
import time

import pytest

from cfie.cli import main
from cfie.datasets import make_random_view
from cfie.ingest import load_view, serialize_view


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def random_view_file(tmp_path):
    path = tmp_path / "prog.json"
    path.write_bytes(serialize_view(make_random_view(200, 120, seed=31)))
    return path


def test_analyze_empty_view(fixtures_dir, tmp_path):
    out = tmp_path / "out"
    assert main(["analyze", "--view", str(fixtures_dir / "empty.json"), "--policies", "all", "--out", str(out),
                 "--csv"]) == 0
    for p in ("TypeArmor", "IFCC", "MCFI", "TCFI"):
        doc = json.loads((out / f"targets_{p}.json").read_text())
        assert doc == {"policy": p, "view_label": "source", "entries": {}}
    stats = json.loads((out / "ctr_stats.json").read_text())
    assert all(v["ctr"]["n"] == 0 for v in stats["policies"].values())
    rows = read_csv(out / "ctr.csv")
    assert rows[0] == ["benchmark", "view", "policy", "mean", "std", "min", "med", "90thp", "max", "n"]
    assert len(rows) == 5 and all(r[-1] == "0" for r in rows[1:])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "analyze"
    assert "targets_MCFI.json" in manifest["outputs"]


def test_analyze_four_targets(fixtures_dir, tmp_path):
    out = tmp_path / "out"
    assert main(["analyze", "--view", str(fixtures_dir / "four_targets.json"), "--policies", "TypeArmor,IFCC,MCFI,TCFI",
                 "--out", str(out)]) == 0
    got = {p: json.loads((out / f"targets_{p}.json").read_text())["entries"]["ic1"]
           for p in ("TypeArmor", "IFCC", "MCFI", "TCFI")}
    assert got == {"TypeArmor": ["CT1", "CT2", "CT3"], "IFCC": ["CT1", "CT3", "CT4"], "MCFI": ["CT1", "CT4"],
                   "TCFI": ["CT1", "CT3"]}
    assert not (out / "ctr.csv").exists()


def test_analyze_bad_type_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "label": "source",\n "functions": [\n  {"id": "f", "link_key": "f", "return": "int",\n'
                   '   "params": [], "variadic": false, "address_taken": true}\n ],\n "call_sites": []\n}\n')
    assert main(["analyze", "--view", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"{bad}:4:" in err
    assert "functions[0].return" in err


def test_input_errors_exit_2(tmp_path, fixtures_dir):
    assert main(["analyze", "--view", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    assert main(["analyze", "--view", str(fixtures_dir / "four_targets.json"), "--policies", "CFG",
                 "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["cdf", "--report", "x", "--metric", "air", "--out", "y"])
    assert info.value.code == 2


def test_lenient_flag(tmp_path, fixtures_dir):
    doc = json.loads((fixtures_dir / "four_targets.json").read_text())
    doc["functions"][0]["note"] = "extra"
    path = tmp_path / "extra.json"
    path.write_text(json.dumps(doc))
    assert main(["analyze", "--view", str(path), "--out", str(tmp_path / "a")]) == 2
    assert main(["analyze", "--view", str(path), "--out", str(tmp_path / "b"), "--lenient"]) == 0


def test_compare_worked_example(fixtures_dir, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--source", str(fixtures_dir / "worked_source.json"),
                 "--binary", str(fixtures_dir / "worked_binary.json"), "--policies", "MCFI", "--out", str(out)]) == 0
    rep = json.loads((out / "relative_MCFI.json").read_text())
    (site,) = rep["per_site"]
    assert round(site["rt"], 4) == 0.4
    assert round(site["rf"], 4) == 0.3333
    rows = read_csv(out / "relative_ctr.csv")
    assert rows[1][:4] == ["worked_source", "MCFI", "rt", "0.4000"]
    assert rows[2][:4] == ["worked_source", "MCFI", "rf", "0.3333"]
    for name in ("ctr.csv", "normalized_ctr.csv", "zero_targets.csv", "unmatched.json", "report.json",
                 "manifest.json"):
        assert (out / name).exists()
    norm = read_csv(out / "normalized_ctr.csv")
    assert norm[1] == ["worked_source", "MCFI", "source", f"{5 / 8:.4f}"]


def test_compare_identity(random_view_file, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--source", str(random_view_file), "--binary", str(random_view_file),
                 "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    for p, rep in report["policies"].items():
        assert rep["rt_stats"]["mean"] == 1.0, p
        assert rep["rf_stats"]["mean"] == 0.0, p
    unmatched = json.loads((out / "unmatched.json").read_text())
    assert unmatched["unmatched_functions"] == {"source": 0, "binary": 0}


def test_compare_against_zero_perturbation(random_view_file, tmp_path):
    pert = tmp_path / "zero.json"
    assert main(["perturb", "--view", str(random_view_file), "--seed", "3", "--out", str(pert)]) == 0
    out = tmp_path / "cmp"
    assert main(["compare", "--source", str(random_view_file), "--binary", str(pert), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert all(r["rt_stats"]["mean"] == 1.0 and r["rf_stats"]["mean"] == 0.0 for r in report["policies"].values())


def test_compare_warns_on_heavy_unmatching(random_view_file, tmp_path, caplog):
    pert = tmp_path / "dropped.json"
    assert main(["perturb", "--view", str(random_view_file), "--drop-fn", "0.9", "--seed", "1",
                 "--out", str(pert)]) == 0
    assert main(["compare", "--source", str(random_view_file), "--binary", str(pert),
                 "--out", str(tmp_path / "c")]) == 0
    assert "no binary counterpart" in caplog.text


def test_accuracy_command(random_view_file, tmp_path):
    ident = tmp_path / "acc_id"
    assert main(["accuracy", "--source", str(random_view_file), "--binary", str(random_view_file),
                 "--out", str(ident)]) == 0
    doc = json.loads((ident / "accuracy.json").read_text())
    assert len(doc["tables"]) == 12
    assert all(t["false"] == 0 for t in doc["tables"])
    rows = read_csv(ident / "accuracy_arity_function.csv")
    assert rows[0] == ["bucket", "true", "false"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3", "4", "5", "6+"]

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"return_voidness_err": 0.5}))
    pert = tmp_path / "rv.json"
    assert main(["perturb", "--view", str(random_view_file), "--config", str(cfg), "--seed", "9",
                 "--out", str(pert)]) == 0
    out = tmp_path / "acc_rv"
    assert main(["accuracy", "--source", str(random_view_file), "--binary", str(pert), "--out", str(out)]) == 0
    for t in json.loads((out / "accuracy.json").read_text())["tables"]:
        if t["dimension"] in ("return_voidness", "relaxed_return_width"):
            assert t["false"] > 0
        else:
            assert t["false"] == 0


def test_perturb_flags_override_config(random_view_file, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 1, "drop_fn": 0.0}))
    out = tmp_path / "p.json"
    assert main(["perturb", "--view", str(random_view_file), "--config", str(cfg), "--drop-fn", "1",
                 "--out", str(out)]) == 0
    v = load_view(out)
    assert v.label == "synthetic" and v.functions == ()
    cfg.write_text(json.dumps({"seed": 1, "drop_fn": 2.0}))
    assert main(["perturb", "--view", str(random_view_file), "--config", str(cfg), "--out", str(out)]) == 2


def test_cdf_command(tmp_path):
    report = {"policy": "MCFI", "per_site": [{"cs_id": "a", "rt": 0.4, "rf": 0.0}, {"cs_id": "b", "rt": 0.4, "rf": None},
                                             {"cs_id": "c", "rt": 1.0, "rf": 0.5}]}
    path = tmp_path / "rep.json"
    path.write_text(json.dumps(report))
    out = tmp_path / "cdf.csv"
    assert main(["cdf", "--report", str(path), "--metric", "rt", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["value", "cumulative_fraction"]
    assert [(float(v), round(float(f), 4)) for v, f in rows[1:]] == [(0.4, 0.6667), (1.0, 1.0)]

    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"policy": "IFCC", "per_site": []}))
    assert main(["cdf", "--report", str(empty), "--metric", "rf", "--out", str(out)]) == 0
    assert read_csv(out) == [["value", "cumulative_fraction"]]

    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"policy": "IFCC", "per_site": [{"cs_id": "a"}]}))
    assert main(["cdf", "--report", str(broken), "--metric", "rt", "--out", str(out)]) == 2


def test_cdf_from_combined_report(random_view_file, tmp_path):
    cmp_out = tmp_path / "cmp"
    pert = tmp_path / "p.json"
    main(["perturb", "--view", str(random_view_file), "--seed", "2", "--type-err", "0.3", "--out", str(pert)])
    assert main(["compare", "--source", str(random_view_file), "--binary", str(pert), "--out", str(cmp_out)]) == 0
    out = tmp_path / "cdf" / "rt.csv"
    assert main(["cdf", "--report", str(cmp_out / "report.json"), "--metric", "rt", "--out", str(out)]) == 0
    for p in ("TypeArmor", "IFCC", "MCFI", "TCFI"):
        rows = read_csv(out.with_name(f"rt_{p}.csv"))[1:]
        vals = [float(v) for v, _ in rows]
        fracs = [float(f) for _, f in rows]
        assert all(a < b for a, b in zip(vals, vals[1:]))
        assert all(a <= b for a, b in zip(fracs, fracs[1:]))
        assert fracs[-1] == 1.0


def test_internal_invariant_exit_3(monkeypatch, fixtures_dir, tmp_path):
    import cfie.cli as cli

    def broken(*a, **k):
        raise cli.InvariantError("boom")

    monkeypatch.setattr(cli, "_check_report", broken)
    assert main(["compare", "--source", str(fixtures_dir / "worked_source.json"),
                 "--binary", str(fixtures_dir / "worked_binary.json"), "--out", str(tmp_path / "o")]) == 3


def test_bad_thread_env(monkeypatch, fixtures_dir, tmp_path):
    monkeypatch.setenv("CFIE_THREADS", "many")
    assert main(["analyze", "--view", str(fixtures_dir / "four_targets.json"), "--out", str(tmp_path / "o")]) == 2


def test_console_script_entry_point(fixtures_dir, tmp_path):
    res = subprocess.run([sys.executable, "-m", "cfie.cli", "analyze", "--view", str(fixtures_dir / "four_targets.json"),
                          "--policies", "MCFI", "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr


@pytest.mark.slow
def test_analyze_10k_entities_under_budget(tmp_path):
    path = tmp_path / "big.json"
    path.write_bytes(serialize_view(make_random_view(5000, 5000, seed=77)))
    start = time.perf_counter()
    assert main(["analyze", "--view", str(path), "--out", str(tmp_path / "o"), "--csv"]) == 0
    assert time.perf_counter() - start < 10.0
