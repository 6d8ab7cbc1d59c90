import json
from dataclasses import replace
from importlib import resources

import pytest

import exponentlab.cli as cli
from exponentlab.expert_opt import expert_exponent
from exponentlab.report import load_report
from exponentlab.study import REFERENCE, bundled_scenario


def data_file(name):
    return resources.files("exponentlab") / "data" / name


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestExitCodes:
    def test_missing_scenario_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "exponents", "--scenario", str(tmp_path / "nope.json"))
        assert code == 2
        record = json.loads(err.strip())
        assert record["error"] == "input"

    def test_invalid_scenario_names_the_field(self, capsys, tmp_path):
        doc = json.loads(data_file("three_expert_gaussian.json").read_text())
        doc["hypotheses"]["priors"] = [0.5, 0.5, 0.5]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        code, _, err = run(capsys, "exponents", "--scenario", str(path))
        assert code == 2
        assert len(err.strip().splitlines()) == 1
        assert json.loads(err)["error"] == "scenario"

    def test_bad_policy(self, capsys):
        code, _, err = run(capsys, "exponents", "--expert", "1", "--policy", "0.5,0.6")
        assert code == 2
        assert "--policy" in json.loads(err)["message"]

    def test_unknown_expert(self, capsys):
        code, _, _ = run(capsys, "optimize", "expert", "9")
        assert code == 2

    def test_strict_non_convergence(self, capsys, monkeypatch):
        monkeypatch.setattr(cli, "DEFAULT", replace(cli.DEFAULT, outer_max_iter=1))
        args = ("optimize", "expert", "1", "--policy", "0.3,0.7")
        assert run(capsys, *args)[0] == 0
        assert run(capsys, *args, "--strict")[0] == 3


class TestExponents:
    def test_single_expert_matrix(self, capsys, tmp_path):
        out_json = tmp_path / "r.json"
        code, out, _ = run(capsys, "exponents", "--expert", "1", "--policy", "0.5,0.5", "--json", str(out_json))
        assert code == 0
        doc = load_report(out_json.read_text())
        rows = doc["tables"]["expert_1_exponents"]["rows"]
        assert len(rows) == 9
        sc = bundled_scenario()
        ev = expert_exponent(sc.expert(1), sc.policy(1, [0.5, 0.5]))
        # JSON carries the library values bit for bit
        assert doc["tables"]["experts"]["rows"][0][3] == ev.value
        assert "[expert_1_exponents]" in out

    def test_all_experts(self, capsys, tmp_path):
        out_json = tmp_path / "r.json"
        run(capsys, "exponents", "--json", str(out_json))
        doc = load_report(out_json.read_text())
        assert {f"expert_{k}_exponents" for k in (1, 2, 3)} <= set(doc["tables"])

    def test_csv_per_table(self, capsys, tmp_path):
        run(capsys, "exponents", "--expert", "2", "--policy", "1,0", "--csv", str(tmp_path))
        header = (tmp_path / "expert_2_exponents.csv").read_text().splitlines()[0]
        assert header == "m,d,region_rate,loss_rate,total"


class TestOptimize:
    def test_expert_two(self, capsys, tmp_path):
        out_json = tmp_path / "r.json"
        code, _, _ = run(capsys, "optimize", "expert", "2", "--json", str(out_json))
        assert code == 0
        doc = load_report(out_json.read_text())
        row = doc["tables"]["expert"]["rows"][0]
        assert row[1:3] == pytest.approx([1.0, 0.0], abs=0.01)
        assert doc["tables"]["trace"]["rows"]

    def test_select_matches_reference(self, capsys, tmp_path):
        out_json = tmp_path / "r.json"
        code, _, _ = run(capsys, "optimize", "select", "--json", str(out_json))
        assert code == 0
        doc = load_report(out_json.read_text())
        assert doc["diagnostics"]["chosen_expert"] == REFERENCE["chosen"]
        cols = doc["tables"]["selection"]["columns"]
        for row in doc["tables"]["selection"]["rows"]:
            k = row[0]
            assert row[cols.index("E0")] == pytest.approx(REFERENCE["agent_exponent"][k], abs=1e-3)

    def test_select_zero_one_agent(self, capsys, tmp_path):
        out_json = tmp_path / "r.json"
        path = str(data_file("three_expert_gaussian_zero_one_agent.json"))
        code, _, _ = run(capsys, "optimize", "select", "--scenario", path, "--policy", "0.5,0.5",
                         "--json", str(out_json))
        assert code == 0
        doc = load_report(out_json.read_text())
        assert doc["diagnostics"]["chosen_expert"] == REFERENCE["zero_one_chosen"]
        cols = doc["tables"]["selection"]["columns"]
        for row in doc["tables"]["selection"]["rows"]:
            assert row[cols.index("E0")] == pytest.approx(REFERENCE["zero_one_exponent"][row[0]], abs=1e-3)

    def test_unknown_target(self, capsys):
        assert run(capsys, "optimize", "everything")[0] == 2


class TestSimulate:
    def test_repeat_is_byte_identical(self, capsys, tmp_path):
        sim = tmp_path / "sim.json"
        sim.write_text(json.dumps({"n_grid": [10, 20, 30, 40, 50, 60], "trials": 2000, "seed": 3, "chunk": 1000}))
        outputs = []
        for name in ("a.json", "b.json"):
            run(capsys, "simulate", "--expert", "2", "--sim", str(sim), "--json", str(tmp_path / name))
            outputs.append((tmp_path / name).read_bytes())
        assert outputs[0] == outputs[1]
        doc = load_report(outputs[0].decode())
        assert [r[0] for r in doc["tables"]["slopes"]["rows"]] == ["expert", "agent0"]

    def test_censored_cells_render_as_bounds(self, capsys, tmp_path):
        sim = tmp_path / "sim.json"
        sim.write_text(json.dumps({"n_grid": [50, 100, 200, 300, 400, 500], "trials": 200, "seed": 1}))
        code, out, _ = run(capsys, "simulate", "--expert", "2", "--sim", str(sim))
        assert code == 0
        assert "<= " in out
