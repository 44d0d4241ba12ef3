import json

import numpy as np
import pytest

from pencrit.cli import main

ARX_TOML = 'kind = "ARX"\np = 1\n'
INGARCH_TOML = 'kind = "INGARCH_P"\np = 1\n'


@pytest.fixture()
def arx_family(tmp_path):
    path = tmp_path / "arx.toml"
    path.write_text(ARX_TOML)
    return str(path)


@pytest.fixture()
def ar1_csv(tmp_path, arx_family):
    path = tmp_path / "y.csv"
    code = main(["simulate", "--family", arx_family, "--theta", "0,0.5,1",
                 "--n", "800", "--seed", "7", "--out", str(path)])
    assert code == 0
    return str(path)


class TestHelp:
    def test_top_level_help_lists_subcommands(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        for sub in ("simulate", "fit", "select", "limits", "experiment"):
            assert sub in out

    def test_subcommand_help_lists_every_flag(self, capsys):
        expected = {
            "simulate": ["--family", "--theta", "--n", "--burn-in", "--seed",
                         "--innovation", "--emission", "--out"],
            "fit": ["--data", "--family", "--subset", "--sandwich", "--out"],
            "select": ["--data", "--family", "--candidates", "--penalty",
                       "--out"],
            "limits": ["--data", "--family", "--m-star", "--m-tilde",
                       "--kappa", "--draws", "--seed", "--out"],
            "experiment": ["--plan", "--seed", "--threads", "--plot-data",
                           "--out"],
        }
        for sub, flags in expected.items():
            assert main([sub, "--help"]) == 0
            out = capsys.readouterr().out
            for flag in flags:
                assert flag in out, f"{sub} help misses {flag}"

    def test_unknown_flag_rejected(self, capsys):
        assert main(["simulate", "--bogus"]) == 2

    def test_version(self, capsys):
        assert main(["--version"]) == 0
        assert capsys.readouterr().out.startswith("pencrit ")


class TestSimulate:
    def test_same_seed_byte_identical(self, tmp_path, arx_family):
        outs = []
        for name in ("a.csv", "b.csv"):
            path = tmp_path / name
            assert main(["simulate", "--family", arx_family, "--theta",
                         "0,0.5,1", "--n", "500", "--seed", "7",
                         "--out", str(path)]) == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_count_family(self, tmp_path, capsys):
        fam = tmp_path / "ing.toml"
        fam.write_text(INGARCH_TOML)
        out = tmp_path / "c.csv"
        assert main(["simulate", "--family", str(fam), "--theta", "1,0.5",
                     "--n", "300", "--seed", "3", "--out", str(out)]) == 0
        body = out.read_text().splitlines()
        assert body[0] == "t,y1"
        assert len(body) == 301

    def test_omitted_seed_recorded(self, tmp_path, arx_family, capsys):
        out = tmp_path / "d.csv"
        assert main(["simulate", "--family", arx_family, "--theta", "0,0.5,1",
                     "--n", "100", "--out", str(out)]) == 0
        meta = json.loads(capsys.readouterr().err)
        assert meta["seed_drawn"] is True
        assert isinstance(meta["seed"], int)

    def test_bad_theta_exit_2(self, arx_family, capsys):
        assert main(["simulate", "--family", arx_family, "--theta", "0,x,1",
                     "--n", "100", "--seed", "1"]) == 2


class TestFit:
    def test_fit_writes_json(self, tmp_path, arx_family, ar1_csv, capsys):
        out = tmp_path / "fit.json"
        assert main(["fit", "--data", ar1_csv, "--family", arx_family,
                     "--subset", "{1,2,3}", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["subset"] == [1, 2, 3]
        assert abs(payload["theta_hat"][1] - 0.5) < 0.1

    def test_fit_with_sandwich(self, tmp_path, arx_family, ar1_csv):
        out = tmp_path / "fit.json"
        assert main(["fit", "--data", ar1_csv, "--family", arx_family,
                     "--sandwich", "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert "sandwich" in payload
        assert len(payload["sandwich"]["F_hat"]) == 3

    def test_missing_file_exit_2_names_path(self, arx_family, capsys):
        code = main(["fit", "--data", "/nope/missing.csv",
                     "--family", arx_family])
        assert code == 2
        assert "/nope/missing.csv" in capsys.readouterr().err

    def test_malformed_csv_exit_2_names_row(self, tmp_path, arx_family,
                                            capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,y1\n1,1.0\n2,oops\n")
        assert main(["fit", "--data", str(bad), "--family", arx_family]) == 2
        assert "row 3" in capsys.readouterr().err


class TestSelect:
    def test_select_nested_log(self, tmp_path, arx_family, ar1_csv, capsys):
        out = tmp_path / "sel.json"
        assert main(["select", "--data", ar1_csv, "--family", arx_family,
                     "--candidates", "nested", "--penalty", "log",
                     "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["winner"] == [1, 2, 3]
        csv_path = tmp_path / "sel.csv"
        assert csv_path.exists()
        assert csv_path.read_text().startswith("subset,contrast,penalty,")
        meta = json.loads(capsys.readouterr().err)
        assert meta["winner"] == "{1,2,3}"

    def test_candidate_file(self, tmp_path, arx_family, ar1_csv):
        cand = tmp_path / "cands.txt"
        cand.write_text("{1,3}\n{1,2,3}\n")
        out = tmp_path / "sel.json"
        assert main(["select", "--data", ar1_csv, "--family", arx_family,
                     "--candidates", str(cand), "--penalty", "log",
                     "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert len(payload["table"]) == 2

    def test_penalty_file(self, tmp_path, arx_family, ar1_csv):
        pen = tmp_path / "pen.csv"
        pen.write_text("n,kappa\n100,2.0\n1000,3.0\n")
        out = tmp_path / "sel.json"
        assert main(["select", "--data", ar1_csv, "--family", arx_family,
                     "--penalty", str(pen), "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["kappa_used"] == 2.0  # n=800 row lookup

    def test_bad_penalty_exit_2(self, arx_family, ar1_csv, capsys):
        assert main(["select", "--data", ar1_csv, "--family", arx_family,
                     "--penalty", "cubic"]) == 2


class TestLimits:
    def test_limits_json(self, tmp_path, arx_family, capsys):
        fam2 = tmp_path / "arx2.toml"
        fam2.write_text('kind = "ARX"\np = 2\n')
        data = tmp_path / "y2.csv"
        assert main(["simulate", "--family", str(fam2), "--theta",
                     "0,0.5,0,1", "--n", "4000", "--seed", "5",
                     "--out", str(data)]) == 0
        out = tmp_path / "lim.json"
        assert main(["limits", "--data", str(data), "--family", str(fam2),
                     "--m-star", "{1,2,4}", "--m-tilde", "{1,2,3,4}",
                     "--kappa", "1.0", "--draws", "20000", "--seed", "2",
                     "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["m_star"] == [1, 2, 4]
        prob = payload["overfit_probability"]
        assert prob["delta"] == 1
        assert 0.0 <= prob["estimate"] <= 1.0

    def test_non_nested_exit_2(self, tmp_path, arx_family, ar1_csv, capsys):
        assert main(["limits", "--data", ar1_csv, "--family", arx_family,
                     "--m-star", "{1,2,3}", "--m-tilde", "{1,2,3}",
                     "--kappa", "1.0"]) == 2


class TestExperiment:
    def test_plan_end_to_end(self, tmp_path, capsys):
        plan = tmp_path / "plan.toml"
        plan.write_text(
            'tag = "consistency"\n'
            "theta_true = [0.0, 0.5, 1.0]\n"
            'candidates = "nested"\n'
            'penalties = ["log"]\n'
            "n_grid = [400]\n"
            "replications = 10\n"
            "base_seed = 4\n"
            "[family]\n"
            'kind = "ARX"\n'
            "p = 1\n"
        )
        out = tmp_path / "report"
        assert main(["experiment", "--plan", str(plan), "--threads", "1",
                     "--plot-data", "--out", str(out)]) == 0
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["m_star"] == [1, 2, 3]
        assert (tmp_path / "report.csv").exists()
        plot = (tmp_path / "report_plot.csv").read_text().splitlines()
        assert plot[0] == "schedule,n,metric,value"
        meta = json.loads(capsys.readouterr().err)
        assert meta["base_seed"] == 4

    def test_missing_plan_exit_2(self, capsys):
        assert main(["experiment", "--plan", "/nope/plan.toml"]) == 2
