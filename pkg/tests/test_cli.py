"""Command-line interface contract tests."""

import json
import os

import pytest

from matchcrs.cli import main
from matchcrs.graph import load_instance


def read_records(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def strip_wall_time(records):
    return [{k: v for k, v in rec.items() if k != "wall_time"} for rec in records]


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 64

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["beta", "--bogus", "1"])
        assert exc.value.code == 64

    def test_input_error_exit_one(self, capsys):
        assert main(["estimate", "--scheme", "alg4", "--instance", "torus:3",
                     "--trials", "10"]) == 1
        assert "input error" in capsys.readouterr().err

    def test_capability_error_exit_two(self, capsys, tmp_path):
        # bipartite-only scheme on a non-bipartite instance
        assert main(["estimate", "--scheme", "alg1", "--instance", "rgen:5,0.9,0.9,1",
                     "--trials", "100"]) == 2
        assert "capability error" in capsys.readouterr().err


class TestConstants:
    def test_beta_prints_value(self, capsys):
        assert main(["beta", "--b", "1"]) == 0
        out = capsys.readouterr().out
        assert "0.4762" in out

    def test_gamma_records_include_series(self, capsys, tmp_path):
        out = str(tmp_path / "g.json")
        assert main(["gamma", "--b", "0.5", "--out", out]) == 0
        rec = read_records(out)[0]
        assert rec["gamma"] == pytest.approx(rec["series"], abs=1e-10)

    def test_grid_sweep_with_plot(self, capsys, tmp_path):
        png = str(tmp_path / "beta.png")
        assert main(["beta", "--grid", "0.2:1:5", "--plot", png]) == 0
        assert os.path.getsize(png) > 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 5


class TestEstimate:
    def test_outputs_and_replay_determinism(self, capsys, tmp_path):
        out = str(tmp_path / "a.json")
        csv_path = str(tmp_path / "a.csv")
        png = str(tmp_path / "a.png")
        args = ["estimate", "--scheme", "alg4", "--instance", "path3:0.01",
                "--trials", "4000", "--seed", "5", "--out", out,
                "--csv", csv_path, "--plot", png]

        def normalized_lines():
            with open(out) as fh:
                return [
                    json.dumps(
                        {k: v for k, v in json.loads(line).items() if k != "wall_time"},
                        sort_keys=True,
                    )
                    for line in fh
                ]

        assert main(args) == 0
        first = normalized_lines()
        assert main(args) == 0
        # identical argv: byte-identical records apart from the wall-time field
        assert normalized_lines() == first
        with open(csv_path) as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0] == "edge,mean,ci99"
        assert len(lines) == 4  # header + three edges
        assert os.path.getsize(png) > 0

    def test_env_seed_fallback(self, capsys, tmp_path, monkeypatch):
        out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        monkeypatch.setenv("CRS_DEFAULT_SEED", "77")
        assert main(["estimate", "--scheme", "alg4", "--instance", "path3:0.01",
                     "--trials", "2000", "--out", out1]) == 0
        monkeypatch.delenv("CRS_DEFAULT_SEED")
        assert main(["estimate", "--scheme", "alg4", "--instance", "path3:0.01",
                     "--trials", "2000", "--seed", "77", "--out", out2]) == 0
        assert strip_wall_time(read_records(out1))[1:] == strip_wall_time(read_records(out2))[1:]

    def test_every_scheme_token_estimates(self, capsys, tmp_path):
        for token in ["ex1.4", "ex2.2", "alg1", "alg2", "ex4.1", "alg3",
                      "alg4", "alg5", "alg6", "ref-bipartition", "ref-2of3"]:
            out = str(tmp_path / f"{token}.json")
            code = main(["estimate", "--scheme", token, "--instance",
                         "rbip:3,0.8,1.0,4", "--trials", "2000", "--seed", "1",
                         "--out", out])
            assert code == 0, token
            summary = read_records(out)[-1]
            assert 0.0 <= summary["min_ratio"] <= 1.0

    def test_jobs_flag_does_not_change_results(self, capsys, tmp_path):
        out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        base = ["estimate", "--scheme", "alg2", "--instance", "knn:4,1",
                "--trials", "20000", "--seed", "9"]
        assert main(base + ["--out", out1]) == 0
        assert main(base + ["--jobs", "3", "--out", out2]) == 0
        r1 = [r for r in read_records(out1) if r.get("record") == "edge"]
        r2 = [r for r in read_records(out2) if r.get("record") == "edge"]
        assert r1 == r2


class TestVerify:
    def test_builtin_battery_passes(self, capsys, tmp_path):
        out = str(tmp_path / "v.csv")
        code = main(["verify", "--trials", "4000", "--seed", "3", "--out", out,
                     "--max-edges", "6", "--scheme", "alg3", "--scheme", "ex4.1"])
        assert code == 0
        with open(out) as fh:
            header = fh.readline().strip()
        assert header == "check,instance,scheme,passed,detail"

    def test_single_graph_file(self, capsys, tmp_path):
        inst = str(tmp_path / "inst.json")
        assert main(["generate", "--instance", "path3:0.2", "--out", inst]) == 0
        out = str(tmp_path / "v.csv")
        assert main(["verify", "--graph", inst, "--trials", "4000", "--seed", "1",
                     "--out", out, "--scheme", "alg4"]) == 0


class TestDecomposeAndGenerate:
    def test_generate_writes_loadable_instance(self, capsys, tmp_path):
        path = str(tmp_path / "inst.json")
        assert main(["generate", "--instance", "knn:3,1", "--out", path]) == 0
        g, x, bip = load_instance(path)
        assert g.edge_count == 9
        assert bip is not None

    def test_decompose_rational_exact(self, capsys, tmp_path):
        inst = str(tmp_path / "inst.json")
        main(["generate", "--instance", "path3:1/4", "--out", inst])
        marg = str(tmp_path / "marg.json")
        with open(marg, "w") as fh:
            json.dump({"values": ["3/4", "1/4", "1/2"]}, fh)
        out = str(tmp_path / "combo.csv")
        assert main(["decompose", "--graph", inst, "--marginals", marg,
                     "--out", out]) == 0
        from fractions import Fraction

        with open(out) as fh:
            rows = fh.read().strip().splitlines()[1:]
        acc = [Fraction(0)] * 3
        total = Fraction(0)
        for row in rows:
            weight, _, edges = row.partition(",")
            total += Fraction(weight)
            for tok in edges.strip('"').split(","):
                if tok:
                    acc[int(tok)] += Fraction(weight)
        assert total == 1
        assert acc == [Fraction(3, 4), Fraction(1, 4), Fraction(1, 2)]

    def test_decompose_infeasible_marginal_is_input_error(self, capsys, tmp_path):
        inst = str(tmp_path / "inst.json")
        main(["generate", "--instance", "path3:1/4", "--out", inst])
        marg = str(tmp_path / "marg.json")
        with open(marg, "w") as fh:
            json.dump({"values": [0.9, 0.9, 0.1]}, fh)
        assert main(["decompose", "--graph", inst, "--marginals", marg,
                     "--out", str(tmp_path / "c.csv")]) == 1


class TestPipeline:
    def test_pipeline_record(self, capsys, tmp_path):
        out = str(tmp_path / "p.json")
        png = str(tmp_path / "p.png")
        code = main(["pipeline", "--function", "coverage", "--scheme", "alg1",
                     "--instance", "rbip:3,0.8,1.0,2", "--steps", "10",
                     "--samples", "8", "--trials", "400", "--seed", "6",
                     "--out", out, "--plot", png])
        assert code == 0
        rec = read_records(out)[0]
        assert rec["rounded_mean"] >= rec["guarantee"] - 5 * rec["rounded_stderr"] - 0.3
        assert os.path.getsize(png) > 0

    def test_limit_subcommand(self, capsys, tmp_path):
        out = str(tmp_path / "l.json")
        assert main(["limit", "--n", "8", "--out", out]) == 0
        rec = read_records(out)[0]
        assert rec["value"] == pytest.approx(0.51, abs=0.02)
        assert rec["asymptote"] == pytest.approx(0.4762, abs=1e-3)
