import json

import pytest

from epnas import cli, engine


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture()
def macro_arch_file(tmp_path):
    path = tmp_path / "arch.json"
    path.write_text(
        json.dumps(
            {
                "space": "macro",
                "layers": [
                    {"op": "conv_3x3", "skips": []},
                    {"op": "max_pool_3x3", "skips": [1]},
                ],
            }
        )
    )
    return path


class TestSearchCommand:
    def test_level1_smoke(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli(
            "search", "--space", "macro", "--max-level", "1",
            "--iterations", "1", "--seed", "3", "--out", str(out),
        )
        assert code == 0
        for name in ("history.jsonl", "result.json", "report.json", "surrogate.ckpt"):
            assert (out / name).exists(), name
        result = json.loads((out / "result.json").read_text())
        assert result["version"] == engine.ENGINE_VERSION
        assert result["best_arch"]["space"] == "macro"
        assert len(result["best_arch"]["layers"]) == 1
        assert json.loads((out / "report.json").read_text())["unique_architectures"] == 6
        # one progress line per evaluation on stderr
        assert capsys.readouterr().err.count("eval step=") == 6

    def test_missing_config_exits_2_naming_path(self, capsys):
        code = run_cli("search", "--config", "/no/such/config.json")
        assert code == 2
        assert "/no/such/config.json" in capsys.readouterr().err

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"space": "macro", "wat": 1}))
        assert run_cli("search", "--config", str(cfg)) == 2
        assert "wat" in capsys.readouterr().err

    def test_config_file_plus_flag_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "space": "macro",
                    "max_level": 2,
                    "outer_iterations": 2,
                    "surrogate_epochs": 2,
                    "out_dir": str(tmp_path / "from-config"),
                }
            )
        )
        code = run_cli("search", "--config", str(cfg), "--iterations", "1", "--seed", "1")
        assert code == 0
        report = json.loads((tmp_path / "from-config" / "report.json").read_text())
        assert report["tau_trace"] == [8.0]  # one iteration, from the flag

    def test_greedy_flag_produces_second_valid_run(self, tmp_path):
        args = ["search", "--space", "macro", "--max-level", "2", "--iterations", "1",
                "--seed", "2"]
        assert run_cli(*args, "--out", str(tmp_path / "a")) == 0
        assert run_cli(*args, "--greedy-topk", "--out", str(tmp_path / "b")) == 0
        for d in ("a", "b"):
            doc = json.loads((tmp_path / d / "result.json").read_text())
            assert 0.0 <= doc["accuracy"] <= 1.0
        assert json.loads((tmp_path / "b" / "result.json").read_text())["config"]["greedy_topk"]

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_SEED, "17")
        out = tmp_path / "envrun"
        assert run_cli("search", "--space", "macro", "--max-level", "1",
                       "--iterations", "1", "--out", str(out)) == 0
        cfgdoc = json.loads((out / "result.json").read_text())["config"]
        assert cfgdoc["seed_search"] == 17
        assert cfgdoc["seed_evaluator"] == 19

    def test_dead_external_worker_exits_3(self, tmp_path):
        code = run_cli(
            "search", "--space", "macro", "--max-level", "1", "--iterations", "1",
            "--evaluator", "external", "--external-cmd", "/bin/false",
            "--out", str(tmp_path / "x"),
        )
        assert code == 3


class TestCardinality:
    def test_macro_12_digits(self, capsys):
        assert run_cli("cardinality", "macro", "12") == 0
        out = capsys.readouterr().out
        assert "160,618,186,625,454,535,808,756,219,904" in out
        assert "1.606e+29" in out

    def test_micro_1(self, capsys):
        assert run_cli("cardinality", "micro", "1") == 0
        assert "= 196 " in capsys.readouterr().out

    def test_macro_1(self, capsys):
        assert run_cli("cardinality", "macro", "1") == 0
        assert "= 6 " in capsys.readouterr().out

    def test_bad_level_exits_2(self):
        assert run_cli("cardinality", "macro", "0") == 2


class TestExport:
    def test_dot_output(self, macro_arch_file, capsys):
        assert run_cli("export", str(macro_arch_file), "--format", "dot") == 0
        out = capsys.readouterr().out
        assert out.startswith("digraph arch {")
        assert "stem -> l1;" in out

    def test_json_round_trip_idempotent(self, macro_arch_file, tmp_path, capsys):
        assert run_cli("export", str(macro_arch_file), "--format", "json") == 0
        once = capsys.readouterr().out
        again_file = tmp_path / "again.json"
        again_file.write_text(once)
        assert run_cli("export", str(again_file), "--format", "json") == 0
        assert capsys.readouterr().out == once

    def test_invalid_op_exits_2_naming_field(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"space": "macro", "layers": [{"op": "conv_9x9", "skips": []}]}))
        assert run_cli("export", str(bad)) == 2
        assert "conv_9x9" in capsys.readouterr().err

    def test_missing_file_exits_2(self, capsys):
        assert run_cli("export", "/no/arch.json") == 2


class TestReportCommand:
    @pytest.fixture()
    def run_dir(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli("search", "--space", "macro", "--max-level", "2",
                       "--iterations", "1", "--seed", "5", "--out", str(out)) == 0
        return out

    def test_table_from_run_dir(self, run_dir, capsys):
        assert run_cli("report", str(run_dir)) == 0
        out = capsys.readouterr().out
        assert "best accuracy" in out

    def test_json_from_history_file(self, run_dir, capsys):
        assert run_cli("report", str(run_dir / "history.jsonl"), "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["total_evaluations"] == 31  # 6 + 25
        assert doc["steps"][0]["entropy"] is None

    def test_missing_path_exits_2(self):
        assert run_cli("report", "/no/such/dir") == 2
