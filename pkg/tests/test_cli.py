import pytest

from main import main
from src.core.file_manager import load_json
from src.core.patrol_graph import load_graph
from src.learning.checkpoint import save_checkpoint

from .conftest import ROOT

DESK = str(ROOT / "graphs" / "desk8.txt")


def test_graph_generation_is_deterministic(tmp_path):
    first, second = tmp_path / "a.txt", tmp_path / "b.txt"
    for path in (first, second):
        assert main(["graph", "generate", "--nodes", "10", "--seed", "3", "--output", str(path)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert load_graph(first.read_text(encoding="utf-8")).node_count == 10


def test_graph_validate_reports_summary(capsys):
    assert main(["graph", "validate", DESK]) == 0
    assert "8 nodos" in capsys.readouterr().out


def test_graph_validate_rejects_small_action_space():
    assert main(["graph", "validate", DESK, "--max-neighbors", "2"]) == 1


def test_graph_validate_rejects_malformed_file(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("nodes 2\nnode 0 0 0\n", encoding="utf-8")
    assert main(["graph", "validate", str(bad)]) == 1


def test_magec_without_checkpoint_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["evaluate", "--graph", DESK, "--policy", "magec", "--output-dir", str(tmp_path)])
    assert info.value.code == 2


def test_evaluate_random_policy(tmp_path):
    output = tmp_path / "eval"
    code = main(["evaluate", "--graph", DESK, "--policy", "random", "--n-agents", "2", "--horizon", "12",
                 "--repeats", "2", "--attrition", "6:1", "--output-dir", str(output)])
    assert code == 0
    summary = load_json(output / "summary.json")
    assert summary["attrition"] == [{"step": 6, "agent": 1}]
    assert len(summary["runs"]) == 2


def test_evaluate_reads_config_file(tmp_path):
    config = tmp_path / "eval.cfg"
    config.write_text(f"graph_path={DESK}\npolicy=greedy\nn_agents=2\nhorizon=10\nrepeats=1\n", encoding="utf-8")
    output = tmp_path / "out"
    assert main(["evaluate", "--config", str(config), "--output-dir", str(output)]) == 0
    assert load_json(output / "summary.json")["policy"] == "greedy"


def test_policy_info_prints_architecture(tmp_path, small_actor, capsys):
    save_checkpoint(tmp_path, small_actor, None, {"zeta_scale": 40.0})
    assert main(["policy-info", "--checkpoint", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "parameter_count" in out
    assert "zeta_scale" in out


def test_compare_missing_folder_fails(tmp_path):
    assert main(["compare", str(tmp_path / "missing"), "--output-dir", str(tmp_path / "cmp")]) == 1


def test_train_without_graph_fails(tmp_path):
    assert main(["train", "--total-env-steps", "0", "--output-dir", str(tmp_path)]) == 1
