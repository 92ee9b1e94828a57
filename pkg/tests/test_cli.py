import json

import pytest

from spdemax.cli import main, read_config
from spdemax.experiments import REGISTRY, ExperimentConfig, list_experiments


def test_list_contains_required_names_in_stable_order(capsys):
    text = list_experiments()
    assert "envelope_lemma_2_22_1" in text
    assert "decay_exponent_remark_2_23_1" in text
    assert text == list_experiments()
    assert main(["--list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split()[0] for ln in lines] == list(REGISTRY)


def test_every_experiment_maps_to_a_criterion():
    crit = sorted(e.criterion for e in REGISTRY.values())
    assert crit == list(range(1, 12))


def test_unknown_experiment_lists_registry(capsys, tmp_path):
    assert main(["--experiment", "nope", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "gamma_bounds" in err and "nope" in err


def test_config_errors_name_the_key(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("experiment = gamblers_ruin\nn_paths = 5\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "n_paths" in capsys.readouterr().err
    cfg.write_text("experiment = gamblers_ruin\nwidth_furlongs = 3\n")
    assert main(["--config", str(cfg)]) == 2
    assert "width_furlongs" in capsys.readouterr().err
    assert main(["--experiment", "gamblers_ruin", "--seed", "-1"]) == 2


def test_read_config_rejects_duplicates_and_strips_comments(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# header\nseed = 3  # trailing\n\nhorizon_T = 0.5\n")
    assert read_config(cfg) == {"seed": "3", "horizon_T": "0.5"}
    cfg.write_text("seed = 3\nseed = 4\n")
    with pytest.raises(ValueError, match="duplicate"):
        read_config(cfg)


def test_paths_override_and_quick_defaults():
    cfg = ExperimentConfig("gamblers_ruin", quick=True, paths=321)
    assert cfg.resolved()["n_paths"] == 321
    assert ExperimentConfig("gamblers_ruin", quick=True).resolved()["n_paths"] == 2_000


@pytest.mark.parametrize("name", ["gamblers_ruin", "scaling_identity"])
def test_rerun_is_byte_identical(tmp_path, name):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["--experiment", name, "--quick", "--seed", "11", "--out", str(out)]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert "summary.json" in files and any(f.endswith(".csv") for f in files)
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    summary = json.loads((outs[0] / "summary.json").read_text())
    assert summary["seed"] == 11 and summary["passed"] is True
    assert all(c["verdict"] == "pass" for c in summary["checks"])


def test_seed_changes_output(tmp_path):
    for s in (1, 2):
        assert main(["--experiment", "gamblers_ruin", "--quick", "--seed", str(s), "--out", str(tmp_path / str(s))]) == 0
    a = sorted((tmp_path / "1").glob("*.csv"))[0]
    assert a.read_bytes() != (tmp_path / "2" / a.name).read_bytes()
