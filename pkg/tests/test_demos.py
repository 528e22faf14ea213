"""The demo scripts must stay runnable; each is executed end to end."""

import os
import runpy
import sys

import pytest

DEMOS = os.path.join(os.path.dirname(__file__), os.pardir, "demos")


@pytest.mark.parametrize(
    "name",
    [
        "01_load_and_index.py",
        "02_negative_sampling.py",
        "03_scoring_models.py",
        "04_train_and_evaluate.py",
        "05_rgcn_encoder.py",
        "06_rule_injection.py",
        "07_hyperparameter_search.py",
    ],
)
def test_demo_runs(name, capsys):
    runpy.run_path(os.path.join(DEMOS, name), run_name="__main__")
    assert capsys.readouterr().out.strip()


def test_benchmark_demo_reports_missing_dataset(capsys, monkeypatch, tmp_path):
    if os.path.isdir(os.path.join("data", "FB15K-237")):
        pytest.skip("benchmark dataset present; covered by the acceptance suite")
    monkeypatch.delenv("KGEMBED_FB15K237", raising=False)
    monkeypatch.delenv("KGEMBED_DATA_ROOT", raising=False)
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(sys, "argv", ["08_fb15k237_benchmark.py", "smoke"])
    with pytest.raises(SystemExit) as exc:
        runpy.run_path(os.path.join(DEMOS, "08_fb15k237_benchmark.py"), run_name="__main__")
    assert exc.value.code == 1
    assert "FB15K-237 not found" in capsys.readouterr().out
