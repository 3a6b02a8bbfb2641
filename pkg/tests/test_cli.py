import json
import subprocess
import sys

import pytest

from rehab_extract import __version__
from rehab_extract.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.mark.parametrize("argv", [["--help"], ["eval", "--help"], ["gold", "kappa", "--help"], ["prompts", "run", "--help"]])
def test_help_exits_zero(argv, capsys):
    assert main(argv) == 0
    assert "usage:" in capsys.readouterr().out


def test_version(capsys):
    assert main(["--version"]) == 0
    out = capsys.readouterr().out
    assert out.startswith(f"rehab-extract {__version__}\n") and "formats:" in out


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == 2
    assert main([]) == 2
    assert main(["tag", "--sequences", "x.jsonl"]) == 2


def test_runtime_errors(tmp_path):
    assert run("tag", "--rules", tmp_path / "missing.jsonl", "--sequences", tmp_path / "s.jsonl",
               "--out", tmp_path / "o.jsonl") == 1
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "blue"}))
    assert run("--config", cfg, "--version") == 1
    cfg.write_text(json.dumps({"synth": {"sections": 3}}))
    assert run("--config", cfg, "--version") == 1
    cfg.write_text("{not json")
    assert run("--config", cfg, "--version") == 1
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{}\n")
    assert run("gold", "validate", "--gold", bad) == 1


def test_config_supplies_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 7, "synth": {"n_sections": 12, "items_min": 3, "items_max": 4}}))
    assert run("--config", cfg, "synth", "--out", tmp_path / "a.jsonl") == 0
    assert run("synth", "--seed", 7, "--sections", 12, "--items-min", 3, "--items-max", 4,
               "--out", tmp_path / "b.jsonl") == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    # command-line flags beat the config file
    assert run("--config", cfg, "synth", "--sections", 5, "--out", tmp_path / "c.jsonl") == 0
    assert (tmp_path / "c.jsonl").read_bytes() != (tmp_path / "a.jsonl").read_bytes()


def pipeline(d):
    """synth -> tag -> train -> predict -> prompts -> eval, all through the CLI."""
    d.mkdir(parents=True, exist_ok=True)
    gold = d / "gold.jsonl"
    fast = ["--max-epochs", 300, "--ada-estimators", 10, "--gb-estimators", 5]
    steps = [
        ["synth", "--seed", 5, "--sections", 80, "--train-per-origin", 30, "--typo-rate", 0.02, "--out", gold],
        ["gold", "validate", "--gold", gold],
        ["tag", "--sequences", gold, "--out", d / "spans.jsonl"],
        ["train", "--kind", "ada", "--gold", gold, "--out", d / "models", *fast],
        ["predict", "--models", d / "models", "--sequences", gold, "--out", d / "labels.jsonl"],
        ["prompts", "build", "--gold", gold, "--concepts", "rom_active,loc_knee", "--out", d / "prompts.jsonl"],
        ["prompts", "run", "--gold", gold, "--concepts", "rom_active,loc_knee", "--cache", d / "cache.jsonl",
         "--out", d / "prompt_eval.json"],
        ["eval", "--gold", gold, "--pred", f"rules={d / 'spans.jsonl'}", d / "labels.jsonl", "--out", d / "report"],
    ]
    for argv in steps:
        assert run(*argv) == 0, argv
    return d


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    return pipeline(root / "a"), pipeline(root / "b")


def test_pipeline_outputs(two_runs):
    d, _ = two_runs
    report = json.loads((d / "report" / "report.json").read_text())
    assert report["methods"] == ["rules NER", "rules sequence", "AdaBoost"]
    assert report["rows"]
    for row in report["rows"]:
        assert row["train_support"] >= 10 and row["test_support"] >= 10
        assert set(row["scores"]) == set(report["methods"])
    assert "| Average |" in (d / "report" / "report.md").read_text()
    assert any(p.name.startswith("model-") for p in (d / "models").iterdir())
    prompts = [json.loads(line) for line in (d / "prompts.jsonl").read_text().splitlines()]
    assert {p["concept_id"] for p in prompts} == {"rom_active", "loc_knee"}
    scored = json.loads((d / "prompt_eval.json").read_text())
    assert scored["prompts_sent"] == len(prompts) and scored["prompts_cached"] == 0


def test_prompt_run_resumes_from_cache(two_runs):
    d, _ = two_runs
    out = d / "again.json"
    assert run("prompts", "run", "--gold", d / "gold.jsonl", "--concepts", "rom_active,loc_knee",
               "--cache", d / "cache.jsonl", "--out", out) == 0
    again, first = json.loads(out.read_text()), json.loads((d / "prompt_eval.json").read_text())
    assert again["prompts_sent"] == 0 and again["prompts_cached"] == first["prompts_sent"]
    assert again["concepts"] == first["concepts"]


def test_pipeline_byte_identical(two_runs):
    a, b = two_runs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name not in {"again.json"})
    assert len(files) > 8
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rehab_extract", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("rehab-extract")
