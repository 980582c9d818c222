from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from conftest import write_corpus
from specbench.cli import RunConfig, bench, main
from specbench.gateway import ChatRequest, FixtureStore
from specbench.pipeline import read_results


@pytest.fixture
def runner():
    return CliRunner()


def tiny_corpus(tmp_path: Path) -> Path:
    return write_corpus(
        tmp_path / "corpus",
        "clitest",
        [
            {
                "sample_id": "s1",
                "language": "c",
                "source": '#include <stdio.h>\nint main(void){printf("1\\n");return 0;}\n',
                "tests": [("\n", "1\n")],
            }
        ],
    )


def _mk(tmp_path):
    (tmp_path / "corpus").mkdir(parents=True, exist_ok=True)
    return tiny_corpus(tmp_path)


# --- doctor ---------------------------------------------------------------------


def test_doctor_prints_five_version_lines(runner):
    result = runner.invoke(bench, ["doctor"])
    lines = [l for l in result.output.strip().splitlines() if l]
    assert len(lines) == 5
    assert sorted(l.split(":")[0] for l in lines) == ["c", "cpp", "go", "java", "python"]
    all_present = not any("MISSING" in l for l in lines)
    assert result.exit_code == (0 if all_present else 1)


# --- run -------------------------------------------------------------------------


def test_run_unknown_target_is_config_error_naming_target(tmp_path):
    root = _mk(tmp_path)
    code = main(
        ["run", "--corpus", str(root), "--targets", "rust", "--backend", "scripted",
         "--out", str(tmp_path / "r.jsonl")]
    )
    assert code != 0


def test_run_unknown_target_error_line_is_machine_parsable(tmp_path, capsys):
    root = _mk(tmp_path)
    code = main(
        ["run", "--corpus", str(root), "--targets", "rust", "--backend", "scripted",
         "--out", str(tmp_path / "r.jsonl")]
    )
    err = capsys.readouterr().err
    assert code == 1
    assert err.startswith("error: ToolMissing:")
    assert "rust" in err


def test_run_scripted_backend_end_to_end(tmp_path, runner):
    root = _mk(tmp_path)
    out = tmp_path / "results.jsonl"
    result = runner.invoke(
        bench,
        ["run", "--corpus", str(root), "--targets", "python", "--backend", "scripted",
         "--no-repair", "--out", str(out), "--jobs", "1"],
    )
    assert result.exit_code == 0, result.output
    records = read_results(out)
    assert len(records) == 1
    assert records[0]["target_language"] == "python"
    assert (tmp_path / "report.md").exists()
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["config"]["targets"] == ["python"]
    assert "python" in manifest["toolchain_versions"]


def test_run_requires_corpus_and_targets(tmp_path, capsys):
    assert main(["run", "--targets", "python"]) == 2
    root = _mk(tmp_path)
    assert main(["run", "--corpus", str(root)]) == 2


def test_run_replay_without_fixtures_fails(tmp_path, capsys):
    root = _mk(tmp_path)
    code = main(["run", "--corpus", str(root), "--targets", "python",
                 "--out", str(tmp_path / "r.jsonl")])
    err = capsys.readouterr().err
    assert code == 1
    assert "fixtures" in err


def test_config_file_merge_flags_win(tmp_path, runner):
    root = _mk(tmp_path)
    config_path = tmp_path / "config.json"
    config = RunConfig(
        corpus_root=str(root),
        targets=["python"],
        backend="scripted",
        no_repair=True,
        out=str(tmp_path / "from_config.jsonl"),
        jobs=1,
    )
    config_path.write_text(json.dumps(config.to_dict()), encoding="utf-8")

    # flag overrides the config's out path; everything else comes from the file
    flag_out = tmp_path / "from_flag.jsonl"
    result = runner.invoke(
        bench, ["run", "--config", str(config_path), "--out", str(flag_out)]
    )
    assert result.exit_code == 0, result.output
    assert flag_out.exists()
    assert not (tmp_path / "from_config.jsonl").exists()


def test_run_config_round_trip():
    config = RunConfig(corpus_root="x", targets=["c", "go"], approaches=["spec+source"])
    assert RunConfig.from_dict(config.to_dict()) == config


def test_run_config_rejects_unknown_keys():
    from specbench.errors import BenchError

    with pytest.raises(BenchError, match="unknown config"):
        RunConfig.from_dict({"corpus_root": "x", "typo_field": 1})


def test_run_emit_code_writes_tree(tmp_path, runner):
    root = _mk(tmp_path)
    out = tmp_path / "results.jsonl"
    code_dir = tmp_path / "code"
    result = runner.invoke(
        bench,
        ["run", "--corpus", str(root), "--targets", "python", "--backend", "scripted",
         "--no-repair", "--out", str(out), "--emit-code", str(code_dir), "--jobs", "1"],
    )
    assert result.exit_code == 0, result.output
    emitted = list(code_dir.rglob("*.py"))
    assert emitted, "scripted candidate code should be written"


# --- corpus validate ------------------------------------------------------------------


def test_corpus_validate_reports_and_repairs(tmp_path, runner):
    root = write_corpus(
        tmp_path / "c1",
        "fixture",
        [
            {"sample_id": "keep", "language": "python", "source": "print('ab')\n", "tests": [("\n", "ab\n")]},
            {"sample_id": "fix", "language": "python", "source": "print('abcdef')\n", "tests": [("\n", "abc...\n")]},
            {"sample_id": "drop", "language": "python", "source": "print(1)\n", "tests": [("\n", "2\n")]},
        ],
    )
    result = runner.invoke(bench, ["corpus", "validate", str(root)])
    assert result.exit_code == 0, result.output
    assert "keep: ok" in result.output
    assert "fix: prefix-repairable" in result.output
    assert "drop: no valid test case" in result.output

    result = runner.invoke(bench, ["corpus", "validate", str(root), "--repair", "--write"])
    assert result.exit_code == 0, result.output
    manifest = json.loads((root / "manifest.json").read_text())
    assert {s["sample_id"] for s in manifest["samples"]} == {"keep", "fix"}
    assert manifest["excluded"] == [{"sample_id": "drop", "reason": "no valid test case"}]
    # repaired expected output replaced by the actual one
    fixed_out = [s for s in manifest["samples"] if s["sample_id"] == "fix"][0]
    assert (root / fixed_out["tests"][0]["out_file"]).read_text() == "abcdef\n"


def test_corpus_validate_write_requires_repair(tmp_path):
    root = write_corpus(
        tmp_path / "c2",
        "fixture",
        [{"sample_id": "s", "language": "python", "source": "print(1)\n", "tests": [("\n", "1\n")]}],
    )
    assert main(["corpus", "validate", str(root), "--write"]) == 2


# --- report / quality ---------------------------------------------------------------------


def test_report_command_formats(tmp_path, runner):
    results = tmp_path / "results.jsonl"
    record = {
        "sample_id": "s", "dataset": "d", "approach": "spec",
        "source_language": "c", "target_language": "python",
        "candidate_code": "print(1)", "final_code": "print(1)",
        "pre_repair_outcome": "success", "post_repair_outcome": "success",
        "spec_digest": None, "repair": None, "flags": [], "request_digests": [], "error": None,
    }
    results.write_text(json.dumps(record) + "\n", encoding="utf-8")
    out = tmp_path / "report.csv"
    result = runner.invoke(bench, ["report", "--in", str(results), "--format", "csv", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert out.read_text().startswith("dataset,source,target,approach,phase")


def test_quality_command_end_to_end(tmp_path, runner):
    results = tmp_path / "results.jsonl"
    record = {
        "sample_id": "s", "dataset": "d", "approach": "spec",
        "source_language": "python", "target_language": "c",
        "candidate_code": "int main(void){return 0;}\n",
        "final_code": "int main(void){return 0;}\n",
        "pre_repair_outcome": "success", "post_repair_outcome": "success",
        "spec_digest": None, "repair": None, "flags": [], "request_digests": [], "error": None,
    }
    results.write_text(json.dumps(record) + "\n", encoding="utf-8")
    export = tmp_path / "export.json"
    export.write_text(
        json.dumps(
            {
                "issues": [
                    {"rule": "c:S1", "severity": "BLOCKER",
                     "message": "Do something safer.",
                     "component": "d/spec/python-c/pre_repair/s.c"},
                ]
            }
        ),
        encoding="utf-8",
    )
    out = tmp_path / "quality.csv"
    dist = tmp_path / "dist.csv"
    result = runner.invoke(
        bench,
        ["quality", "--issues", str(export), "--compiled", str(results),
         "--out", str(out), "--distribution", str(dist)],
    )
    assert result.exit_code == 0, result.output
    assert out.read_text().splitlines()[0].startswith("dataset,approach")
    assert dist.read_text().splitlines()[0] == "dataset,method,file,density"
    assert "100.00%  Do something safer." in result.output


# --- gateway ping ----------------------------------------------------------------------------


def test_gateway_ping_scripted(runner):
    result = runner.invoke(bench, ["gateway", "ping", "--backend", "scripted"])
    assert result.exit_code == 0
    assert "scripted: ok" in result.output


def test_gateway_ping_replay_counts_entries(tmp_path, runner):
    path = tmp_path / "f.jsonl"
    store = FixtureStore(path)
    store.append(ChatRequest("x"), "y")
    result = runner.invoke(bench, ["gateway", "ping", "--backend", "replay", "--fixtures", str(path)])
    assert result.exit_code == 0
    assert "1 fixture entries" in result.output
