import json

import pytest
from click.testing import CliRunner

from wiaszz.cli import main
from wiaszz.evaluation import FixRecord, write_dataset
from wiaszz.workitems import matrix_from_csv


@pytest.fixture
def run(tmp_path):
    def invoke(*args, env=None):
        runner = CliRunner()
        return runner.invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)
    return invoke


def _wi_line(output):
    return next(line for line in output.splitlines() if line.startswith("work items"))


def test_detect_wi_wi_layout(run, wi_layout, tmp_path):
    dump = tmp_path / "m.csv"
    res = run("detect-wi", wi_layout.path, wi_layout["a"], "--issue-date", wi_layout.issue_date, "--dump-matrix", dump,
              "--cache-dir", tmp_path / "c")
    assert res.exit_code == 0, res.output
    listed = set(_wi_line(res.output).split(": ")[1].split())
    assert listed == {wi_layout[x] for x in "abfg"}
    assert "(factor 0.7)" in res.output
    matrix = matrix_from_csv(dump.read_text())
    assert matrix.fc == wi_layout["a"] and matrix.n == 3


def test_detect_wi_factor_one_and_half(run, wi_layout):
    res = run("detect-wi", wi_layout.path, wi_layout["a"], "--factor", "1.0")
    assert set(_wi_line(res.output).split(": ")[1].split()) == {wi_layout[x] for x in "abfg"}
    res = run("detect-wi", wi_layout.path, wi_layout["a"], "--factor", "0.5")
    assert set(_wi_line(res.output).split(": ")[1].split()) == {wi_layout[x] for x in "abdfg"}


def test_detect_wi_bad_factor(run, wi_layout):
    res = run("detect-wi", wi_layout.path, wi_layout["a"], "--factor", "1.5")
    assert res.exit_code == 2


def test_detect_wi_empty_fix(run, misc):
    res = run("detect-wi", misc.path, misc["test_only"])
    assert res.exit_code == 1


def test_find_bic_work_item(run, wi_layout):
    res = run("find-bic", wi_layout.path, wi_layout["a"], "--issue-date", wi_layout.issue_date)
    assert res.exit_code == 0
    assert res.output.splitlines()[0] == f"work_item: {wi_layout['f']}"


def test_find_bic_iso_date_and_json(run, wi_layout):
    from datetime import datetime, timezone
    iso = datetime.fromtimestamp(wi_layout.issue_date, tz=timezone.utc).isoformat()
    res = run("find-bic", wi_layout.path, wi_layout["a"][:10], "--issue-date", iso, "--json")
    data = json.loads(res.output)
    assert data["candidates"] == [wi_layout["f"]] and data["issue_date"] == wi_layout.issue_date


def test_find_bic_fallback_none(run, no_overlap):
    res = run("find-bic", no_overlap.path, no_overlap["fc"], "--issue-date", no_overlap.issue_date)
    assert res.output.splitlines()[0] == "fallback: (none)"


def test_find_bic_no_issue_filter(run, wi_layout):
    res = run("find-bic", wi_layout.path, wi_layout["a"], "--no-issue-filter")
    assert res.output.splitlines()[0] == f"work_item: {wi_layout['b']}"


def test_find_bic_simulated(run, insertion_fix):
    res = run("find-bic", insertion_fix.path, insertion_fix["fc"], "--simulate", insertion_fix["bic"])
    assert res.output.splitlines()[0] == f"work_item: {insertion_fix['bic']}"


def test_find_bic_requires_issue_date(run, wi_layout):
    res = run("find-bic", wi_layout.path, wi_layout["a"])
    assert res.exit_code == 1


def test_find_bic_unknown_repo(run, tmp_path):
    res = run("find-bic", tmp_path, "0" * 40, "--no-issue-filter")
    assert res.exit_code == 1


def test_find_bic_external_candidates(run, no_overlap, tmp_path):
    csv = tmp_path / "c.csv"
    csv.write_text("fc,candidate,commit_time,touched_line_count\n"
                   f"{no_overlap['fc']},{no_overlap['root']},{no_overlap.times['root']},2\n")
    res = run("find-bic", no_overlap.path, no_overlap["fc"], "--issue-date", no_overlap.issue_date,
              "--candidates", csv)
    assert res.output.splitlines()[0] == f"fallback: {no_overlap['root']}"


@pytest.fixture
def dataset(tmp_path, wi_layout, insertion_fix, no_overlap):
    recs = [
        FixRecord("wi_layout", str(wi_layout.path), wi_layout["a"], frozenset({wi_layout["f"]}), wi_layout.issue_date),
        FixRecord("insertion_fix", str(insertion_fix.path), insertion_fix["fc"], frozenset({insertion_fix["bic"]})),
        FixRecord("none", str(no_overlap.path), no_overlap["fc"], frozenset({no_overlap["root"]}),
                  no_overlap.issue_date),
        FixRecord("gone", str(tmp_path / "missing"), "0" * 40, frozenset({"1" * 40}), 5),
    ]
    path = tmp_path / "dataset.json"
    write_dataset(recs, path)
    return path


def test_evaluate(run, dataset, tmp_path):
    out = tmp_path / "out"
    res = run("evaluate", dataset, "--out-dir", out, "--parallelism", 2)
    assert res.exit_code == 0, res.output
    assert "part A (work item): 2  part B (fallback): 1  errors: 1" in res.output
    metrics = json.loads((out / "metrics.json").read_text())["metrics"]
    assert (metrics["tp"], metrics["fp"], metrics["oracle_bics"]) == (2, 0, 4)
    for name in ("predictions.csv", "predictions.jsonl", "diagnostics.jsonl", "config.json"):
        assert (out / name).exists()
    assert len((out / "predictions.csv").read_text().splitlines()) == 5


def test_evaluate_exclusions_and_rerun(run, dataset, tmp_path):
    ex = tmp_path / "ex.txt"
    ex.write_text("gone\n")
    first, second = tmp_path / "o1", tmp_path / "o2"
    run("evaluate", dataset, "--out-dir", first, "--exclusions", ex)
    run("evaluate", dataset, "--out-dir", second, "--exclusions", ex, "--parallelism", 3)
    for name in ("metrics.json", "predictions.csv", "predictions.jsonl", "diagnostics.jsonl"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    report = json.loads((first / "metrics.json").read_text())
    assert report["excluded"] == ["gone"] and report["summary"]["errors"] == 0


def test_sweep(run, dataset, tmp_path):
    out = tmp_path / "sw"
    res = run("sweep", dataset, "--out-dir", out)
    assert res.exit_code == 0, res.output
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "factor,fcs_with_workitems,total_workitems,tp,fp,recall,precision,f1"
    assert [l.split(",")[0] for l in lines[1:]] == ["0.3", "0.5", "0.7", "0.9"]
    assert json.loads((out / "config.json").read_text())["factors"] == ["0.3", "0.5", "0.7", "0.9"]


def test_sweep_bad_factors(run, dataset, tmp_path):
    assert run("sweep", dataset, "--factors", "0.5,0").exit_code == 2


def test_config_file_and_overrides(run, wi_layout, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("factor: 0.5\nissue-filter: false\n")
    res = run("--config", cfg, "detect-wi", wi_layout.path, wi_layout["a"])
    assert "(factor 0.5)" in res.output
    res = run("--config", cfg, "detect-wi", wi_layout.path, wi_layout["a"], "--factor", "0.9")
    assert "(factor 0.9)" in res.output
    res = run("--config", cfg, "find-bic", wi_layout.path, wi_layout["a"])
    assert res.output.splitlines()[0] == f"work_item: {wi_layout['b']}"


def test_config_test_paths(run, wi_layout, tmp_path):
    # treating src/ as a test directory leaves the fix without methods
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("test_paths:\n  segments: [src]\n")
    res = run("--config", cfg, "detect-wi", wi_layout.path, wi_layout["a"])
    assert res.exit_code == 1
    assert "modified no methods" in res.output


def test_env_vars(run, dataset, tmp_path):
    out = tmp_path / "env"
    res = run("evaluate", dataset, "--out-dir", out,
              env={"WIASZZ_PARALLELISM": "2", "WIASZZ_CACHE_DIR": str(tmp_path / "cache")})
    assert res.exit_code == 0
    res = run("evaluate", dataset, "--out-dir", out, env={"WIASZZ_PARALLELISM": "0"})
    assert res.exit_code == 2
