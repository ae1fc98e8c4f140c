"""Command-line entry points."""
from __future__ import annotations

import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import click
import yaml

from . import evaluation as ev
from .gitrepo import GitError, open_repository
from .methods import Diagnostics, TestPathPolicy, modified_methods
from .szz import FALLBACKS, CandidateSet, candidates_from_csv
from .wia import (
    WORK_ITEM,
    WiaConfig,
    analyze_dataset,
    analyze_fix,
    decide,
    decide_dataset,
    history_change_sets,
    mining_window_start,
    summarize,
)
from .workitems import (
    Factor,
    build_tracking_matrix,
    detect_work_items,
    matrix_to_csv,
)

logger = logging.getLogger("wiaszz")

COMMANDS = ("detect-wi", "find-bic", "evaluate", "sweep")


def _load_config(ctx, param, value):
    if value is None:
        return None
    data = yaml.safe_load(Path(value).read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise click.BadParameter("config file must hold a mapping")
    settings = {k.replace("-", "_"): v for k, v in data.items()}
    ctx.default_map = {cmd: dict(settings) for cmd in COMMANDS}
    ctx.meta["test_paths"] = settings.get("test_paths")
    return value


def _factor(ctx, param, value):
    try:
        return Factor(value)
    except (ValueError, TypeError) as exc:
        raise click.BadParameter(str(exc))


def _timestamp(ctx, param, value):
    if value is None:
        return None
    try:
        return ev.parse_timestamp(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc))


def _offset(ctx, param, value):
    try:
        ev.parse_offset(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc))
    return value


def wia_options(fn):
    options = [
        click.option("--factor", default="0.7", show_default=True, callback=_factor,
                     help="Work-item threshold in (0, 1]."),
        click.option("--lookback-days", default=30, show_default=True, type=click.IntRange(min=1),
                     help="Mining window before the issue report, in days."),
        click.option("--max-commits", default=10000, show_default=True, type=click.IntRange(min=1)),
        click.option("--fallback", type=click.Choice(FALLBACKS), default="b", show_default=True,
                     help="Baseline used when no work item qualifies."),
        click.option("--issue-filter/--no-issue-filter", default=True, show_default=True),
        click.option("--one-commit-filter/--no-one-commit-filter", default=False, show_default=True),
        click.option("--offset", default="q2", show_default=True, callback=_offset,
                     help="Simulated issue dates: q2, legacy or a number in [0, 1]."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _config(ctx, factor, lookback_days, max_commits, fallback, issue_filter, one_commit_filter) -> WiaConfig:
    return WiaConfig(
        factor=factor,
        lookback_days=lookback_days,
        fallback=fallback,
        issue_filter=issue_filter,
        one_commit_filter=one_commit_filter,
        max_commits=max_commits,
        test_policy=TestPathPolicy.from_config(ctx.find_root().meta.get("test_paths")),
    )


def _fail(msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(1)


def _iso(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False, help="YAML or JSON file with option defaults.")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx, verbose):
    """Find bug-inducing commits by mining work items."""
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )


def common(fn):
    fn = click.option("--cache-dir", envvar="WIASZZ_CACHE_DIR", default=".wiaszz-cache",
                      show_default=True, type=click.Path(file_okay=False))(fn)
    return fn


@main.command("detect-wi")
@click.argument("repo")
@click.argument("fc")
@click.option("--issue-date", callback=_timestamp, help="Epoch seconds or ISO-8601; anchors the mining window.")
@click.option("--dump-matrix", type=click.Path(dir_okay=False), help="Write the tracking matrix as CSV.")
@wia_options
@common
@click.pass_context
def detect_wi(ctx, repo, fc, issue_date, dump_matrix, factor, lookback_days, max_commits, fallback,
              issue_filter, one_commit_filter, offset, cache_dir):
    """Print the tracking matrix and work items of fix commit FC."""
    config = _config(ctx, factor, lookback_days, max_commits, fallback, issue_filter, one_commit_filter)
    try:
        handle = open_repository(repo, cache_dir)
        meta = handle.commit_meta(fc)
        fc_changes = modified_methods(handle, meta.id, config.test_policy)
        oldest = mining_window_start(meta.commit_time, issue_date, lookback_days)
        walk = handle.walk_history(meta.id, oldest, max_commits)
        history = history_change_sets(handle, walk, fc_changes, config.test_policy)
        matrix = build_tracking_matrix(fc_changes, history)
    except (GitError, ValueError) as exc:  # includes EmptyFixChangeSet
        _fail(str(exc))
    items = detect_work_items(matrix, factor)
    marked = set(items.commits())
    click.echo(f"fix commit {meta.id}  ({matrix.n} method(s), {len(matrix.rows)} row(s))")
    for i, m in enumerate(matrix.columns):
        click.echo(f"  M{i}: {m.file} {m.qualified_name}/{m.arity}")
    click.echo("commit        date                  " + " ".join(f"M{i}" for i in range(matrix.n)) + "  WI")
    for row in matrix.rows:
        bits = " ".join(f"{b:>{len(str(i)) + 1}}" for i, b in enumerate(row.bits))
        click.echo(f"{row.commit[:12]}  {_iso(row.commit_time)}  {bits}  {'yes' if row.commit in marked else ''}")
    click.echo(f"work items (factor {factor}): {' '.join(items.commits()) or '(none)'}")
    if dump_matrix:
        Path(dump_matrix).write_text(matrix_to_csv(matrix), encoding="utf-8")


@main.command("find-bic")
@click.argument("repo")
@click.argument("fc")
@click.option("--issue-date", callback=_timestamp, help="Epoch seconds or ISO-8601.")
@click.option("--simulate", "simulate_bic", metavar="BIC",
              help="Simulate the issue date from this oracle BIC (see --offset).")
@click.option("--candidates", type=click.Path(exists=True, dir_okay=False),
              help="External candidate CSV used instead of the built-in baseline.")
@click.option("--json", "as_json", is_flag=True, help="Print the prediction as JSON.")
@wia_options
@common
@click.pass_context
def find_bic(ctx, repo, fc, issue_date, simulate_bic, candidates, as_json, factor, lookback_days,
             max_commits, fallback, issue_filter, one_commit_filter, offset, cache_dir):
    """Predict the bug-inducing commit of fix commit FC."""
    config = _config(ctx, factor, lookback_days, max_commits, fallback, issue_filter, one_commit_filter)
    try:
        handle = open_repository(repo, cache_dir)
        meta = handle.commit_meta(fc)
        if issue_date is None and simulate_bic:
            off, legacy = ev.parse_offset(offset)
            issue_date = ev.simulate_issue_date(handle.commit_time(simulate_bic), meta.commit_time,
                                                off, legacy=legacy)
        if issue_date is None and (issue_filter or one_commit_filter):
            _fail("an issue date is required: pass --issue-date, --simulate BIC or --no-issue-filter")
        external = None
        if candidates:
            sets = candidates_from_csv(Path(candidates).read_text(encoding="utf-8"))
            external = sets.get(meta.id, CandidateSet(meta.id))
        analysis = analyze_fix(handle, meta.id, issue_date, config, fallback_candidates=external)
        pred = decide(analysis, config)
    except (GitError, ValueError) as exc:
        _fail(str(exc))
    if as_json:
        click.echo(json.dumps({
            "fc": pred.fc, "path": pred.path, "candidates": list(pred.candidates),
            "work_item_count": pred.work_item_count, "issue_date": issue_date,
            "diagnostics": list(pred.diagnostics), "config": config.to_dict(),
        }, indent=2, sort_keys=True))
        return
    shown = ", ".join(pred.candidates) if pred.candidates else "(none)"
    click.echo(f"{pred.path}: {shown}")
    if pred.path == WORK_ITEM:
        click.echo(f"eligible work items: {pred.work_item_count}")
    for note in pred.diagnostics:
        click.echo(f"note: {note}")


def _prepare_dataset(dataset, exclusions, offset, cache_dir):
    try:
        loaded = ev.load_dataset(dataset, exclusions)
    except (OSError, ValueError) as exc:
        _fail(f"cannot read dataset: {exc}")
    for err in loaded.errors:
        click.echo(f"invalid record {err.record_id}: {err.message}", err=True)
    records, sim_errors = ev.assign_issue_dates(loaded.records, offset, cache_dir=cache_dir)
    for rid, msg in sim_errors:
        click.echo(f"cannot simulate issue date for {rid}: {msg}", err=True)
    return loaded, records


def _run_config(config: WiaConfig, offset, recall_mode, extra=None) -> dict:
    d = config.to_dict()
    d["offset"] = offset
    d["recall_mode"] = recall_mode
    if extra:
        d.update(extra)
    return d


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def dataset_options(fn):
    options = [
        click.option("--exclusions", type=click.Path(exists=True, dir_okay=False),
                     help="Newline-delimited record ids to drop."),
        click.option("--out-dir", default="wiaszz-out", show_default=True, type=click.Path(file_okay=False)),
        click.option("--parallelism", envvar="WIASZZ_PARALLELISM", default=1, show_default=True,
                     type=click.IntRange(min=1)),
        click.option("--candidates", type=click.Path(exists=True, dir_okay=False),
                     help="External candidate CSV replacing the built-in baseline."),
        click.option("--recall-mode", type=click.Choice(["bics", "records"]), default="bics", show_default=True),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _external(candidates):
    if not candidates:
        return None
    return candidates_from_csv(Path(candidates).read_text(encoding="utf-8"))


@main.command("evaluate")
@click.argument("dataset", type=click.Path(dir_okay=False))
@dataset_options
@wia_options
@common
@click.pass_context
def evaluate(ctx, dataset, exclusions, out_dir, parallelism, candidates, recall_mode, factor,
             lookback_days, max_commits, fallback, issue_filter, one_commit_filter, offset, cache_dir):
    """Run prediction over DATASET and score it against the oracle."""
    config = _config(ctx, factor, lookback_days, max_commits, fallback, issue_filter, one_commit_filter)
    loaded, records = _prepare_dataset(dataset, exclusions, offset, cache_dir)
    diagnostics = Diagnostics()
    analyses = analyze_dataset(records, config, parallelism, cache_dir=cache_dir,
                               diagnostics=diagnostics, external_candidates=_external(candidates))
    results = decide_dataset(records, analyses, config)
    out = Path(out_dir)
    effective = _run_config(config, offset, recall_mode)
    report = ev.metrics_report(results, records, effective, recall_mode)
    report["invalid_records"] = [{"record_id": e.record_id, "error": e.message} for e in loaded.errors]
    report["excluded"] = sorted(loaded.excluded)
    _write(out / "metrics.json", _dump_json(report))
    _write(out / "predictions.csv", ev.predictions_to_csv(results))
    _write(out / "predictions.jsonl", ev.predictions_to_jsonl(results))
    _write(out / "diagnostics.jsonl", "".join(
        json.dumps(r, sort_keys=True) + "\n"
        for r in sorted(diagnostics.records, key=lambda r: (r["commit"], r["file"], r["reason"]))
    ))
    _write(out / "config.json", _dump_json(effective))
    s = summarize(results)
    m = report["metrics"]
    click.echo(f"records: {s.n}  part A (work item): {s.part_a}  part B (fallback): {s.part_b}  errors: {s.errors}")
    if s.late_work_items:
        click.echo(f"records with work items only after the issue date: {s.late_work_items}")
    click.echo(f"TP {m['tp']}  FP {m['fp']}  recall {m['recall']:.3f}  precision {m['precision']:.3f}  F1 {m['f1']:.3f}")


@main.command("sweep")
@click.argument("dataset", type=click.Path(dir_okay=False))
@click.option("--factors", default="0.3,0.5,0.7,0.9", show_default=True,
              help="Comma-separated factors to evaluate.")
@click.option("--scope", type=click.Choice(["all", "work_item"]), default="all", show_default=True,
              help="Score every record, or only records routed to the work-item path.")
@dataset_options
@wia_options
@common
@click.pass_context
def sweep(ctx, dataset, factors, scope, exclusions, out_dir, parallelism, candidates, recall_mode, factor,
          lookback_days, max_commits, fallback, issue_filter, one_commit_filter, offset, cache_dir):
    """Evaluate several work-item factors on DATASET."""
    try:
        factor_list = [Factor(f.strip()) for f in str(factors).split(",") if f.strip()]
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--factors")
    if not factor_list:
        raise click.BadParameter("no factors given", param_hint="--factors")
    config = _config(ctx, factor, lookback_days, max_commits, fallback, issue_filter, one_commit_filter)
    loaded, records = _prepare_dataset(dataset, exclusions, offset, cache_dir)
    rows = ev.factor_sweep(records, factor_list, config, parallelism=parallelism, scope=scope,
                           recall_mode=recall_mode, cache_dir=cache_dir,
                           external_candidates=_external(candidates))
    out = Path(out_dir)
    effective = _run_config(config, offset, recall_mode,
                            {"factors": [str(f) for f in factor_list], "scope": scope})
    _write(out / "sweep.csv", ev.sweep_to_csv(rows))
    _write(out / "sweep.json", _dump_json({
        "config": effective,
        "rows": [dict(zip(ev.SWEEP_FIELDS, r.as_list())) for r in rows],
        "summaries": {str(r.factor): summarize(r.results).to_dict() for r in rows},
    }))
    _write(out / "config.json", _dump_json(effective))
    click.echo(",".join(ev.SWEEP_FIELDS))
    for row in rows:
        click.echo(",".join(str(v) for v in row.as_list()))


if __name__ == "__main__":
    main()
