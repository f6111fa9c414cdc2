"""Command-line entry points.

One executable, subcommand per stage: run a search, train and apply the
value model, mine preference pairs, and analyze finished runs.  Every
subcommand prints a single JSON document to stdout; file outputs are
deterministic so reruns over the same inputs are diffable.

The run config is one JSON file shared by the model-driven subcommands:

    {
      "story":       {... story shape ...},
      "search":      {... search knobs ...},
      "curiosity":   {... interest bump parameters ...},
      "value_model": "path/to/model.json",
      "backends":    {"<role>": {"endpoint": ..., "model": ...}}
    }

All sections are optional; subcommands validate the ones they need.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path
from urllib.parse import parse_qs, urlencode, urlparse, urlunparse

import numpy as np

from . import analytics
from .backends import BackendConfig, BackendError, load_backend_configs, make_backend
from .engine import SearchConfig, ValueModelEvaluator, run_search
from .mining import MinerConfig, export_dataset, mine_pairs
from .prompts import parse_bullets
from .tree import SearchTree, StoryConfig
from .value.features import CuriosityConfig, extract_features
from .value.pipeline import (
    ValueModel,
    extract_corpus_features,
    fit_pipeline,
    load_corpus,
    predict_value,
)
from .value.synthetic import planted_corpus, tuning_corpus
from .value.validation import binary_metrics, tune_curiosity


# ---------------------------------------------------------------------------
# Shared plumbing


def _load_doc(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _reseed_mock(cfg: BackendConfig, seed: int) -> BackendConfig:
    """Rewrite the seed query parameter of a mock:// endpoint."""
    parsed = urlparse(cfg.endpoint)
    if parsed.scheme != "mock":
        return cfg
    params = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
    params["seed"] = str(seed)
    endpoint = urlunparse(parsed._replace(query=urlencode(params)))
    return dataclasses.replace(cfg, endpoint=endpoint)


def _backends_from(path: str, seed=None) -> dict:
    configs = load_backend_configs(path)
    if seed is not None:
        configs = {role: _reseed_mock(cfg, seed) for role, cfg in configs.items()}
    return configs


def _require_roles(configs: dict, roles) -> None:
    missing = [r for r in roles if r not in configs]
    if missing:
        raise ValueError(f"config lacks backend roles: {', '.join(missing)}")


def _read_bullets(path: str) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    bullets = parse_bullets(text)
    if not bullets:
        bullets = [line.strip() for line in text.splitlines() if line.strip()]
    if not bullets:
        raise ValueError(f"no bullets found in {path}")
    return bullets


def _read_premises(path: str) -> list[str]:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    premises = [ln for ln in lines if ln]
    if not premises:
        raise ValueError(f"no premises in {path}")
    return premises


def _load_tree(path: str) -> SearchTree:
    return SearchTree.from_json(_load_doc(path))


def _report_points(path: str) -> list[tuple[int, float]]:
    """(iteration, v_max_final) rows of a report file, nulls skipped."""
    points = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row.get("v_max_final") is not None:
                points.append((int(row["iteration"]), float(row["v_max_final"])))
    if not points:
        raise ValueError(f"no evaluated iterations in {path}")
    return points


def _report_walltime(path: str) -> dict[int, float]:
    """Cumulative wall seconds through each iteration."""
    out, total = {}, 0.0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            total += float(row.get("wall_time") or 0.0)
            out[int(row["iteration"])] = total
    return out


def _grid(spec: str) -> list[float]:
    """Parse "start:stop:count" into an inclusive linear grid."""
    try:
        start, stop, count = spec.split(":")
        return [float(x) for x in np.linspace(float(start), float(stop), int(count))]
    except Exception as exc:
        raise ValueError(f"bad grid spec {spec!r}; expected start:stop:count") from exc


def _synthetic_records(kind: str, groups: int, seed: int):
    if kind == "planted":
        return planted_corpus(n_groups=groups, seed=seed)
    if kind == "tuning":
        return tuning_corpus(n_groups=groups, seed=seed)
    raise ValueError(f"unknown synthetic corpus {kind!r}")


def _corpus_records(args) -> list:
    """Feature records from either a synthetic corpus or a story corpus."""
    if args.synthetic:
        return _synthetic_records(args.synthetic, args.groups, args.seed)
    if not args.corpus:
        raise ValueError("provide --synthetic or --corpus")
    if not args.config:
        raise ValueError("--corpus needs --config for scorer/embedder backends")
    configs = _backends_from(args.config, args.seed)
    _require_roles(configs, ("scorer", "embedder"))
    curiosity = _curiosity_from(args.config)
    stories = load_corpus(args.corpus)
    return extract_corpus_features(
        stories,
        make_backend(configs["scorer"]),
        make_backend(configs["embedder"]),
        cfg=curiosity,
    )


def _curiosity_from(config_path) -> CuriosityConfig | None:
    if not config_path:
        return None
    doc = _load_doc(config_path)
    if "curiosity" not in doc:
        return None
    return CuriosityConfig(**doc["curiosity"])


def _macro_f1(y_true, y_pred) -> float:
    scores = []
    for cls in (0, 1):
        tp = sum(1 for t, p in zip(y_true, y_pred) if p == cls and t == cls)
        fp = sum(1 for t, p in zip(y_true, y_pred) if p == cls and t != cls)
        fn = sum(1 for t, p in zip(y_true, y_pred) if p != cls and t == cls)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return sum(scores) / 2


def _emit(doc: dict) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# search


def cmd_search(args) -> dict:
    doc = _load_doc(args.config)
    story = StoryConfig(**doc["story"]) if "story" in doc else None
    search_cfg = SearchConfig(**doc.get("search", {}))
    if args.iterations is not None:
        search_cfg = dataclasses.replace(search_cfg, max_iterations=args.iterations)
    configs = _backends_from(args.config, args.seed)
    _require_roles(configs, ("policy_base", "simulator", "scorer", "embedder"))

    model_path = args.model or doc.get("value_model")
    if not model_path:
        raise ValueError("no value model: pass --model or set value_model in config")
    curiosity = CuriosityConfig(**doc["curiosity"]) if "curiosity" in doc else None
    evaluator = ValueModelEvaluator(
        ValueModel.load(model_path),
        configs["scorer"],
        configs["embedder"],
        curiosity=curiosity,
    )

    premises = _read_premises(args.prompts)
    tree, reports = run_search(premises, search_cfg, configs, evaluator, story)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    tree_path = outdir / "tree.json"
    tree_path.write_text(tree.to_json_str() + "\n", encoding="utf-8")
    report_path = outdir / "report.jsonl"
    with open(report_path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")

    summary = {
        "premises": len(premises),
        "iterations": len(reports),
        "nodes": len(tree.nodes),
        "evaluations": len(tree.evaluation_log),
        "v_max_final": reports[-1].v_max_final if reports else None,
        "tree": str(tree_path),
        "report": str(report_path),
    }
    try:
        finals = tree.final_values()
    except ValueError:
        summary["best_story"] = None
        summary["worst_story"] = None
    else:
        best = outdir / "best_story.txt"
        worst = outdir / "worst_story.txt"
        best.write_text(
            "\n".join(tree.nodes[finals.best_id].bullets) + "\n", encoding="utf-8"
        )
        worst.write_text(
            "\n".join(tree.nodes[finals.worst_id].bullets) + "\n", encoding="utf-8"
        )
        summary["best_story"] = str(best)
        summary["worst_story"] = str(worst)
        summary["v_max"] = finals.v_max
        summary["v_min"] = finals.v_min
    return summary


# ---------------------------------------------------------------------------
# value model subcommands


def cmd_train_value(args) -> dict:
    records = _corpus_records(args)
    model = fit_pipeline(records, seed=args.seed)
    model.save(args.out)
    return {
        "model": args.out,
        "records": len(records),
        "features": list(model.feature_names),
    }


def cmd_eval_value(args) -> dict:
    model = ValueModel.load(args.model)
    records = _corpus_records(args)
    y_true = [r.target for r in records]
    probs = [predict_value(model, r.features) for r in records]
    y_pred = [1 if p >= 0.5 else 0 for p in probs]
    fpr, brier, precision = binary_metrics(y_true, probs)
    return {
        "records": len(records),
        "accuracy": sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true),
        "macro_f1": _macro_f1(y_true, y_pred),
        "brier": brier,
        "fpr": fpr,
        "precision": precision,
    }


def cmd_score(args) -> dict:
    model = ValueModel.load(args.model)
    configs = _backends_from(args.config, args.seed)
    _require_roles(configs, ("scorer", "embedder"))
    bullets = _read_bullets(args.story)
    features = extract_features(
        bullets,
        make_backend(configs["scorer"]),
        make_backend(configs["embedder"]),
        cfg=_curiosity_from(args.config),
        completion=args.completion,
    )
    return {
        "value": predict_value(model, features),
        "completion": args.completion,
        "bullets": len(bullets),
        "features": features.as_dict(),
    }


def cmd_tune_curiosity(args) -> dict:
    records = _synthetic_records("tuning", args.groups, args.seed)
    result = tune_curiosity(
        records,
        _grid(args.optimal_grid),
        _grid(args.spread_grid),
        folds=args.folds,
        seed=args.seed,
    )
    if args.heatmap:
        with open(args.heatmap, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["optimal_bits"] + [f"spread_{s:g}" for s in result.spread_grid])
            for i, opt in enumerate(result.optimal_grid):
                writer.writerow([f"{opt:g}"] + [f"{v:.6f}" for v in result.f1_grid[i]])
    return {
        "best_optimal_bits": result.best_optimal,
        "best_spread_bits": result.best_spread,
        "grid_max_f1": float(result.f1_grid.max()),
        "heatmap": args.heatmap,
    }


# ---------------------------------------------------------------------------
# mining


def cmd_mine_prefs(args) -> dict:
    tree = _load_tree(args.tree)
    cfg = MinerConfig(
        min_gap=args.min_gap,
        quality_floor=args.floor,
        score_weight=args.weight,
        pairs_per_parent=args.per_parent,
    )
    pairs = mine_pairs(tree, cfg)
    if not pairs:
        raise ValueError("no sibling pairs passed the filters")
    out = export_dataset(pairs, args.out, tree, cfg)
    return {
        "pairs": len(pairs),
        "parents": len({p.parent_id for p in pairs}),
        "dataset": str(out),
        "manifest": str(out) + ".manifest.json",
    }


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze_fit(args) -> dict:
    series = [_report_points(path) for path in args.reports]
    labels = args.labels.split(",") if args.labels else [Path(p).stem for p in args.reports]
    if len(labels) != len(series):
        raise ValueError("label count must match report count")
    grouped = len(series) > 1
    fit = analytics.loglinear_fit(series if grouped else series[0],
                                  labels=labels if grouped else None)
    if args.csv:
        walltimes = [_report_walltime(p) for p in args.reports] if args.pf_days else None
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# {analytics.FIT_MODEL_NOTE}\n")
            writer = csv.writer(fh)
            header = ["label", "iteration", "v_max"]
            if args.pf_days:
                header.append("pf_days")
            writer.writerow(header)
            for label, points, idx in zip(labels, series, range(len(series))):
                for k, v in points:
                    row = [label, k, f"{v:.6f}"]
                    if args.pf_days:
                        row.append(f"{analytics.pf_days(walltimes[idx].get(k, 0.0)):.3e}")
                    writer.writerow(row)
    doc = fit.to_dict()
    doc["csv"] = args.csv
    return doc


def cmd_analyze_speedup(args) -> dict:
    slow = _report_points(args.slow)
    fast = _report_points(args.fast)
    k_slow = analytics.iterations_to_gain(slow, args.gain, args.baseline_k)
    k_fast = analytics.iterations_to_gain(fast, args.gain, args.baseline_k)
    ratio = analytics.speedup_ratio(slow, fast, args.gain, args.baseline_k)
    return {
        "gain": args.gain,
        "baseline_k": args.baseline_k,
        "slow_k": k_slow,
        "fast_k": k_fast,
        "speedup": ratio,
    }


def cmd_analyze_vq(args) -> dict:
    tree = _load_tree(args.tree)
    pairs = sum(
        1
        for nid in tree.nodes
        if tree.nodes[nid].evaluated_value is not None
        and tree.parent_edge(nid) is not None
        and tree.parent_edge(nid).stats.visits > 0
    )
    return {"pearson_r": analytics.v_q_correlation(tree), "pairs": pairs}


# ---------------------------------------------------------------------------
# judging and statistics


def cmd_rate(args) -> dict:
    configs = _backends_from(args.config, args.seed)
    _require_roles(configs, ("judge",))
    story = Path(args.story).read_text(encoding="utf-8")
    report = analytics.rubric_rate(
        make_backend(configs["judge"]), story, repeats=args.repeats, retries=args.retries
    )
    doc = report.to_dict()
    if not args.full:
        doc.pop("ratings")
    return doc


def _paired_scores(args) -> tuple[list[float], list[float]]:
    if args.json:
        doc = _load_doc(args.json)
        return [float(x) for x in doc["a"]], [float(x) for x in doc["b"]]
    if not args.csv:
        raise ValueError("provide --csv or --json")
    with open(args.csv, encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows:
        raise ValueError(f"empty table in {args.csv}")
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]  # header row
    a = [float(r[0]) for r in rows]
    b = [float(r[1]) for r in rows]
    return a, b


def cmd_stats(args) -> dict:
    a, b = _paired_scores(args)
    return analytics.effect_stats(a, b).to_dict()


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotsearch",
        description="Plot search, value model, preference mining, and run analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run a plot search and save the tree")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--prompts", required=True, help="premise file, one per line")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--model", help="value model JSON (overrides config)")
    p.add_argument("--seed", type=int, help="rewrite mock backend seeds")
    p.add_argument("--iterations", type=int, help="override configured iterations")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train-value", help="fit the value pipeline")
    p.add_argument("--out", required=True, help="model JSON output path")
    p.add_argument("--synthetic", choices=["planted", "tuning"], help="synthetic corpus")
    p.add_argument("--corpus", help="labeled story corpus JSONL")
    p.add_argument("--config", help="run config (for corpus backends)")
    p.add_argument("--groups", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_value)

    p = sub.add_parser("eval-value", help="evaluate a saved value model")
    p.add_argument("--model", required=True)
    p.add_argument("--synthetic", choices=["planted", "tuning"])
    p.add_argument("--corpus")
    p.add_argument("--config")
    p.add_argument("--groups", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval_value)

    p = sub.add_parser("score", help="score one story file")
    p.add_argument("--model", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--story", required=True, help="bullet list text file")
    p.add_argument("--completion", type=float, default=1.0)
    p.add_argument("--seed", type=int, help="rewrite mock backend seeds")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("tune-curiosity", help="grid-search the interest bump")
    p.add_argument("--groups", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--optimal-grid", default="2:7:11", help="start:stop:count")
    p.add_argument("--spread-grid", default="0.5:2.5:5", help="start:stop:count")
    p.add_argument("--heatmap", help="write the F1 grid as CSV")
    p.set_defaults(func=cmd_tune_curiosity)

    p = sub.add_parser("mine-prefs", help="mine preference pairs from a tree")
    p.add_argument("--tree", required=True, help="tree JSON from search")
    p.add_argument("--out", required=True, help="dataset JSONL path")
    p.add_argument("--min-gap", type=float, default=0.02)
    p.add_argument("--floor", type=float, default=0.5)
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--per-parent", type=int, default=3)
    p.set_defaults(func=cmd_mine_prefs)

    analyze = sub.add_parser("analyze", help="fits, speedups, and agreement")
    asub = analyze.add_subparsers(dest="analysis", required=True)

    p = asub.add_parser("fit", help="log-linear scaling fit over reports")
    p.add_argument("--reports", nargs="+", required=True, help="report JSONL files")
    p.add_argument("--labels", help="comma-separated experiment labels")
    p.add_argument("--csv", help="write the fitted points as CSV")
    p.add_argument("--pf-days", action="store_true", help="add nominal compute column")
    p.set_defaults(func=cmd_analyze_fit)

    p = asub.add_parser("speedup", help="iterations-to-gain ratio of two runs")
    p.add_argument("--slow", required=True, help="baseline report JSONL")
    p.add_argument("--fast", required=True, help="improved report JSONL")
    p.add_argument("--gain", type=float, required=True, help="relative gain, e.g. 0.10")
    p.add_argument("--baseline-k", type=int, default=8)
    p.set_defaults(func=cmd_analyze_speedup)

    p = asub.add_parser("vq", help="value vs backed-up mean agreement")
    p.add_argument("--tree", required=True)
    p.set_defaults(func=cmd_analyze_vq)

    p = sub.add_parser("rate", help="repeated rubric judging of one story")
    p.add_argument("--config", required=True, help="run config with a judge backend")
    p.add_argument("--story", required=True, help="story text file")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--retries", type=int, default=1)
    p.add_argument("--seed", type=int, help="rewrite mock backend seeds")
    p.add_argument("--full", action="store_true", help="include every raw rating")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("stats", help="paired effect sizes for two score arms")
    p.add_argument("--csv", help="two-column CSV (a, b), optional header")
    p.add_argument("--json", help='JSON file {"a": [...], "b": [...]}')
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = args.func(args)
    except (ValueError, KeyError, OSError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _emit(doc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
