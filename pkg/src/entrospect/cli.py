"""Command line surface.

Exit codes: 0 success, 1 usage problem, 2 input data problem, 3 internal
invariant violation or unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diffs, evaluation, forest, ngram, pipeline, spectra, tokens
from .errors import DataError, EntrospectError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we reserve 2 for data
        raise UsageError(message)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, help="JSON run configuration")
    sub.add_argument("--seed", type=int, help="master seed override")
    sub.add_argument("--mode", choices=["sbbl", "hybrid"], help="feature mode override")
    sub.add_argument(
        "--budget",
        type=float,
        action="append",
        help="inspection budget percent, repeatable",
    )
    sub.add_argument("--out", type=Path, help="output directory or file")


def build_parser() -> _Parser:
    parser = _Parser(prog="entrospect", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("tokenize", help="dump per-line tokens as JSON lines")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--language", choices=tokens.LANGUAGES, required=True)
    _add_common(p)

    p = commands.add_parser("train-lm", help="train forward and backward n-gram models")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--language", choices=tokens.LANGUAGES, required=True)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--cache-window", type=int, default=5000)
    _add_common(p)

    p = commands.add_parser("entropy", help="per-line entropies and Z-scores as CSV")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--language", choices=tokens.LANGUAGES, required=True)
    p.add_argument("--lm-forward", type=Path, required=True)
    p.add_argument("--lm-backward", type=Path, required=True)
    _add_common(p)

    p = commands.add_parser("spectra", help="coverage counters and the 25 metrics as CSV")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--language", choices=tokens.LANGUAGES, required=True)
    p.add_argument("--coverage", type=Path, required=True)
    p.add_argument("--lcov", action="store_true", help="coverage file is an LCOV tracefile")
    p.add_argument("--outcomes", type=Path, help="JSON test outcome map for LCOV input")
    _add_common(p)

    p = commands.add_parser("features", help="join spectra and entropy CSVs")
    p.add_argument("--spectra", type=Path, required=True)
    p.add_argument("--entropy", type=Path)
    p.add_argument("--annotations", type=Path, help="labels for a training table")
    _add_common(p)

    p = commands.add_parser("annotate", help="buggy lines from unified diffs")
    p.add_argument("diff_files", nargs="+", type=Path)
    _add_common(p)

    p = commands.add_parser("train", help="train the ranking forest from a feature table")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--feature-subset", type=int, default=6)
    _add_common(p)

    p = commands.add_parser("rank", help="score and rank lines with a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    _add_common(p)

    p = commands.add_parser("eval", help="CE curve and AUCEC for a ranked report")
    p.add_argument("--ranked", type=Path, required=True)
    p.add_argument("--annotations", type=Path, required=True)
    p.add_argument(
        "--normalized",
        action="store_true",
        help="also report AUCEC divided by the budget fraction",
    )
    _add_common(p)

    p = commands.add_parser("stats", help="entropy association tests per spectra group")
    p.add_argument("--spectra", type=Path, required=True)
    p.add_argument("--entropy", type=Path, required=True)
    p.add_argument("--annotations", type=Path, required=True)
    p.add_argument(
        "--channel",
        choices=["E_f", "E_b", "E_a", "z_f", "z_b", "z_a"],
        default="E_a",
    )
    _add_common(p)

    p = commands.add_parser("split", help="cross-project training set for a target version")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--target", required=True)
    _add_common(p)

    p = commands.add_parser("run", help="full experiment from a JSON configuration")
    p.add_argument(
        "--exclude-uncovered",
        action="store_true",
        help="drop lines no test executed from ranking and evaluation",
    )
    _add_common(p)

    p = commands.add_parser("run-cross", help="cross-project experiments from a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument(
        "--exclude-uncovered",
        action="store_true",
        help="drop lines no test executed from ranking and evaluation",
    )
    _add_common(p)

    return parser


def _apply_overrides(config: pipeline.RunConfig, args) -> pipeline.RunConfig:
    if args.seed is not None:
        config.master_seed = args.seed
    if args.mode is not None:
        config.mode = pipeline.normalize_mode(args.mode)
    if args.budget:
        config.budgets = [float(b) for b in args.budget]
    if args.out is not None:
        config.out_dir = args.out
    if getattr(args, "exclude_uncovered", False):
        config.exclude_uncovered = True
    config.validate()
    return config


def _load_or_default_config(args) -> pipeline.RunConfig:
    config = pipeline.load_config(args.config) if args.config else pipeline.RunConfig()
    return _apply_overrides(config, args)


def _read_feature_csv(path: Path) -> tuple[list, np.ndarray, list[str], dict]:
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows:
        raise DataError(f"{path}: empty feature table")
    columns = rows[0].split(",")
    if columns[:2] != ["file", "line_no"]:
        raise DataError(f"{path}: expected file,line_no leading columns")
    has_relevance = columns[-1] == "relevance"
    names = columns[2: -1 if has_relevance else len(columns)]
    keys, vectors, relevance = [], [], {}
    for raw in rows[1:]:
        if not raw:
            continue
        cells = raw.split(",")
        key = (cells[0], int(cells[1]))
        keys.append(key)
        end = -1 if has_relevance else len(cells)
        vectors.append([float(v) for v in cells[2:end]])
        if has_relevance:
            relevance[key] = float(cells[-1])
    return keys, np.asarray(vectors, dtype=np.float64), names, relevance


def _read_entropy_csv(path: Path) -> tuple[list, dict[str, dict]]:
    """Entropy CSV has a non-numeric line_type column; returns per-column maps."""
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows:
        raise DataError(f"{path}: empty entropy table")
    columns = rows[0].split(",")
    expected = ["file", "line_no", "line_type", "E_f", "E_b", "E_a", "z_f", "z_b", "z_a"]
    if columns != expected:
        raise DataError(f"{path}: unexpected entropy columns {columns}")
    keys = []
    values: dict[str, dict] = {c: {} for c in expected[3:]}
    for raw in rows[1:]:
        if not raw:
            continue
        cells = raw.split(",")
        key = (cells[0], int(cells[1]))
        keys.append(key)
        for name, cell in zip(expected[3:], cells[3:]):
            values[name][key] = float(cell)
    return keys, values


def _cmd_tokenize(args) -> int:
    config = _load_or_default_config(args)
    records = pipeline.scan_corpus(args.corpus, args.language)
    out = args.out or (config.out_dir / "tokens.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fp:
        tokens.dump_jsonl(records, fp)
    print(f"wrote {out} ({len(records)} lines)")
    return 0


def _cmd_train_lm(args) -> int:
    config = _load_or_default_config(args)
    records = pipeline.scan_corpus(args.corpus, args.language)
    out_dir = args.out or config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    for direction in ("forward", "backward"):
        model = ngram.train_ngram(records, args.order, direction, args.lam, args.cache_window)
        model.save(out_dir / f"lm_{direction}.json")
    print(f"wrote {out_dir}/lm_forward.json and {out_dir}/lm_backward.json")
    return 0


def _cmd_entropy(args) -> int:
    config = _load_or_default_config(args)
    records = pipeline.scan_corpus(args.corpus, args.language)
    model_f = ngram.NgramModel.load(args.lm_forward)
    model_b = ngram.NgramModel.load(args.lm_backward)
    entropies = ngram.corpus_entropies(model_f, model_b, records)
    stats = {
        ch: ngram.compute_type_stats(entropies, records, ch)
        for ch in ngram.ENTROPY_CHANNELS
    }
    out = args.out or (config.out_dir / "entropy.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    ngram.write_entropy_csv(out, records, entropies, stats)
    print(f"wrote {out}")
    return 0


def _cmd_spectra(args) -> int:
    config = _load_or_default_config(args)
    records = pipeline.scan_corpus(args.corpus, args.language)
    universe = [(rec.file, rec.line_no) for rec in records]
    if args.lcov:
        if not args.outcomes:
            raise UsageError("--lcov requires --outcomes")
        traces = spectra.read_lcov(args.coverage, args.outcomes)
    else:
        traces = spectra.read_coverage_jsonl(args.coverage)
    matrix = spectra.ingest_coverage(traces, universe)
    for key in matrix.unknown_covered:
        print(f"warning: covered line not in corpus: {key[0]}:{key[1]}", file=sys.stderr)
    out = args.out or (config.out_dir / "spectra.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    spectra.write_spectra_csv(out, matrix, config.rogers_tanimoto_textbook)
    print(f"wrote {out}")
    return 0


def _cmd_features(args) -> int:
    config = _load_or_default_config(args)
    s_keys, s_X, s_names, _ = _read_feature_csv(args.spectra)
    idx = [s_names.index(name) for name in spectra.METRIC_NAMES]
    metric_by_key = {
        k: tuple(float(v) for v in s_X[i, idx]) for i, k in enumerate(s_keys)
    }
    z_by_key = None
    if config.mode == "sbbl_plus_entropy":
        if not args.entropy:
            raise UsageError("hybrid mode needs --entropy")
        _e_keys, e_values = _read_entropy_csv(args.entropy)
        z_map = {
            k: (e_values["z_f"][k], e_values["z_b"][k], e_values["z_a"][k])
            for k in e_values["z_f"]
        }
        missing = [k for k in s_keys if k not in z_map]
        if missing:
            raise DataError(f"entropy table misses {len(missing)} lines, e.g. {missing[0]}")
        z_by_key = z_map
    relevance_by_key = None
    if args.annotations:
        buggy = diffs.merged_buggy_lines(diffs.load_annotations(args.annotations))
        relevance_by_key = {
            k: (config.r_buggy if k in buggy else config.r_clean) for k in s_keys
        }
    out = args.out or (config.out_dir / "features.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    pipeline._write_features_csv(out, s_keys, metric_by_key, z_by_key, relevance_by_key)
    print(f"wrote {out}")
    return 0


def _cmd_annotate(args) -> int:
    config = _load_or_default_config(args)
    annotations = diffs.annotate_files(args.diff_files)
    out = args.out or (config.out_dir / "annotations.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    diffs.save_annotations(out, annotations)
    omission = sum(1 for a in annotations if a.omission_only)
    total = len(diffs.merged_buggy_lines(annotations))
    print(f"wrote {out} ({total} buggy lines, {omission} omission-only bugs)")
    return 0


def _cmd_train(args) -> int:
    config = _load_or_default_config(args)
    keys, X, names, relevance = _read_feature_csv(args.features)
    if not relevance:
        raise DataError("feature table has no relevance column; label it first")
    instances = [
        forest.LabeledInstance(key=k, relevance=relevance[k], features=X[i])
        for i, k in enumerate(keys)
    ]
    # The buggy class is whichever of the two label values is larger.
    sampled = forest.undersample(
        instances, config.undersample_ratio, config.master_seed
    )
    params = forest.ForestParams(
        trees=args.trees,
        max_depth=args.max_depth,
        min_leaf=args.min_leaf,
        feature_subset=args.feature_subset,
        master_seed=config.master_seed,
    )
    model = forest.train_forest(sampled, params, names)
    out = args.out or (config.out_dir / "model.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    forest.save_model(model, out)
    top = ", ".join(f"{n}={w:.4f}" for n, w in model.top_features(3))
    print(f"wrote {out} (top features: {top})")
    return 0


def _cmd_rank(args) -> int:
    config = _load_or_default_config(args)
    model = forest.load_model(args.model)
    keys, X, names, _ = _read_feature_csv(args.features)
    if tuple(names) != model.feature_names:
        raise DataError("feature table columns do not match the model layout")
    scores = forest.hybrid_scores(model, X, config.r_buggy, config.r_clean)
    report = forest.rank_lines(list(zip(keys, scores.tolist())))
    out = args.out or (config.out_dir / "ranked.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    forest.write_ranked_csv(out, report, model)
    print(f"wrote {out}")
    return 0


def _cmd_eval(args) -> int:
    config = _load_or_default_config(args)
    report = forest.read_ranked_csv(args.ranked)
    buggy = diffs.merged_buggy_lines(diffs.load_annotations(args.annotations))
    curve = evaluation.ce_curve(report, buggy)
    out_dir = args.out or config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_ce_csv(out_dir / "ce_curve.csv", curve)
    evaluation.write_ce_svg(out_dir / "ce_curve.svg", curve)
    payload = {
        "n_lines": curve.n_lines,
        "n_buggy": curve.n_buggy,
        "aucec": {f"{b:g}": evaluation.aucec(curve, b) for b in config.budgets},
    }
    if args.normalized:
        payload["aucec_normalized"] = {
            f"{b:g}": evaluation.aucec(curve, b, normalized=True) for b in config.budgets
        }
    (out_dir / "evaluation.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(json.dumps(payload["aucec"], sort_keys=True))
    return 0


def _cmd_stats(args) -> int:
    config = _load_or_default_config(args)
    s_keys, s_X, s_names, _ = _read_feature_csv(args.spectra)
    counter_idx = [s_names.index(c) for c in ("e_p", "e_f", "n_p", "n_f")]
    _e_keys, e_values = _read_entropy_csv(args.entropy)
    values = e_values[args.channel]
    groups = {}
    for i, key in enumerate(s_keys):
        e_p, e_f = s_X[i, counter_idx[0]], s_X[i, counter_idx[1]]
        if e_f > 0 and e_p == 0:
            groups[key] = spectra.SpectraGroup.FAIL_ONLY
        elif e_p > 0 and e_f == 0:
            groups[key] = spectra.SpectraGroup.PASS_ONLY
        elif e_p > 0 and e_f > 0:
            groups[key] = spectra.SpectraGroup.BOTH
        else:
            groups[key] = spectra.SpectraGroup.UNCOVERED
    buggy = diffs.merged_buggy_lines(diffs.load_annotations(args.annotations))
    report = evaluation.group_entropy_stats(groups, buggy, values)
    out = args.out or (config.out_dir / "stats.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(
        json.dumps({"channel": args.channel, "groups": report}, sort_keys=True, indent=2)
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {out}")
    return 0


def _cmd_split(args) -> int:
    manifest = evaluation.read_manifest(args.manifest)
    training = evaluation.cross_project_split(manifest, args.target)
    print(json.dumps({"target": args.target, "training_versions": training}))
    return 0


def _cmd_run(args) -> int:
    if not args.config:
        raise UsageError("run requires --config")
    config = _load_or_default_config(args)
    result = pipeline.run_experiment(config)
    print(json.dumps({"out_dir": str(config.out_dir), "aucec": result["aucec"]}, sort_keys=True))
    return 0


def _cmd_run_cross(args) -> int:
    template = _load_or_default_config(args)
    summary = pipeline.run_cross_project(args.manifest, template, out_dir=args.out)
    print(
        json.dumps(
            {
                "targets": [t["version_id"] for t in summary["targets"]],
                "skipped": [s["version_id"] for s in summary["skipped"]],
            },
            sort_keys=True,
        )
    )
    return 0


_COMMANDS = {
    "tokenize": _cmd_tokenize,
    "train-lm": _cmd_train_lm,
    "entropy": _cmd_entropy,
    "spectra": _cmd_spectra,
    "features": _cmd_features,
    "annotate": _cmd_annotate,
    "train": _cmd_train,
    "rank": _cmd_rank,
    "eval": _cmd_eval,
    "stats": _cmd_stats,
    "split": _cmd_split,
    "run": _cmd_run,
    "run-cross": _cmd_run_cross,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except EntrospectError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # anything unexpected is an internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
