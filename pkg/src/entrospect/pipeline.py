"""End-to-end experiment runner: tokenize, train language models, compute
entropy features, fold coverage into spectra, join features, train the
ranker, rank, and evaluate.

Every run is a pure function of its inputs and configuration: reruns with
the same seed produce byte-identical output bundles.
"""

from __future__ import annotations

import contextlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import diffs, evaluation, forest, ngram, spectra, tokens
from .errors import DataError, UsageError

SOURCE_EXTENSIONS = {
    "java_like": (".java",),
    "c_like": (".c", ".h", ".cc", ".cpp", ".hpp", ".cxx"),
}

MODES = ("sbbl_only", "sbbl_plus_entropy")
_MODE_ALIASES = {"sbbl": "sbbl_only", "hybrid": "sbbl_plus_entropy"}

STATS_CHANNEL = "E_a"


@dataclass
class LMConfig:
    n: int = 3
    lam: float = 0.5
    cache_window: int = 5000


@dataclass
class ForestConfig:
    trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    feature_subset: int = 6


@dataclass
class RunConfig:
    corpus: Path | None = None
    language: str = "java_like"
    coverage: Path | None = None
    coverage_format: str = "jsonl"
    outcomes: Path | None = None
    diff_paths: list[Path] = field(default_factory=list)
    out_dir: Path = Path("out")
    mode: str = "sbbl_plus_entropy"
    lm: LMConfig = field(default_factory=LMConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    master_seed: int = 0
    undersample_ratio: float = 10.0
    r_buggy: float = 1.0
    r_clean: float = 0.0
    budgets: list[float] = field(default_factory=lambda: [5.0, 20.0, 100.0])
    exclude_uncovered: bool = False
    rogers_tanimoto_textbook: bool = False
    # Score files that were in the LM training corpus with their own counts
    # removed, so a file never predicts itself through the global model.
    lofo_entropy: bool = True

    def validate(self) -> None:
        if self.language not in tokens.LANGUAGES:
            raise UsageError(f"language must be one of {tokens.LANGUAGES}")
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}")
        if self.coverage_format not in ("jsonl", "lcov"):
            raise UsageError("coverage_format must be jsonl or lcov")
        if self.coverage_format == "lcov" and self.outcomes is None:
            raise UsageError("lcov coverage needs an outcomes sidecar file")
        if not self.r_buggy > self.r_clean:
            raise UsageError("buggy relevance must exceed clean relevance")
        if self.undersample_ratio <= 0:
            raise UsageError("undersample_ratio must be positive")
        if self.lm.n < 1 or not 0.0 < self.lm.lam < 1.0 or self.lm.cache_window < 0:
            raise UsageError("invalid language model parameters")
        if self.forest.trees < 1 or self.forest.min_leaf < 1 or self.forest.feature_subset < 1:
            raise UsageError("invalid forest parameters")
        for budget in self.budgets:
            if not 0.0 < budget <= 100.0:
                raise UsageError("budgets must lie in (0, 100]")

    def require_paths(self) -> None:
        if self.corpus is None:
            raise UsageError("configuration misses the corpus path")
        if self.coverage is None:
            raise UsageError("configuration misses the coverage path")

    def echo_dict(self) -> dict:
        """Configuration echo for the bundle; excludes out_dir so the bundle
        stays byte-identical wherever it is written."""
        return {
            "corpus": str(self.corpus) if self.corpus else None,
            "language": self.language,
            "coverage": str(self.coverage) if self.coverage else None,
            "coverage_format": self.coverage_format,
            "outcomes": str(self.outcomes) if self.outcomes else None,
            "diffs": [str(p) for p in self.diff_paths],
            "mode": self.mode,
            "lm": {"n": self.lm.n, "lambda": self.lm.lam, "cache_window": self.lm.cache_window},
            "forest": {
                "trees": self.forest.trees,
                "max_depth": self.forest.max_depth,
                "min_leaf": self.forest.min_leaf,
                "feature_subset": self.forest.feature_subset,
            },
            "master_seed": self.master_seed,
            "undersample_ratio": self.undersample_ratio,
            "relevance": {"buggy": self.r_buggy, "clean": self.r_clean},
            "budgets": self.budgets,
            "exclude_uncovered": self.exclude_uncovered,
            "rogers_tanimoto_textbook": self.rogers_tanimoto_textbook,
            "lofo_entropy": self.lofo_entropy,
        }


def normalize_mode(raw: str) -> str:
    mode = _MODE_ALIASES.get(raw, raw)
    if mode not in MODES:
        raise UsageError(f"unknown mode {raw!r}; use sbbl or hybrid")
    return mode


def load_config(path: str | Path) -> RunConfig:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read configuration {path}: {exc}") from exc
    return config_from_dict(payload, base=Path(path).parent)


def config_from_dict(payload: Mapping, base: Path | None = None) -> RunConfig:
    def as_path(value) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        if base is not None and not p.is_absolute():
            p = base / p
        return p

    known = {
        "corpus", "language", "coverage", "coverage_format", "outcomes", "diffs",
        "out_dir", "mode", "lm", "forest", "master_seed", "undersample_ratio",
        "relevance", "budgets", "exclude_uncovered", "rogers_tanimoto_textbook",
        "lofo_entropy",
    }
    unknown = set(payload).difference(known)
    if unknown:
        raise UsageError(f"unknown configuration keys: {sorted(unknown)}")
    lm_raw = dict(payload.get("lm", {}))
    if "lambda" in lm_raw:
        lm_raw["lam"] = lm_raw.pop("lambda")
    forest_raw = dict(payload.get("forest", {}))
    relevance = payload.get("relevance", {})
    try:
        config = RunConfig(
            corpus=as_path(payload.get("corpus")),
            language=payload.get("language", "java_like"),
            coverage=as_path(payload.get("coverage")),
            coverage_format=payload.get("coverage_format", "jsonl"),
            outcomes=as_path(payload.get("outcomes")),
            diff_paths=[as_path(p) for p in payload.get("diffs", [])],
            out_dir=as_path(payload.get("out_dir")) or Path("out"),
            mode=normalize_mode(payload.get("mode", "sbbl_plus_entropy")),
            lm=LMConfig(**lm_raw),
            forest=ForestConfig(**forest_raw),
            master_seed=int(payload.get("master_seed", 0)),
            undersample_ratio=float(payload.get("undersample_ratio", 10.0)),
            r_buggy=float(relevance.get("buggy", 1.0)),
            r_clean=float(relevance.get("clean", 0.0)),
            budgets=[float(b) for b in payload.get("budgets", [5.0, 20.0, 100.0])],
            exclude_uncovered=bool(payload.get("exclude_uncovered", False)),
            rogers_tanimoto_textbook=bool(payload.get("rogers_tanimoto_textbook", False)),
            lofo_entropy=bool(payload.get("lofo_entropy", True)),
        )
    except TypeError as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    config.validate()
    return config


@contextlib.contextmanager
def _stage(name: str) -> Iterator[None]:
    try:
        yield
    except DataError as exc:
        raise DataError(f"{name}: {exc}") from exc


def scan_corpus(root: Path, language: str) -> list[tokens.LineRecord]:
    """Tokenize every source file under root (sorted relative paths)."""
    root = Path(root)
    if root.is_file():
        return tokens.tokenize_file(root, language, root=root.parent)
    if not root.is_dir():
        raise DataError(f"corpus path {root} does not exist")
    extensions = SOURCE_EXTENSIONS[language]
    files = sorted(
        p for p in root.rglob("*") if p.is_file() and p.suffix in extensions
    )
    if not files:
        raise DataError(f"no {extensions} files under {root}")
    records: list[tokens.LineRecord] = []
    for path in files:
        records.extend(tokens.tokenize_file(path, language, root=root))
    return records


def read_traces(config: RunConfig) -> list[spectra.TestTrace]:
    if config.coverage_format == "lcov":
        return spectra.read_lcov(config.coverage, config.outcomes)
    return spectra.read_coverage_jsonl(config.coverage)


def _entropy_z_by_key(
    lines: Sequence[tokens.LineRecord],
    entropies: Sequence[ngram.LineEntropy],
    stats_per_channel: Mapping[str, ngram.TypeStats],
) -> dict[spectra.LineKey, tuple[float, float, float]]:
    out: dict[spectra.LineKey, tuple[float, float, float]] = {}
    for rec, ent in zip(lines, entropies):
        zs = tuple(
            ngram.zscore_normalize(ent.channel(ch), rec.line_type, stats_per_channel[ch])
            for ch in ngram.ENTROPY_CHANNELS
        )
        out[(rec.file, rec.line_no)] = zs
    return out


def _metric_by_key(
    matrix: spectra.SpectraMatrix,
    rogers_tanimoto_textbook: bool,
) -> dict[spectra.LineKey, tuple[float, ...]]:
    return {
        key: spectra.suspiciousness_vector(matrix.counters(key), rogers_tanimoto_textbook)
        for key in matrix.universe
    }


def _write_features_csv(
    path: Path,
    keys: Sequence[spectra.LineKey],
    metric_by_key: Mapping[spectra.LineKey, tuple[float, ...]],
    z_by_key: Mapping[spectra.LineKey, tuple[float, float, float]] | None,
    relevance_by_key: Mapping[spectra.LineKey, float] | None,
) -> None:
    columns = list(spectra.METRIC_NAMES)
    if z_by_key is not None:
        columns += list(forest.ENTROPY_FEATURE_NAMES)
    header = "file,line_no," + ",".join(columns)
    if relevance_by_key is not None:
        header += ",relevance"
    rows = [header]
    for key in keys:
        values = list(metric_by_key[key])
        if z_by_key is not None:
            values += list(z_by_key[key])
        row = f"{key[0]},{key[1]}," + ",".join(repr(v) for v in values)
        if relevance_by_key is not None:
            row += f",{relevance_by_key[key]!r}"
        rows.append(row)
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def _budget_key(budget: float) -> str:
    return f"{budget:g}"


def run_experiment(config: RunConfig) -> dict:
    """Execute the full pipeline and write the report bundle into out_dir."""
    config.validate()
    config.require_paths()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with _stage("tokenize"):
        lines = scan_corpus(config.corpus, config.language)
    universe = [(rec.file, rec.line_no) for rec in lines]

    with _stage("train-lm"):
        model_f = ngram.train_ngram(
            lines, config.lm.n, "forward", config.lm.lam, config.lm.cache_window
        )
        model_b = ngram.train_ngram(
            lines, config.lm.n, "backward", config.lm.lam, config.lm.cache_window
        )

    with _stage("entropy"):
        entropies = ngram.corpus_entropies(
            model_f, model_b, lines, exclude_scored_file=config.lofo_entropy
        )
        stats_per_channel = {
            ch: ngram.compute_type_stats(entropies, lines, ch)
            for ch in ngram.ENTROPY_CHANNELS
        }
        z_by_key = _entropy_z_by_key(lines, entropies, stats_per_channel)
        ngram.write_entropy_csv(out / "entropy.csv", lines, entropies, stats_per_channel)

    with _stage("spectrum"):
        traces = read_traces(config)
        matrix = spectra.ingest_coverage(traces, universe)
        spectra.write_spectra_csv(
            out / "spectra.csv", matrix, config.rogers_tanimoto_textbook
        )
    metric_by_key = _metric_by_key(matrix, config.rogers_tanimoto_textbook)

    with _stage("annotate"):
        annotations = diffs.annotate_files(config.diff_paths)
        buggy_all = diffs.merged_buggy_lines(annotations)
        outside = sorted(buggy_all.difference(universe))
        if outside:
            shown = ", ".join(f"{f}:{ln}" for f, ln in outside[:10])
            raise DataError(f"annotated lines missing from the corpus: {shown}")

    if config.exclude_uncovered:
        ranking_keys = [k for k in universe if sum(matrix.counters(k)[:2]) > 0]
        buggy_eval = buggy_all.intersection(ranking_keys)
    else:
        ranking_keys = universe
        buggy_eval = buggy_all

    hybrid = config.mode == "sbbl_plus_entropy"
    X_all = np.asarray(
        [list(metric_by_key[k]) + list(z_by_key[k]) for k in ranking_keys],
        dtype=np.float64,
    )
    n_metrics = len(spectra.METRIC_NAMES)

    with _stage("label"):
        instances = forest.label_lines(
            ranking_keys, buggy_eval, config.r_buggy, config.r_clean
        )
        row_of = {key: i for i, key in enumerate(ranking_keys)}
        feature_slice = slice(None) if hybrid else slice(0, n_metrics)
        for inst in instances:
            inst.features = X_all[row_of[inst.key], feature_slice]

    with _stage("undersample"):
        sampled = forest.undersample(
            instances, config.undersample_ratio, config.master_seed, config.r_buggy
        )

    params = forest.ForestParams(
        trees=config.forest.trees,
        max_depth=config.forest.max_depth,
        min_leaf=config.forest.min_leaf,
        feature_subset=config.forest.feature_subset,
        master_seed=config.master_seed,
    )
    feature_names = forest.HYBRID_FEATURE_NAMES if hybrid else forest.SBBL_FEATURE_NAMES
    with _stage("train"):
        model = forest.train_forest(sampled, params, feature_names)
    forest.save_model(model, out / "model.json")

    with _stage("rank"):
        scores = forest.hybrid_scores(
            model, X_all[:, feature_slice], config.r_buggy, config.r_clean
        )
        report = forest.rank_lines(list(zip(ranking_keys, scores.tolist())))
    forest.write_ranked_csv(out / "ranked.csv", report, model)

    relevance_by_key = {inst.key: inst.relevance for inst in instances}
    _write_features_csv(
        out / "features.csv",
        ranking_keys,
        metric_by_key,
        z_by_key if hybrid else None,
        relevance_by_key,
    )

    with _stage("evaluate"):
        curve = evaluation.ce_curve(report, buggy_eval)
        evaluation.write_ce_csv(out / "ce_curve.csv", curve)
        evaluation.write_ce_svg(out / "ce_curve.svg", curve)
        aucec_run = {
            _budget_key(b): evaluation.aucec(curve, b) for b in config.budgets
        }
        result: dict = {
            "mode": config.mode,
            "n_lines": len(ranking_keys),
            "n_buggy": len(buggy_eval),
            "n_tests_passing": matrix.passing_total,
            "n_tests_failing": matrix.failing_total,
            "omission_only_bugs": sum(1 for a in annotations if a.omission_only),
            "budgets": [_budget_key(b) for b in config.budgets],
            "aucec": aucec_run,
        }
        if hybrid:
            sbbl_model = forest.train_forest(
                [
                    forest.LabeledInstance(
                        key=inst.key,
                        relevance=inst.relevance,
                        features=inst.features[:n_metrics],
                    )
                    for inst in sampled
                ],
                params,
                forest.SBBL_FEATURE_NAMES,
            )
            sbbl_scores = forest.hybrid_scores(
                sbbl_model, X_all[:, :n_metrics], config.r_buggy, config.r_clean
            )
            sbbl_report = forest.rank_lines(list(zip(ranking_keys, sbbl_scores.tolist())))
            sbbl_curve = evaluation.ce_curve(sbbl_report, buggy_eval)
            aucec_sbbl = {
                _budget_key(b): evaluation.aucec(sbbl_curve, b) for b in config.budgets
            }
            result["aucec_sbbl_only"] = aucec_sbbl
            result["gain_percent"] = {
                key: (
                    evaluation.gain(aucec_run[key], aucec_sbbl[key])
                    if aucec_sbbl[key] > 0
                    else None
                )
                for key in aucec_run
            }
        (out / "evaluation.json").write_text(
            json.dumps(result, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    with _stage("stats"):
        groups = spectra.group_by_spectra(matrix)
        values = {
            (ent.file, ent.line_no): ent.channel(STATS_CHANNEL) for ent in entropies
        }
        group_stats = evaluation.group_entropy_stats(groups, buggy_all, values)
        (out / "stats.json").write_text(
            json.dumps(
                {"channel": STATS_CHANNEL, "groups": group_stats},
                sort_keys=True,
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )

    importance_report = {
        "feature_importances": {
            name: float(w)
            for name, w in zip(model.feature_names, model.feature_importances)
        },
        "top_features": [
            {"feature": name, "importance": weight} for name, weight in model.top_features(3)
        ],
    }
    (out / "feature_importances.json").write_text(
        json.dumps(importance_report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    echo = config.echo_dict()
    (out / "config.json").write_text(
        json.dumps(echo, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    if matrix.unknown_covered:
        result["unknown_covered"] = len(matrix.unknown_covered)
    return result


def _version_config(entry: evaluation.VersionEntry, template: RunConfig, base: Path) -> RunConfig:
    paths = entry.paths
    if "corpus" not in paths or "coverage" not in paths:
        raise DataError(
            f"manifest entry {entry.version_id!r} misses corpus or coverage paths"
        )

    def resolve(raw) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else base / p

    return RunConfig(
        corpus=resolve(paths["corpus"]),
        language=entry.language,
        coverage=resolve(paths["coverage"]),
        coverage_format=paths.get("coverage_format", "jsonl"),
        outcomes=resolve(paths["outcomes"]) if paths.get("outcomes") else None,
        diff_paths=[resolve(p) for p in paths.get("diffs", [])],
        out_dir=template.out_dir,
        mode=template.mode,
        lm=template.lm,
        forest=template.forest,
        master_seed=template.master_seed,
        undersample_ratio=template.undersample_ratio,
        r_buggy=template.r_buggy,
        r_clean=template.r_clean,
        budgets=template.budgets,
        exclude_uncovered=template.exclude_uncovered,
        rogers_tanimoto_textbook=template.rogers_tanimoto_textbook,
        lofo_entropy=template.lofo_entropy,
    )


def run_cross_project(
    manifest_path: str | Path,
    template: RunConfig,
    out_dir: Path | None = None,
) -> dict:
    """Per target version: train the language model and the forest only on
    earlier same-language versions of other projects, then rank the target."""
    manifest = evaluation.read_manifest(manifest_path)
    base = Path(manifest_path).parent
    out_root = Path(out_dir if out_dir is not None else template.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    summary: dict = {"targets": [], "skipped": []}

    for entry in sorted(manifest.entries, key=lambda e: e.order_key):
        try:
            split = evaluation.cross_project_split(manifest, entry.version_id)
        except DataError as exc:
            summary["skipped"].append({"version_id": entry.version_id, "reason": str(exc)})
            continue
        target_config = _version_config(entry, template, base)
        target_config.out_dir = out_root / entry.version_id
        result = _run_cross_target(
            target_config,
            [_version_config(manifest.find(v), template, base) for v in split],
        )
        result["version_id"] = entry.version_id
        result["trained_on"] = split
        summary["targets"].append(result)

    (out_root / "cross_summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return summary


def _prefixed(records: list[tokens.LineRecord], prefix: str) -> list[tokens.LineRecord]:
    return [
        tokens.LineRecord(
            file=f"{prefix}//{rec.file}",
            line_no=rec.line_no,
            tokens=rec.tokens,
            line_type=rec.line_type,
        )
        for rec in records
    ]


def _run_cross_target(config: RunConfig, train_configs: list[RunConfig]) -> dict:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hybrid = config.mode == "sbbl_plus_entropy"
    n_metrics = len(spectra.METRIC_NAMES)

    # Training side: pooled cross-project corpus for the language model and
    # per-version spectra/labels for the forest.
    train_lines_all: list[tokens.LineRecord] = []
    per_version: list[tuple[RunConfig, list[tokens.LineRecord]]] = []
    for tc in train_configs:
        with _stage(f"tokenize[{tc.corpus}]"):
            version_lines = scan_corpus(tc.corpus, tc.language)
        prefixed = _prefixed(version_lines, str(tc.corpus))
        train_lines_all.extend(prefixed)
        per_version.append((tc, version_lines))

    with _stage("train-lm"):
        model_f = ngram.train_ngram(
            train_lines_all, config.lm.n, "forward", config.lm.lam, config.lm.cache_window
        )
        model_b = ngram.train_ngram(
            train_lines_all, config.lm.n, "backward", config.lm.lam, config.lm.cache_window
        )
        train_entropies = ngram.corpus_entropies(
            model_f, model_b, train_lines_all, exclude_scored_file=config.lofo_entropy
        )
        stats_per_channel = {
            ch: ngram.compute_type_stats(train_entropies, train_lines_all, ch)
            for ch in ngram.ENTROPY_CHANNELS
        }
        ngram.save_type_stats(out / "type_stats.json", stats_per_channel)

    train_instances: list[forest.LabeledInstance] = []
    train_entropy_index = {
        (ent.file, ent.line_no): ent for ent in train_entropies
    }
    for tc, version_lines in per_version:
        prefix = str(tc.corpus)
        universe = [(rec.file, rec.line_no) for rec in version_lines]
        with _stage(f"spectrum[{tc.coverage}]"):
            matrix = spectra.ingest_coverage(read_traces(tc), universe)
        metric_by_key = _metric_by_key(matrix, config.rogers_tanimoto_textbook)
        with _stage(f"annotate[{tc.corpus}]"):
            buggy = diffs.merged_buggy_lines(diffs.annotate_files(tc.diff_paths))
            buggy = buggy.intersection(universe)
        prefixed_entropies = [
            train_entropy_index[(f"{prefix}//{rec.file}", rec.line_no)]
            for rec in version_lines
        ]
        z_by_key = _entropy_z_by_key(version_lines, prefixed_entropies, stats_per_channel)
        labeled = forest.label_lines(universe, buggy, config.r_buggy, config.r_clean)
        for inst in labeled:
            vec = list(metric_by_key[inst.key]) + list(z_by_key[inst.key])
            inst.features = np.asarray(
                vec if hybrid else vec[:n_metrics], dtype=np.float64
            )
            # Keys must stay unique across pooled versions.
            inst.key = (f"{prefix}//{inst.key[0]}", inst.key[1])
        train_instances.extend(labeled)

    with _stage("undersample"):
        sampled = forest.undersample(
            train_instances, config.undersample_ratio, config.master_seed, config.r_buggy
        )
    params = forest.ForestParams(
        trees=config.forest.trees,
        max_depth=config.forest.max_depth,
        min_leaf=config.forest.min_leaf,
        feature_subset=config.forest.feature_subset,
        master_seed=config.master_seed,
    )
    feature_names = forest.HYBRID_FEATURE_NAMES if hybrid else forest.SBBL_FEATURE_NAMES
    with _stage("train"):
        model = forest.train_forest(sampled, params, feature_names)
    forest.save_model(model, out / "model.json")

    # Target side: entropies under the cross-trained model, Z-scores from the
    # training-side type statistics.
    with _stage("tokenize"):
        target_lines = scan_corpus(config.corpus, config.language)
    target_universe = [(rec.file, rec.line_no) for rec in target_lines]
    with _stage("entropy"):
        target_entropies = ngram.corpus_entropies(model_f, model_b, target_lines)
        z_by_key = _entropy_z_by_key(target_lines, target_entropies, stats_per_channel)
        ngram.write_entropy_csv(
            out / "entropy.csv", target_lines, target_entropies, stats_per_channel
        )
    with _stage("spectrum"):
        matrix = spectra.ingest_coverage(read_traces(config), target_universe)
        spectra.write_spectra_csv(out / "spectra.csv", matrix, config.rogers_tanimoto_textbook)
    metric_by_key = _metric_by_key(matrix, config.rogers_tanimoto_textbook)
    with _stage("annotate"):
        annotations = diffs.annotate_files(config.diff_paths)
        buggy_all = diffs.merged_buggy_lines(annotations)
        outside = sorted(buggy_all.difference(target_universe))
        if outside:
            shown = ", ".join(f"{f}:{ln}" for f, ln in outside[:10])
            raise DataError(f"annotated lines missing from the corpus: {shown}")

    if config.exclude_uncovered:
        ranking_keys = [k for k in target_universe if sum(matrix.counters(k)[:2]) > 0]
        buggy_eval = buggy_all.intersection(ranking_keys)
    else:
        ranking_keys = target_universe
        buggy_eval = buggy_all

    X_all = np.asarray(
        [list(metric_by_key[k]) + list(z_by_key[k]) for k in ranking_keys],
        dtype=np.float64,
    )
    feature_slice = slice(None) if hybrid else slice(0, n_metrics)
    with _stage("rank"):
        scores = forest.hybrid_scores(
            model, X_all[:, feature_slice], config.r_buggy, config.r_clean
        )
        report = forest.rank_lines(list(zip(ranking_keys, scores.tolist())))
    forest.write_ranked_csv(out / "ranked.csv", report, model)

    with _stage("evaluate"):
        curve = evaluation.ce_curve(report, buggy_eval)
        evaluation.write_ce_csv(out / "ce_curve.csv", curve)
        evaluation.write_ce_svg(out / "ce_curve.svg", curve)
        result: dict = {
            "mode": config.mode,
            "n_lines": len(ranking_keys),
            "n_buggy": len(buggy_eval),
            "aucec": {_budget_key(b): evaluation.aucec(curve, b) for b in config.budgets},
        }
        if hybrid:
            sbbl_model = forest.train_forest(
                [
                    forest.LabeledInstance(
                        key=inst.key,
                        relevance=inst.relevance,
                        features=inst.features[:n_metrics],
                    )
                    for inst in sampled
                ],
                params,
                forest.SBBL_FEATURE_NAMES,
            )
            sbbl_scores = forest.hybrid_scores(
                sbbl_model, X_all[:, :n_metrics], config.r_buggy, config.r_clean
            )
            sbbl_report = forest.rank_lines(list(zip(ranking_keys, sbbl_scores.tolist())))
            sbbl_curve = evaluation.ce_curve(sbbl_report, buggy_eval)
            aucec_sbbl = {
                _budget_key(b): evaluation.aucec(sbbl_curve, b) for b in config.budgets
            }
            result["aucec_sbbl_only"] = aucec_sbbl
            result["gain_percent"] = {
                k: (
                    evaluation.gain(result["aucec"][k], aucec_sbbl[k])
                    if aucec_sbbl[k] > 0
                    else None
                )
                for k in result["aucec"]
            }
        (out / "evaluation.json").write_text(
            json.dumps(result, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    importance_report = {
        "feature_importances": {
            name: float(w)
            for name, w in zip(model.feature_names, model.feature_importances)
        },
        "top_features": [
            {"feature": name, "importance": weight} for name, weight in model.top_features(3)
        ],
    }
    (out / "feature_importances.json").write_text(
        json.dumps(importance_report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return result
