"""Learning-to-rank over the joined feature vectors: relevance labeling,
class rebalancing, a deterministic random forest, and the hybrid
suspiciousness ranking it produces.

Every source of randomness is derived from one master seed, so a whole
training/scoring round is reproducible bit for bit. Tree construction and
batch scoring run through the kernels package (compiled when available).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DataError, InternalError
from .spectra import METRIC_NAMES, LineKey

ENTROPY_FEATURE_NAMES = ("ForwardEntropyZ", "BackwardEntropyZ", "AverageEntropyZ")
HYBRID_FEATURE_NAMES: tuple[str, ...] = METRIC_NAMES + ENTROPY_FEATURE_NAMES
SBBL_FEATURE_NAMES: tuple[str, ...] = METRIC_NAMES

MODEL_FORMAT = "entrospect-forest"
MODEL_VERSION = 1

# Seed-stream tags so undersampling and tree building never share a stream.
_UNDERSAMPLE_TAG = 101
_TREE_TAG = 7


@dataclass
class LabeledInstance:
    key: LineKey
    relevance: float
    features: np.ndarray | None = None


@dataclass
class ForestParams:
    trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    feature_subset: int = 6
    master_seed: int = 0


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@dataclass
class ForestModel:
    params: ForestParams
    feature_names: tuple[str, ...]
    trees: list[Tree]
    feature_importances: np.ndarray

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def positive_probabilities(self, X: np.ndarray) -> np.ndarray:
        """Per-tree probability matrix, shape (trees, rows)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(
                f"feature matrix has {X.shape[1] if X.ndim == 2 else '?'} columns, "
                f"model expects {self.n_features}"
            )
        return np.vstack(
            [
                kernels.predict_tree(t.feature, t.threshold, t.left, t.right, t.value, X)
                for t in self.trees
            ]
        )

    def top_features(self, k: int = 3) -> list[tuple[str, float]]:
        order = np.argsort(-self.feature_importances, kind="stable")
        return [
            (self.feature_names[i], float(self.feature_importances[i]))
            for i in order[:k]
        ]


def label_lines(
    universe: Sequence[LineKey],
    buggy: Iterable[LineKey],
    r_buggy: float = 1.0,
    r_clean: float = 0.0,
) -> list[LabeledInstance]:
    """Attach the buggy/clean relevance score to every universe line."""
    if not r_buggy > r_clean:
        raise ValueError("buggy relevance must exceed clean relevance")
    buggy = set(buggy)
    offenders = sorted(buggy.difference(universe))
    if offenders:
        shown = ", ".join(f"{f}:{ln}" for f, ln in offenders[:10])
        more = "" if len(offenders) <= 10 else f" (+{len(offenders) - 10} more)"
        raise DataError(f"buggy lines outside the line universe: {shown}{more}")
    return [
        LabeledInstance(key=key, relevance=r_buggy if key in buggy else r_clean)
        for key in universe
    ]


def undersample(
    instances: Sequence[LabeledInstance],
    target_ratio: float,
    seed: int,
    r_buggy: float | None = None,
) -> list[LabeledInstance]:
    """Keep all buggy instances; thin the clean ones to ceil(ratio * buggy).

    Sampling is without replacement and deterministic for a given seed;
    surviving instances keep their original order. When r_buggy is omitted
    the larger of the two relevance scores present is taken as buggy.
    """
    if target_ratio <= 0:
        raise ValueError("target_ratio must be positive")
    relevances = sorted({inst.relevance for inst in instances})
    if len(relevances) > 2:
        raise DataError("instances carry more than two distinct relevance scores")
    if r_buggy is None:
        if len(relevances) < 2:
            raise DataError("cannot train: no positive class")
        r_buggy = relevances[-1]
    buggy_count = sum(1 for inst in instances if inst.relevance == r_buggy)
    if buggy_count == 0:
        raise DataError("cannot train: no positive class")
    clean_idx = np.array(
        [i for i, inst in enumerate(instances) if inst.relevance != r_buggy],
        dtype=np.int64,
    )
    target = math.ceil(target_ratio * buggy_count)
    keep = set(range(len(instances)))
    if len(clean_idx) > target:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), _UNDERSAMPLE_TAG]))
        chosen = rng.choice(clean_idx, size=target, replace=False)
        dropped = set(clean_idx.tolist()).difference(chosen.tolist())
        keep.difference_update(dropped)
    return [inst for i, inst in enumerate(instances) if i in keep]


def train_forest(
    instances: Sequence[LabeledInstance],
    params: ForestParams,
    feature_names: Sequence[str],
) -> ForestModel:
    """Fit the ensemble on bootstrap samples with random per-split feature subsets.

    Per-tree seeds derive from (master_seed, tree index), which makes the
    model independent of any parallel scheduling order.
    """
    feature_names = tuple(feature_names)
    if not instances:
        raise DataError("cannot train on an empty instance set")
    for inst in instances:
        if inst.features is None:
            raise DataError(f"instance {inst.key} has no feature vector")
        if len(inst.features) != len(feature_names):
            raise DataError(
                f"instance {inst.key} has {len(inst.features)} features, "
                f"expected {len(feature_names)}"
            )
    X = np.ascontiguousarray([inst.features for inst in instances], dtype=np.float64)
    if not np.isfinite(X).all():
        raise InternalError("feature matrix contains non-finite values")
    relevances = sorted({inst.relevance for inst in instances})
    if len(relevances) != 2:
        raise DataError("training requires exactly two relevance classes")
    r_buggy = relevances[-1]
    y = np.fromiter(
        (1 if inst.relevance == r_buggy else 0 for inst in instances),
        dtype=np.uint8,
        count=len(instances),
    )
    n = len(instances)
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    trees: list[Tree] = []
    importance_total = np.zeros(len(feature_names), dtype=np.float64)
    for k in range(params.trees):
        rng = np.random.default_rng(
            np.random.SeedSequence([int(params.master_seed), _TREE_TAG, k])
        )
        rows = rng.integers(0, n, size=n, dtype=np.int64)
        kernel_seed = int(rng.integers(0, 2**64, dtype=np.uint64))
        feature, threshold, left, right, value, importance = kernels.build_tree(
            X, y, rows, params.feature_subset, params.min_leaf, max_depth, kernel_seed
        )
        trees.append(Tree(feature, threshold, left, right, value))
        importance_total += importance
    total = float(importance_total.sum())
    if total > 0.0:
        importances = importance_total / total
    else:
        importances = np.full(len(feature_names), 1.0 / len(feature_names))
    return ForestModel(
        params=params,
        feature_names=feature_names,
        trees=trees,
        feature_importances=importances,
    )


def hybrid_suspiciousness(
    model: ForestModel,
    features: np.ndarray,
    r_buggy: float = 1.0,
    r_clean: float = 0.0,
) -> float:
    """Ensemble-averaged expected relevance of one feature vector."""
    return float(
        hybrid_scores(model, np.asarray(features, dtype=np.float64)[None, :], r_buggy, r_clean)[0]
    )


def hybrid_scores(
    model: ForestModel,
    X: np.ndarray,
    r_buggy: float = 1.0,
    r_clean: float = 0.0,
) -> np.ndarray:
    """Batch scores: per tree r_clean + (r_buggy - r_clean) * P(buggy), then averaged."""
    probs = model.positive_probabilities(X)
    per_tree = r_clean + (r_buggy - r_clean) * probs
    return per_tree.mean(axis=0)


@dataclass
class RankedReport:
    entries: list[tuple[int, LineKey, float]] = field(default_factory=list)

    def keys(self) -> list[LineKey]:
        return [key for _rank, key, _score in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def rank_lines(scored: Sequence[tuple[LineKey, float]]) -> RankedReport:
    """Order by decreasing score; ties break on (file, line_no) ascending."""
    seen: set[LineKey] = set()
    for key, _score in scored:
        if key in seen:
            raise DataError(f"duplicate line key {key[0]}:{key[1]}")
        seen.add(key)
    ordered = sorted(scored, key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))
    return RankedReport(
        entries=[(rank, key, score) for rank, (key, score) in enumerate(ordered, start=1)]
    )


def save_model(model: ForestModel, path: str | Path) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "params": {
            "trees": model.params.trees,
            "max_depth": model.params.max_depth,
            "min_leaf": model.params.min_leaf,
            "feature_subset": model.params.feature_subset,
            "master_seed": model.params.master_seed,
        },
        "feature_names": list(model.feature_names),
        "feature_importances": [repr(v) for v in model.feature_importances.tolist()],
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": [repr(v) for v in t.threshold.tolist()],
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": [repr(v) for v in t.value.tolist()],
            }
            for t in model.trees
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_model(path: str | Path) -> ForestModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_VERSION:
        raise DataError(f"{path}: unsupported version {payload.get('version')}")
    params = ForestParams(**payload["params"])
    trees = [
        Tree(
            feature=np.asarray(t["feature"], dtype=np.int32),
            threshold=np.asarray([float(v) for v in t["threshold"]], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int32),
            right=np.asarray(t["right"], dtype=np.int32),
            value=np.asarray([float(v) for v in t["value"]], dtype=np.float64),
        )
        for t in payload["trees"]
    ]
    importances = np.asarray(
        [float(v) for v in payload["feature_importances"]], dtype=np.float64
    )
    return ForestModel(
        params=params,
        feature_names=tuple(payload["feature_names"]),
        trees=trees,
        feature_importances=importances,
    )


def write_ranked_csv(path: str | Path, report: RankedReport, model: ForestModel | None = None) -> None:
    """Ranked lines as CSV; the top three feature importances echo in the header."""
    rows = []
    if model is not None:
        top = " ".join(f"{name}={weight:.6f}" for name, weight in model.top_features(3))
        rows.append(f"# top_features: {top}")
    rows.append("rank,file,line_no,HySusp")
    for rank, key, score in report.entries:
        rows.append(f"{rank},{key[0]},{key[1]},{score!r}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_ranked_csv(path: str | Path) -> RankedReport:
    entries: list[tuple[int, LineKey, float]] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if not raw or raw.startswith("#") or raw.startswith("rank,"):
            continue
        rank, file, line_no, score = raw.split(",")
        entries.append((int(rank), (file, int(line_no)), float(score)))
    return RankedReport(entries=entries)
