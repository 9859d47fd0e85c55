"""Cache-augmented n-gram language model over token streams and the derived
per-line entropy features.

Each line gets a forward entropy (mean surprisal scoring the file top to
bottom), a backward entropy (scoring the reversed token stream), and their
average. Entropies are then standardized per syntactic line type into
Z-scores, which is what the ranker consumes.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError
from .tokens import LineRecord, LineType

# Sentinel sharing one probability slot among all out-of-vocabulary tokens.
UNK_TOKEN = chr(0)

FORMAT_NAME = "entrospect-ngram-counts"
FORMAT_VERSION = 1

ENTROPY_CHANNELS = ("E_f", "E_b", "E_a")


@dataclass
class LineEntropy:
    file: str
    line_no: int
    e_forward: float
    e_backward: float
    e_average: float

    def channel(self, which: str) -> float:
        if which == "E_f":
            return self.e_forward
        if which == "E_b":
            return self.e_backward
        if which == "E_a":
            return self.e_average
        raise ValueError(f"unknown entropy channel {which!r}")


class CacheState:
    """Sliding window of the most recent n-grams of the file being scored.

    Also carries the running token history so callers can score a stream
    line by line. Not safe to share between concurrent scoring sessions.
    """

    def __init__(self, n: int, window: int):
        self.n = n
        self.window = window
        self.context: deque[str] = deque(maxlen=max(n - 1, 0))
        self._grams: deque[tuple[str, ...]] = deque()
        self._counts: dict[tuple[str, ...], dict[str, int]] = {}
        self._totals: dict[tuple[str, ...], int] = {}

    def total(self, context: tuple[str, ...]) -> int:
        return self._totals.get(context, 0)

    def count(self, context: tuple[str, ...], token: str) -> int:
        by_tok = self._counts.get(context)
        return 0 if by_tok is None else by_tok.get(token, 0)

    def observe(self, gram: tuple[str, ...]) -> None:
        """Insert one n-gram, evicting the oldest once the window is full."""
        if self.window <= 0:
            return
        self._grams.append(gram)
        ctx, tok = gram[:-1], gram[-1]
        self._counts.setdefault(ctx, {})
        self._counts[ctx][tok] = self._counts[ctx].get(tok, 0) + 1
        self._totals[ctx] = self._totals.get(ctx, 0) + 1
        if len(self._grams) > self.window:
            old = self._grams.popleft()
            octx, otok = old[:-1], old[-1]
            by_tok = self._counts[octx]
            by_tok[otok] -= 1
            if by_tok[otok] == 0:
                del by_tok[otok]
            self._totals[octx] -= 1
            if self._totals[octx] == 0:
                del self._totals[octx]
                del self._counts[octx]


class NgramModel:
    """Interpolated n-gram counts for one scoring direction.

    Immutable once trained; multiple threads may score with it concurrently
    as long as each uses its own CacheState.
    """

    def __init__(
        self,
        n: int,
        direction: str,
        lam: float = 0.5,
        cache_window: int = 5000,
    ):
        if n < 1:
            raise ValueError("model order must be >= 1")
        if direction not in ("forward", "backward"):
            raise ValueError(f"direction must be forward or backward, got {direction!r}")
        if not 0.0 < lam < 1.0:
            raise ValueError("cache interpolation weight must lie in (0, 1)")
        if cache_window < 0:
            raise ValueError("cache_window must be >= 0")
        self.n = n
        self.direction = direction
        self.lam = lam
        self.cache_window = cache_window
        self.counts: dict[tuple[str, ...], dict[str, int]] = {}
        self.totals: dict[tuple[str, ...], int] = {}
        self.vocabulary: set[str] = set()

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    def new_cache(self) -> CacheState:
        return CacheState(self.n, self.cache_window)

    def _observe(self, context: tuple[str, ...], token: str) -> None:
        by_tok = self.counts.setdefault(context, {})
        by_tok[token] = by_tok.get(token, 0) + 1
        self.totals[context] = self.totals.get(context, 0) + 1

    def _cache_key(self, token: str) -> str:
        return token if token in self.vocabulary else UNK_TOKEN

    def _total(self, context: tuple[str, ...]) -> int:
        return self.totals.get(context, 0)

    def _count(self, context: tuple[str, ...], token: str) -> int:
        by_tok = self.counts.get(context)
        return 0 if by_tok is None else by_tok.get(token, 0)

    def without_file(self, file_lines: Sequence["LineRecord"]) -> "NgramModel":
        """View of this model with one file's contributions subtracted.

        Standard protocol for scoring a file that was part of the training
        corpus: the global estimate must not contain the file itself, the
        cache supplies its local regularities. Tokens occurring only in the
        excluded file leave the vocabulary. The view shares the base count
        tables and must not outlive concurrent mutation of the base.
        """
        counts, totals = _count_stream_grams(
            [t.text for rec in file_lines for t in rec.tokens], self.n, self.direction
        )
        removed = {
            tok
            for tok, cnt in counts.get((), {}).items()
            if self._count((), tok) == cnt
        }
        return _FileExcludedModel(self, counts, totals, removed)

    def global_probability(self, context: Sequence[str], token: str) -> float:
        """Interpolated probability from the trained counts alone.

        Orders mix with weight 0.5 each, bottoming out at a uniform floor
        over vocabulary size + 1 so every token, seen or not, gets strictly
        positive mass and each context distribution sums to one.
        """
        ctx = tuple(context)[max(len(context) - (self.n - 1), 0):] if self.n > 1 else ()
        p = 1.0 / (len(self.vocabulary) + 1)
        for k in range(0, len(ctx) + 1):
            h = ctx[len(ctx) - k:]
            total = self._total(h)
            if total == 0:
                continue
            ml = self._count(h, token) / total
            p = 0.5 * ml + 0.5 * p
        return p

    def probability(
        self,
        context: Sequence[str],
        token: str,
        cache: CacheState | None = None,
    ) -> float:
        """Cache-interpolated token probability; always in (0, 1].

        The cache side is the maximum likelihood estimate over the window
        and falls back to the global estimate when the window holds no mass
        for this context.
        """
        p_global = self.global_probability(context, token)
        if cache is None:
            return p_global
        ctx = tuple(context)[max(len(context) - (self.n - 1), 0):] if self.n > 1 else ()
        mctx = tuple(self._cache_key(t) for t in ctx)
        total = cache.total(mctx)
        if total == 0:
            p_cache = p_global
        else:
            p_cache = cache.count(mctx, self._cache_key(token)) / total
        return self.lam * p_cache + (1.0 - self.lam) * p_global

    def score_line(self, line_tokens: Sequence[str], cache: CacheState) -> float:
        """Mean surprisal of the tokens in bits; cache updated afterwards.

        Scoring strictly precedes insertion so a line never predicts itself
        through the cache. The running context advances token by token.
        """
        if not line_tokens:
            return 0.0
        history = list(cache.context)
        bits = 0.0
        for tok in line_tokens:
            bits += -math.log2(self.probability(history, tok, cache))
            history.append(tok)
        entropy = bits / len(line_tokens)
        # Insert this line's n-grams (windows ending at each new token).
        full = history
        start = len(full) - len(line_tokens)
        if self.n >= 1:
            for i in range(start, len(full)):
                if i - (self.n - 1) >= 0:
                    gram = tuple(self._cache_key(t) for t in full[i - (self.n - 1): i + 1])
                    cache.observe(gram)
        for tok in line_tokens:
            cache.context.append(tok)
        return entropy

    def save(self, path: str | Path) -> None:
        payload = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "n": self.n,
            "direction": self.direction,
            "lambda": self.lam,
            "cache_window": self.cache_window,
            "vocab_size": self.vocab_size,
            "vocabulary": sorted(self.vocabulary),
            "counts": [
                [list(ctx), sorted(by_tok.items())]
                for ctx, by_tok in sorted(self.counts.items())
            ],
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NgramModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format") != FORMAT_NAME:
            raise DataError(f"{path}: not a {FORMAT_NAME} file")
        if payload.get("version") != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported version {payload.get('version')}")
        model = cls(
            n=payload["n"],
            direction=payload["direction"],
            lam=payload["lambda"],
            cache_window=payload["cache_window"],
        )
        model.vocabulary = set(payload["vocabulary"])
        for ctx, pairs in payload["counts"]:
            key = tuple(ctx)
            model.counts[key] = {tok: int(c) for tok, c in pairs}
            model.totals[key] = sum(model.counts[key].values())
        return model


class _FileExcludedModel(NgramModel):
    """Leave-one-file-out view over a trained model; no copied count tables."""

    def __init__(
        self,
        base: NgramModel,
        delta_counts: dict[tuple[str, ...], dict[str, int]],
        delta_totals: dict[tuple[str, ...], int],
        removed_vocab: set[str],
    ):
        super().__init__(base.n, base.direction, base.lam, base.cache_window)
        self._base = base
        self._delta_counts = delta_counts
        self._delta_totals = delta_totals
        self.vocabulary = base.vocabulary - removed_vocab

    def _total(self, context: tuple[str, ...]) -> int:
        return self._base._total(context) - self._delta_totals.get(context, 0)

    def _count(self, context: tuple[str, ...], token: str) -> int:
        delta = self._delta_counts.get(context)
        removed = 0 if delta is None else delta.get(token, 0)
        return self._base._count(context, token) - removed


def _count_stream_grams(
    stream: list[str],
    n: int,
    direction: str,
) -> tuple[dict[tuple[str, ...], dict[str, int]], dict[tuple[str, ...], int]]:
    counts: dict[tuple[str, ...], dict[str, int]] = {}
    totals: dict[tuple[str, ...], int] = {}
    if direction == "backward":
        stream = list(reversed(stream))
    for i, tok in enumerate(stream):
        for k in range(0, n):
            if i - k < 0:
                break
            ctx = tuple(stream[i - k: i])
            by_tok = counts.setdefault(ctx, {})
            by_tok[tok] = by_tok.get(tok, 0) + 1
            totals[ctx] = totals.get(ctx, 0) + 1
    return counts, totals


def train_ngram(
    corpus: Iterable[LineRecord],
    n: int,
    direction: str,
    lam: float = 0.5,
    cache_window: int = 5000,
) -> NgramModel:
    """Count all k-grams (k <= n) per file stream; backward reverses each file."""
    model = NgramModel(n=n, direction=direction, lam=lam, cache_window=cache_window)
    streams = _streams_by_file(corpus)
    if not streams:
        raise DataError("cannot train n-gram model on an empty corpus")
    any_tokens = False
    for _file, stream in streams:
        if stream:
            any_tokens = True
            model.vocabulary.update(stream)
        counts, totals = _count_stream_grams(stream, n, direction)
        for ctx, by_tok in counts.items():
            target = model.counts.setdefault(ctx, {})
            for tok, cnt in by_tok.items():
                target[tok] = target.get(tok, 0) + cnt
            model.totals[ctx] = model.totals.get(ctx, 0) + totals[ctx]
    if not any_tokens:
        raise DataError("cannot train n-gram model: corpus has no tokens")
    return model


def _streams_by_file(corpus: Iterable[LineRecord]) -> list[tuple[str, list[str]]]:
    order: list[str] = []
    by_file: dict[str, list[str]] = {}
    for rec in corpus:
        if rec.file not in by_file:
            by_file[rec.file] = []
            order.append(rec.file)
        by_file[rec.file].extend(t.text for t in rec.tokens)
    return [(f, by_file[f]) for f in order]


def line_entropies(
    model_f: NgramModel,
    model_b: NgramModel,
    line: LineRecord,
    cache_f: CacheState,
    cache_b: CacheState,
) -> LineEntropy:
    """Score one line in both directions against the supplied cache states.

    cache_f must reflect the file content above the line and cache_b the
    reversed content below it; file_entropies drives the two sweeps in the
    right order. Empty lines are defined to have zero entropy.
    """
    texts = [t.text for t in line.tokens]
    e_f = model_f.score_line(texts, cache_f)
    e_b = model_b.score_line(list(reversed(texts)), cache_b)
    return LineEntropy(
        file=line.file,
        line_no=line.line_no,
        e_forward=e_f,
        e_backward=e_b,
        e_average=(e_f + e_b) / 2.0,
    )


def file_entropies(
    model_f: NgramModel,
    model_b: NgramModel,
    lines: Sequence[LineRecord],
) -> list[LineEntropy]:
    """Entropy triple for every line of one file.

    Two sweeps with fresh caches: top-down with the forward model, bottom-up
    over reversed token order with the backward model.
    """
    cache_f = model_f.new_cache()
    forward = [model_f.score_line([t.text for t in rec.tokens], cache_f) for rec in lines]
    cache_b = model_b.new_cache()
    backward_rev = [
        model_b.score_line([t.text for t in reversed(rec.tokens)], cache_b)
        for rec in reversed(lines)
    ]
    backward = list(reversed(backward_rev))
    return [
        LineEntropy(
            file=rec.file,
            line_no=rec.line_no,
            e_forward=e_f,
            e_backward=e_b,
            e_average=(e_f + e_b) / 2.0,
        )
        for rec, e_f, e_b in zip(lines, forward, backward)
    ]


def corpus_entropies(
    model_f: NgramModel,
    model_b: NgramModel,
    lines: Sequence[LineRecord],
    exclude_scored_file: bool = False,
) -> list[LineEntropy]:
    """file_entropies applied per file, preserving the input line order.

    With exclude_scored_file the global estimates for each file come from
    the models minus that file's own counts. Required whenever the scored
    lines were part of the training corpus, otherwise the file predicts
    itself and the cache becomes pointless.
    """
    by_file: dict[str, list[LineRecord]] = {}
    order: list[str] = []
    for rec in lines:
        if rec.file not in by_file:
            by_file[rec.file] = []
            order.append(rec.file)
        by_file[rec.file].append(rec)
    out: dict[tuple[str, int], LineEntropy] = {}
    for f in order:
        file_lines = by_file[f]
        if exclude_scored_file:
            m_f = model_f.without_file(file_lines)
            m_b = model_b.without_file(file_lines)
        else:
            m_f, m_b = model_f, model_b
        for ent in file_entropies(m_f, m_b, file_lines):
            out[(ent.file, ent.line_no)] = ent
    return [out[(rec.file, rec.line_no)] for rec in lines]


@dataclass
class TypeStats:
    """Population mean and standard deviation of one entropy channel per line type."""

    stats: dict[LineType, tuple[float, float, int]] = field(default_factory=dict)

    def mean(self, line_type: LineType) -> float | None:
        entry = self.stats.get(line_type)
        return None if entry is None else entry[0]

    def sd(self, line_type: LineType) -> float | None:
        entry = self.stats.get(line_type)
        return None if entry is None else entry[1]


def compute_type_stats(
    entropies: Sequence[LineEntropy],
    lines: Sequence[LineRecord],
    which: str = "E_a",
) -> TypeStats:
    """Aggregate the selected channel per line type; population SD."""
    if len(entropies) != len(lines):
        raise ValueError("entropies and lines must align one to one")
    if not entropies:
        raise DataError("cannot compute type statistics on empty input")
    buckets: dict[LineType, list[float]] = {}
    for ent, rec in zip(entropies, lines):
        buckets.setdefault(rec.line_type, []).append(ent.channel(which))
    stats: dict[LineType, tuple[float, float, int]] = {}
    for line_type, values in buckets.items():
        count = len(values)
        mu = sum(values) / count
        var = sum((v - mu) ** 2 for v in values) / count
        stats[line_type] = (mu, math.sqrt(var), count)
    return TypeStats(stats=stats)


def zscore_normalize(entropy: float, line_type: LineType, stats: TypeStats) -> float:
    """(entropy - mean) / sd for the line's type; 0 when sd is 0 or type unseen."""
    entry = stats.stats.get(line_type)
    if entry is None:
        return 0.0
    mu, sd, _count = entry
    if sd == 0.0:
        return 0.0
    return (entropy - mu) / sd


def save_type_stats(path: str | Path, per_channel: Mapping[str, TypeStats]) -> None:
    payload = {
        "format": "entrospect-type-stats",
        "version": 1,
        "channels": {
            which: {
                lt.value: {"mean": m, "sd": s, "count": c}
                for lt, (m, s, c) in sorted(ts.stats.items(), key=lambda kv: kv[0].value)
            }
            for which, ts in per_channel.items()
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8")


def load_type_stats(path: str | Path) -> dict[str, TypeStats]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "entrospect-type-stats":
        raise DataError(f"{path}: not a type-stats file")
    out: dict[str, TypeStats] = {}
    for which, table in payload["channels"].items():
        stats = {
            LineType(lt): (entry["mean"], entry["sd"], entry["count"])
            for lt, entry in table.items()
        }
        out[which] = TypeStats(stats=stats)
    return out


def write_entropy_csv(
    path: str | Path,
    lines: Sequence[LineRecord],
    entropies: Sequence[LineEntropy],
    per_channel_stats: Mapping[str, TypeStats],
) -> None:
    """CSV with raw entropies and their per-type Z-scores for every line."""
    if len(lines) != len(entropies):
        raise ValueError("entropies and lines must align one to one")
    header = "file,line_no,line_type,E_f,E_b,E_a,z_f,z_b,z_a"
    rows = [header]
    for rec, ent in zip(lines, entropies):
        zs = [
            zscore_normalize(ent.channel(which), rec.line_type, per_channel_stats[which])
            for which in ENTROPY_CHANNELS
        ]
        rows.append(
            ",".join(
                [
                    rec.file,
                    str(rec.line_no),
                    rec.line_type.value,
                    repr(ent.e_forward),
                    repr(ent.e_backward),
                    repr(ent.e_average),
                    repr(zs[0]),
                    repr(zs[1]),
                    repr(zs[2]),
                ]
            )
        )
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
