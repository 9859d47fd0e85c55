"""Coverage spectra: per-line execution counters from test traces and the 25
suspiciousness metrics computed from them.

Counters follow the usual construction: e_p / e_f count passing / failing
tests that executed a line, n_p / n_f those that did not. Any metric whose
formula hits a zero denominator evaluates to 0 so every vector stays finite.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError

LineKey = tuple[str, int]

METRIC_NAMES: tuple[str, ...] = (
    "Tarantula",
    "Ochiai",
    "Jaccard",
    "SimpleMatching",
    "SorensenDice",
    "Kulczynski1",
    "RusselRao",
    "RogersTanimoto",
    "M1",
    "M2",
    "Overlap",
    "Ochiai2",
    "Dice",
    "Ample",
    "Hamann",
    "Zoltar",
    "Goodman",
    "Sokal",
    "Hamming",
    "Kulczynski2",
    "Euclid",
    "Anderberg",
    "Wong1",
    "Wong2",
    "Wong3",
)


@dataclass
class TestTrace:
    __test__ = False  # dataclass, not a pytest case

    test_id: str
    outcome: str  # "pass" | "fail"
    covered: set[LineKey]


class SpectraGroup(str, enum.Enum):
    FAIL_ONLY = "fail_only"
    PASS_ONLY = "pass_only"
    BOTH = "both"
    UNCOVERED = "uncovered"


@dataclass
class SpectraMatrix:
    """Per-line (e_p, e_f) with suite totals; immutable once built."""

    passing_total: int
    failing_total: int
    executed: dict[LineKey, tuple[int, int]]
    universe: tuple[LineKey, ...]
    unknown_covered: tuple[LineKey, ...] = field(default=())

    def counters(self, key: LineKey) -> tuple[int, int, int, int]:
        e_p, e_f = self.executed.get(key, (0, 0))
        return (e_p, e_f, self.passing_total - e_p, self.failing_total - e_f)


def ingest_coverage(
    traces: Sequence[TestTrace],
    universe: Iterable,
) -> SpectraMatrix:
    """Fold test traces into per-line counters over the given line universe.

    The universe may hold (file, line_no) keys or tokenizer line records.
    Covered lines missing from the universe are collected as warnings and
    otherwise ignored. At least one failing test is required.
    """
    universe = tuple(
        (entry.file, entry.line_no) if hasattr(entry, "line_no") else entry
        for entry in universe
    )
    known = set(universe)
    seen_ids: set[str] = set()
    passing = failing = 0
    executed: dict[LineKey, list[int]] = {}
    unknown: set[LineKey] = set()
    for trace in traces:
        if trace.test_id in seen_ids:
            raise DataError(f"duplicate test id {trace.test_id!r}")
        seen_ids.add(trace.test_id)
        if trace.outcome not in ("pass", "fail"):
            raise DataError(
                f"test {trace.test_id!r}: outcome must be pass or fail, got {trace.outcome!r}"
            )
        if not trace.covered:
            raise DataError(f"test {trace.test_id!r} covers no lines")
        slot = 0 if trace.outcome == "pass" else 1
        if trace.outcome == "pass":
            passing += 1
        else:
            failing += 1
        for key in trace.covered:
            if key not in known:
                unknown.add(key)
                continue
            executed.setdefault(key, [0, 0])[slot] += 1
    if failing == 0:
        raise DataError("no bug-reproducing test")
    return SpectraMatrix(
        passing_total=passing,
        failing_total=failing,
        executed={k: (v[0], v[1]) for k, v in executed.items()},
        universe=universe,
        unknown_covered=tuple(sorted(unknown)),
    )


def suspiciousness_vector(
    counters: tuple[int, int, int, int],
    rogers_tanimoto_textbook: bool = False,
) -> tuple[float, ...]:
    """All 25 metrics for one line, in METRIC_NAMES order.

    The RogersTanimoto entry keeps the published denominator
    e_f + e_p + 2*n_f + e_p by default; the flag switches to the textbook
    a+d over a+d+2(b+c) form.
    """
    e_p, e_f, n_p, n_f = counters
    if min(e_p, e_f, n_p, n_f) < 0:
        raise ValueError("counters must be non-negative")
    passed = e_p + n_p
    failed = e_f + n_f
    total = passed + failed

    def div(num: float, den: float) -> float:
        return 0.0 if den == 0 else num / den

    if failed == 0 or passed == 0:
        tarantula = 0.0
    else:
        rate_f = e_f / failed
        rate_p = e_p / passed
        tarantula = div(rate_f, rate_f + rate_p)

    ochiai_den = math.sqrt((e_f + e_p) * (e_f + n_f))
    ochiai = div(e_f, ochiai_den)

    jaccard = div(e_f, e_f + e_p + n_f)
    simple_matching = div(e_f + n_p, total)
    sorensen_dice = div(2 * e_f, 2 * e_f + e_p + n_f)
    kulczynski1 = div(e_f, e_p + n_f)
    russel_rao = div(e_f, total)

    if rogers_tanimoto_textbook:
        rogers_tanimoto = div(e_f + n_p, e_f + n_p + 2 * (n_f + e_p))
    else:
        rogers_tanimoto = div(e_f + n_p, e_f + e_p + 2 * n_f + e_p)

    m1 = div(e_f + n_p, e_p + n_f)
    m2 = div(e_f, e_f + n_p + 2 * e_p + 2 * e_f)
    overlap = div(e_f, min(e_f, e_p, n_f))

    ochiai2_den = math.sqrt((e_f + e_p) * (n_f + n_p) * (e_f + n_p) * (e_p + n_f))
    ochiai2 = div(e_f * n_p, ochiai2_den)

    dice = div(2 * e_f, e_f + e_p + n_f)

    if failed == 0 or passed == 0:
        ample = 0.0
    else:
        ample = abs(e_f / failed - e_p / passed)

    hamann = div(e_f + n_p - e_p - n_f, total)

    if e_f == 0:
        zoltar = 0.0
    else:
        zoltar = div(e_f, e_f + e_p + n_f + 10000.0 * n_f * e_p / e_f)

    goodman = div(2 * e_f - n_f - e_p, 2 * e_f + n_f + e_p)
    sokal = div(2 * e_f + 2 * e_p, 2 * e_f + 2 * e_p + n_f + n_p)
    hamming = float(e_f + n_p)

    if e_f + n_f == 0 or e_f + n_p == 0:
        kulczynski2 = 0.0
    else:
        kulczynski2 = 0.5 * (e_f / (e_f + n_f) + e_f / (e_f + n_p))

    euclid = math.sqrt(e_f + n_p)
    anderberg = div(e_f, e_f + 2 * e_p + 2 * n_f)
    wong1 = float(e_f)
    wong2 = float(e_f - e_p)

    if e_p <= 2:
        wong3_h = float(e_p)
    elif e_p <= 10:
        wong3_h = 2.0 + 0.1 * (e_p - 2)
    else:
        wong3_h = 2.8 + 0.01 * (e_p - 10)
    wong3 = e_f - wong3_h

    return (
        tarantula,
        ochiai,
        jaccard,
        simple_matching,
        sorensen_dice,
        kulczynski1,
        russel_rao,
        rogers_tanimoto,
        m1,
        m2,
        overlap,
        ochiai2,
        dice,
        ample,
        hamann,
        zoltar,
        goodman,
        sokal,
        hamming,
        kulczynski2,
        euclid,
        anderberg,
        wong1,
        wong2,
        wong3,
    )


def group_by_spectra(matrix: SpectraMatrix) -> dict[LineKey, SpectraGroup]:
    """Partition every universe line by which test outcomes executed it."""
    groups: dict[LineKey, SpectraGroup] = {}
    for key in matrix.universe:
        e_p, e_f, _n_p, _n_f = matrix.counters(key)
        if e_f > 0 and e_p == 0:
            groups[key] = SpectraGroup.FAIL_ONLY
        elif e_p > 0 and e_f == 0:
            groups[key] = SpectraGroup.PASS_ONLY
        elif e_p > 0 and e_f > 0:
            groups[key] = SpectraGroup.BOTH
        else:
            groups[key] = SpectraGroup.UNCOVERED
    return groups


def read_coverage_jsonl(path: str | Path) -> list[TestTrace]:
    """One JSON object per test: test_id, outcome, covered[{file, lines[]}]."""
    traces: list[TestTrace] = []
    with open(path, encoding="utf-8") as fp:
        for idx, raw in enumerate(fp, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{idx}: invalid JSON ({exc})") from exc
            try:
                covered = {
                    (entry["file"], int(line))
                    for entry in obj["covered"]
                    for line in entry["lines"]
                }
                traces.append(
                    TestTrace(test_id=obj["test_id"], outcome=obj["outcome"], covered=covered)
                )
            except (KeyError, TypeError) as exc:
                raise DataError(f"{path}:{idx}: missing coverage field ({exc})") from exc
    return traces


def read_lcov(
    tracefile: str | Path,
    outcomes: Mapping[str, str] | str | Path,
) -> list[TestTrace]:
    """Adapter for LCOV tracefiles (TN:/SF:/DA: records).

    Line coverage is taken from DA: records with a positive hit count. The
    sidecar maps each test name to its pass/fail outcome.
    """
    if not isinstance(outcomes, Mapping):
        outcomes = json.loads(Path(outcomes).read_text(encoding="utf-8"))
    per_test: dict[str, set[LineKey]] = {}
    test_name = ""
    source_file = None
    with open(tracefile, encoding="utf-8") as fp:
        for raw in fp:
            line = raw.strip()
            if line.startswith("TN:"):
                test_name = line[3:]
            elif line.startswith("SF:"):
                source_file = line[3:]
            elif line.startswith("DA:") and source_file is not None:
                num, _, hits = line[3:].partition(",")
                if int(hits.split(",")[0]) > 0:
                    per_test.setdefault(test_name, set()).add((source_file, int(num)))
            elif line == "end_of_record":
                source_file = None
    traces = []
    for test_id in sorted(per_test):
        if test_id not in outcomes:
            raise DataError(f"no outcome recorded for test {test_id!r}")
        traces.append(
            TestTrace(test_id=test_id, outcome=outcomes[test_id], covered=per_test[test_id])
        )
    return traces


def write_spectra_csv(
    path: str | Path,
    matrix: SpectraMatrix,
    rogers_tanimoto_textbook: bool = False,
) -> None:
    """CSV with the four counters and the 25 metrics for every universe line."""
    header = "file,line_no,e_p,e_f,n_p,n_f," + ",".join(METRIC_NAMES)
    rows = [header]
    for key in matrix.universe:
        counters = matrix.counters(key)
        vector = suspiciousness_vector(counters, rogers_tanimoto_textbook)
        rows.append(
            ",".join(
                [key[0], str(key[1])]
                + [str(c) for c in counters]
                + [repr(v) for v in vector]
            )
        )
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")
