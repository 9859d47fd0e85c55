"""Cost-effectiveness evaluation and the supporting statistics.

The CE curve walks the ranked list and plots fraction of lines inspected
against fraction of buggy lines found; AUCEC integrates it with trapezoids,
optionally restricted to an inspection budget. Statistical tests (Welch t,
Cohen's d, Mann-Whitney rank sum) are implemented directly so the test
suite can check them against an independent reference implementation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DataError
from .forest import RankedReport
from .spectra import LineKey, SpectraGroup


@dataclass
class CECurve:
    xs: list[float]
    ys: list[float]
    n_lines: int
    n_buggy: int


def ce_curve(report: RankedReport, buggy: Iterable[LineKey]) -> CECurve:
    """Step curve over the ranked list, emitted as N+1 points from (0,0) to (1,1)."""
    buggy = set(buggy)
    keys = report.keys()
    missing = buggy.difference(keys)
    if missing:
        shown = ", ".join(f"{f}:{ln}" for f, ln in sorted(missing)[:10])
        raise DataError(f"buggy lines missing from the ranked report: {shown}")
    if not buggy:
        raise DataError("no buggy lines to evaluate")
    n = len(keys)
    b = len(buggy)
    xs = [0.0]
    ys = [0.0]
    found = 0
    for k, key in enumerate(keys, start=1):
        if key in buggy:
            found += 1
        xs.append(k / n)
        ys.append(found / b)
    return CECurve(xs=xs, ys=ys, n_lines=n, n_buggy=b)


def aucec(curve: CECurve, budget_percent: float = 100.0, normalized: bool = False) -> float:
    """Trapezoidal area under the curve for x in [0, budget/100].

    The default is the absolute (unnormalized) area; normalized=True divides
    by the budget fraction so a perfect ranking approaches 1 at any budget.
    """
    if not 0.0 < budget_percent <= 100.0:
        raise ValueError("budget_percent must lie in (0, 100]")
    xb = budget_percent / 100.0
    area = 0.0
    xs, ys = curve.xs, curve.ys
    for i in range(len(xs) - 1):
        x0, x1 = xs[i], xs[i + 1]
        y0, y1 = ys[i], ys[i + 1]
        if x1 <= xb:
            area += (x1 - x0) * (y0 + y1) / 2.0
            continue
        if x0 < xb:
            yb = y0 + (y1 - y0) * (xb - x0) / (x1 - x0)
            area += (xb - x0) * (y0 + yb) / 2.0
        break
    return area / xb if normalized else area


def gain(aucec_en: float, aucec_sp: float) -> float:
    """Relative improvement of the entropy-augmented area, in percent."""
    if aucec_sp == 0:
        raise DataError("cannot compute gain against a zero baseline area")
    return 100.0 * (aucec_en - aucec_sp) / aucec_sp


def overall_gain(pairs: Sequence[tuple[float, float]]) -> float:
    """Pooled relative improvement over several (augmented, baseline) pairs."""
    if not pairs:
        raise DataError("overall gain needs at least one pair")
    num = sum(en - sp for en, sp in pairs)
    den = sum(sp for _en, sp in pairs)
    if den == 0:
        raise DataError("cannot compute overall gain against a zero baseline sum")
    return 100.0 * num / den


@dataclass
class StatResult:
    statistic: float
    p_value: float
    effect_size_d: float
    n1: int
    n2: int


def _mean_var(sample: Sequence[float]) -> tuple[float, float]:
    n = len(sample)
    mean = sum(sample) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in sample) / (n - 1)
    return mean, var


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            break
    return h


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def _t_two_sided_p(t: float, df: float) -> float:
    if df <= 0 or math.isnan(t):
        return 1.0
    if math.isinf(t):
        return 0.0
    return _betainc(df / 2.0, 0.5, df / (df + t * t))


def _t_critical_two_sided(df: float, alpha: float = 0.05) -> float:
    """Smallest t with two-sided p <= alpha, by bisection (p is decreasing in t)."""
    lo, hi = 0.0, 1.0
    while _t_two_sided_p(hi, df) > alpha:
        hi *= 2.0
        if hi > 1e12:
            return hi
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if _t_two_sided_p(mid, df) > alpha:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def welch_t_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> StatResult:
    """Unequal-variance t test with Welch-Satterthwaite degrees of freedom."""
    if len(sample_a) < 2 or len(sample_b) < 2:
        raise DataError("welch_t_test needs at least two observations per sample")
    na, nb = len(sample_a), len(sample_b)
    ma, va = _mean_var(sample_a)
    mb, vb = _mean_var(sample_b)
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    d = cohens_d(sample_a, sample_b)
    if se2 == 0.0:
        if ma == mb:
            return StatResult(statistic=0.0, p_value=1.0, effect_size_d=d, n1=na, n2=nb)
        t = math.inf if ma > mb else -math.inf
        return StatResult(statistic=t, p_value=0.0, effect_size_d=d, n1=na, n2=nb)
    t = (ma - mb) / math.sqrt(se2)
    df = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    p = _t_two_sided_p(t, df)
    return StatResult(statistic=t, p_value=p, effect_size_d=d, n1=na, n2=nb)


def cohens_d(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Standardized mean difference with the pooled standard deviation."""
    if len(sample_a) < 2 or len(sample_b) < 2:
        raise DataError("cohens_d needs at least two observations per sample")
    na, nb = len(sample_a), len(sample_b)
    ma, va = _mean_var(sample_a)
    mb, vb = _mean_var(sample_b)
    pooled = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
    if pooled == 0.0:
        return 0.0
    return (ma - mb) / math.sqrt(pooled)


def welch_diff_ci(
    sample_a: Sequence[float],
    sample_b: Sequence[float],
    alpha: float = 0.05,
) -> tuple[float, float]:
    """Welch confidence interval for mean(a) - mean(b)."""
    na, nb = len(sample_a), len(sample_b)
    ma, va = _mean_var(sample_a)
    mb, vb = _mean_var(sample_b)
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    diff = ma - mb
    if se2 == 0.0:
        return (diff, diff)
    df = se2 * se2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    tcrit = _t_critical_two_sided(df, alpha)
    half = tcrit * math.sqrt(se2)
    return (diff - half, diff + half)


def _rank_with_ties(values: Sequence[float]) -> tuple[list[float], float]:
    """Average ranks (1-based) and the tie correction term sum(t^3 - t)."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    tie_term = 0.0
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        size = j - i + 1
        if size > 1:
            tie_term += size**3 - size
        i = j + 1
    return ranks, tie_term


def _exact_u_sf(u: float, n1: int, n2: int) -> float:
    """P(U >= u) under the exact null distribution (no ties)."""
    # ways[k][s]: subsets of size k of the first t ranks with rank sum s
    max_sum = (n1 + n2) * (n1 + n2 + 1) // 2
    ways = [[0] * (max_sum + 1) for _ in range(n1 + 1)]
    ways[0][0] = 1
    for rank in range(1, n1 + n2 + 1):
        for k in range(min(rank, n1), 0, -1):
            row_k, row_km1 = ways[k], ways[k - 1]
            for s in range(max_sum, rank - 1, -1):
                if row_km1[s - rank]:
                    row_k[s] += row_km1[s - rank]
    offset = n1 * (n1 + 1) // 2
    counts = ways[n1]
    total = sum(counts)
    tail = sum(
        c for s, c in enumerate(counts) if c and (s - offset) >= u - 1e-9
    )
    return tail / total


def rank_sum_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> StatResult:
    """Two-sided Mann-Whitney U test.

    Exact null distribution when the combined size is at most 20 and there
    are no ties; otherwise the tie-corrected normal approximation with
    continuity correction. The statistic is U of the first sample.
    """
    if not sample_a or not sample_b:
        raise DataError("rank_sum_test needs at least one observation per sample")
    n1, n2 = len(sample_a), len(sample_b)
    combined = list(sample_a) + list(sample_b)
    ranks, tie_term = _rank_with_ties(combined)
    r1 = sum(ranks[:n1])
    u1 = r1 - n1 * (n1 + 1) / 2.0
    u2 = n1 * n2 - u1
    d = cohens_d(sample_a, sample_b) if n1 >= 2 and n2 >= 2 else 0.0
    if n1 + n2 <= 20 and tie_term == 0.0:
        p = min(1.0, 2.0 * _exact_u_sf(max(u1, u2), n1, n2))
        return StatResult(statistic=u1, p_value=p, effect_size_d=d, n1=n1, n2=n2)
    n = n1 + n2
    mu = n1 * n2 / 2.0
    sigma2 = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma2 <= 0.0:
        return StatResult(statistic=u1, p_value=1.0, effect_size_d=d, n1=n1, n2=n2)
    z = (max(u1, u2) - mu - 0.5) / math.sqrt(sigma2)
    p = min(1.0, 2.0 * _normal_sf(z))
    return StatResult(statistic=u1, p_value=p, effect_size_d=d, n1=n1, n2=n2)


def effect_label(d: float) -> str:
    magnitude = abs(d)
    if magnitude < 0.2:
        return "negligible"
    if magnitude < 0.5:
        return "small"
    if magnitude < 0.8:
        return "medium"
    return "large"


def group_entropy_stats(
    groups: Mapping[LineKey, SpectraGroup],
    buggy: set[LineKey],
    values: Mapping[LineKey, float],
) -> list[dict]:
    """Buggy versus non-buggy comparison of a per-line value within each
    covered spectra group; uncovered lines are out of scope."""
    report = []
    for group in (SpectraGroup.FAIL_ONLY, SpectraGroup.PASS_ONLY, SpectraGroup.BOTH):
        sample_buggy = [values[k] for k, g in groups.items() if g is group and k in buggy]
        sample_clean = [values[k] for k, g in groups.items() if g is group and k not in buggy]
        entry: dict = {
            "group": group.value,
            "n_buggy": len(sample_buggy),
            "n_nonbuggy": len(sample_clean),
        }
        if len(sample_buggy) >= 2 and len(sample_clean) >= 2:
            welch = welch_t_test(sample_buggy, sample_clean)
            ci_low, ci_high = welch_diff_ci(sample_buggy, sample_clean)
            rank = rank_sum_test(sample_buggy, sample_clean)
            entry.update(
                {
                    "diff_ci_low": ci_low,
                    "diff_ci_high": ci_high,
                    "p_value": welch.p_value,
                    "cohens_d": welch.effect_size_d,
                    "label": effect_label(welch.effect_size_d),
                    "rank_sum_p": rank.p_value,
                }
            )
        else:
            entry.update(
                {
                    "diff_ci_low": None,
                    "diff_ci_high": None,
                    "p_value": None,
                    "cohens_d": None,
                    "label": None,
                    "rank_sum_p": None,
                }
            )
        report.append(entry)
    return report


@dataclass
class VersionEntry:
    project: str
    version_id: str
    language: str
    timestamp: date
    paths: dict = field(default_factory=dict)

    @property
    def order_key(self) -> tuple[date, str]:
        return (self.timestamp, self.version_id)


@dataclass
class VersionManifest:
    entries: list[VersionEntry]

    def find(self, version_id: str) -> VersionEntry | None:
        return next((e for e in self.entries if e.version_id == version_id), None)


def _parse_date(raw: str) -> date:
    try:
        return date.fromisoformat(raw)
    except ValueError:
        return datetime.fromisoformat(raw).date()


def read_manifest(path: str | Path) -> VersionManifest:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = []
    seen = set()
    path_keys = ("corpus", "coverage", "coverage_format", "outcomes", "diffs")
    for obj in payload["entries"]:
        if obj["version_id"] in seen:
            raise DataError(f"duplicate version_id {obj['version_id']!r} in manifest")
        seen.add(obj["version_id"])
        entries.append(
            VersionEntry(
                project=obj["project"],
                version_id=obj["version_id"],
                language=obj["language"],
                timestamp=_parse_date(obj["timestamp"]),
                paths={k: obj[k] for k in path_keys if k in obj},
            )
        )
    return VersionManifest(entries=entries)


def cross_project_split(manifest: VersionManifest, target: str) -> list[str]:
    """Same-language versions of other projects strictly before the target.

    Chronology uses (timestamp, version_id) so manifests with same-day
    versions stay totally ordered.
    """
    entry = manifest.find(target)
    if entry is None:
        raise DataError(f"target version {target!r} not present in manifest")
    eligible = [
        e
        for e in manifest.entries
        if e.project != entry.project
        and e.language == entry.language
        and e.order_key < entry.order_key
    ]
    if not eligible:
        raise DataError("no eligible prior versions")
    return [e.version_id for e in sorted(eligible, key=lambda e: e.order_key)]


def write_ce_csv(path: str | Path, curve: CECurve) -> None:
    rows = ["x,y"]
    rows.extend(f"{x!r},{y!r}" for x, y in zip(curve.xs, curve.ys))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_ce_svg(path: str | Path, curve: CECurve, title: str = "Cost-effectiveness curve") -> None:
    """Minimal self-contained SVG: the curve plus the random-inspection diagonal."""
    size, margin = 480, 50
    span = size - 2 * margin

    def px(x: float) -> float:
        return margin + x * span

    def py(y: float) -> float:
        return size - margin - y * span

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(curve.xs, curve.ys))
    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<text x="{size / 2:.0f}" y="24" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{size - margin}" x2="{size - margin}" y2="{size - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{size - margin}" stroke="black"/>',
        f'<line x1="{px(0):.2f}" y1="{py(0):.2f}" x2="{px(1):.2f}" y2="{py(1):.2f}" '
        'stroke="gray" stroke-dasharray="6,4"/>',
        f'<polyline points="{pts}" fill="none" stroke="crimson" stroke-width="1.5"/>',
        f'<text x="{size / 2:.0f}" y="{size - 12}" text-anchor="middle" font-size="12">'
        "fraction of lines inspected</text>",
        f'<text x="16" y="{size / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {size / 2:.0f})">fraction of buggy lines found</text>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(svg) + "\n", encoding="utf-8")
