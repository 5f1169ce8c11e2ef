"""Rate tables and significance tests for grading sessions.

For each (grader, category) cell the analysis tabulates a 2x2 contingency
table -- rows are the original and modified item groups, columns are the
'original' / 'modified' verdicts -- and compares the two proportions with a
Yates-corrected chi-square test, falling back to Fisher's exact test when
any expected cell count drops below 5 (which covers small control groups).
A non-inferiority sample-size calculation for two proportions is included
for designing such studies.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from operator import attrgetter

from .sessionlog import SessionLog
from .study import MODIFIED, ORIGINAL, StudyManifest

CHI2_YATES = "yates-chi-square"
CHI2_PEARSON = "pearson-chi-square"
FISHER = "fisher-exact"


@dataclass(frozen=True)
class ContingencyTable2x2:
    """Counts (a, b) = original group, (c, d) = modified group;
    first column = labeled 'original', second = labeled 'modified'."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("counts must be non-negative")
        if self.n == 0:
            raise ValueError("table is empty")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    @property
    def row_totals(self) -> tuple[int, int]:
        return self.a + self.b, self.c + self.d

    @property
    def col_totals(self) -> tuple[int, int]:
        return self.a + self.c, self.b + self.d

    def min_expected(self) -> float:
        """Smallest expected cell count under independence."""
        r1, r2 = self.row_totals
        c1, c2 = self.col_totals
        return min(r * c for r in (r1, r2) for c in (c1, c2)) / self.n


def chi_square_2x2(
    table: ContingencyTable2x2, yates: bool = True
) -> tuple[float, float]:
    """Pearson chi-square on a 2x2 table, Yates-corrected by default.

    statistic = N * (max(|ad - bc| - N/2, 0))^2 / (r1 r2 c1 c2) with Yates,
    without the N/2 term otherwise; the correction is clamped at zero so
    identical rows give statistic 0, p = 1.  Two-sided p from the
    chi-square distribution with 1 df: p = erfc(sqrt(stat / 2)).
    """
    a, b, c, d = table.a, table.b, table.c, table.d
    r1, r2 = table.row_totals
    c1, c2 = table.col_totals
    if min(r1, r2, c1, c2) == 0:
        raise ValueError("chi-square needs all four marginals > 0")
    n = table.n
    diff = abs(a * d - b * c)
    if yates:
        diff = max(diff - n / 2.0, 0.0)
    stat = n * diff * diff / (r1 * r2 * c1 * c2)
    return stat, math.erfc(math.sqrt(stat / 2.0))


def fisher_exact_2x2(table: ContingencyTable2x2) -> float:
    """Two-sided Fisher exact p by the minimum-likelihood rule.

    Sums hypergeometric probabilities of every table with the observed
    margins whose point probability does not exceed the observed one.
    All comparisons are exact integer arithmetic on binomial coefficients
    (P(k) = C(r1, k) C(r2, c1-k) / C(N, c1) shares its denominator across
    the support), so ties need no floating-point tolerance.
    """
    r1, r2 = table.row_totals
    c1, _ = table.col_totals
    n = table.n
    lo = max(0, c1 - r2)
    hi = min(r1, c1)
    w_obs = math.comb(r1, table.a) * math.comb(r2, c1 - table.a)
    num = 0
    for k in range(lo, hi + 1):
        w = math.comb(r1, k) * math.comb(r2, c1 - k)
        if w <= w_obs:
            num += w
    return num / math.comb(n, c1)


# Coefficients of Acklam's rational approximation to the inverse normal CDF
# (relative error below 1.15e-9 over (0, 1)).
_ACK_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_ACK_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_ACK_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_ACK_D = (
    7.784695709041462e-03, 3.224671290700398e-01,
    2.445134137142996e00, 3.754408661907416e00,
)
_ACK_SPLIT = 0.02425


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF via Acklam's rational approximation."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile argument must be in (0, 1), got {p}")
    a, b, c, d = _ACK_A, _ACK_B, _ACK_C, _ACK_D
    if p < _ACK_SPLIT:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    if p > 1.0 - _ACK_SPLIT:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
        ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    )


@dataclass(frozen=True)
class NoninferiorityDesign:
    """Two-proportion non-inferiority design (one-sided alpha)."""

    p_standard: float
    p_test: float
    margin: float
    alpha: float
    power: float

    def __post_init__(self):
        for name in ("p_standard", "p_test", "alpha", "power"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        if self.margin <= abs(self.p_standard - self.p_test):
            raise ValueError(
                "margin must exceed the assumed difference "
                f"|{self.p_standard} - {self.p_test}|"
            )


def noninferiority_sample_size(design: NoninferiorityDesign) -> int:
    """Per-group n for a two-proportion non-inferiority comparison.

    Unpooled-variance normal approximation:
    n = ceil[ (z_{1-alpha} + z_{power})^2 (p1(1-p1) + p2(1-p2))
              / (margin - (p1 - p2))^2 ].
    """
    p1, p2 = design.p_standard, design.p_test
    z = normal_quantile(1.0 - design.alpha) + normal_quantile(design.power)
    denom = design.margin - (p1 - p2)
    n = z * z * (p1 * (1.0 - p1) + p2 * (1.0 - p2)) / (denom * denom)
    return math.ceil(n)


def tabulate(
    manifest: StudyManifest, log: SessionLog, category: str
) -> ContingencyTable2x2:
    """2x2 table for one category from a finished session's final verdicts.

    a = originals labeled 'original' (true negatives), b = originals
    labeled 'modified', c = modified labeled 'original' (false negatives),
    d = modified labeled 'modified'.
    """
    if not log.finished:
        raise ValueError(f"session {log.session_id} is not finished")
    if log.study_id != manifest.study_id:
        raise ValueError(
            f"log is for study {log.study_id}, manifest is {manifest.study_id}"
        )
    if category not in {c.name for c in manifest.categories}:
        raise KeyError(f"unknown category: {category}")
    verdicts = log.final_verdicts()
    a = b = c = d = 0
    for index, verdict in verdicts.items():
        item = manifest.item_at_display_index(index)
        if item.category != category:
            continue
        if item.ground_truth == ORIGINAL:
            if verdict == ORIGINAL:
                a += 1
            else:
                b += 1
        else:
            if verdict == ORIGINAL:
                c += 1
            else:
                d += 1
    return ContingencyTable2x2(a=a, b=b, c=c, d=d)


@dataclass(frozen=True)
class RateCell:
    """One (grader, category) row of the analysis report."""

    grader_id: str
    category: str
    tn_count: int          # originals labeled 'original'
    fn_count: int          # modified labeled 'original'
    n_original: int
    n_modified: int
    tn_rate: float
    fn_rate: float
    statistic: float | None
    p_value: float
    test_used: str
    reference_p: str | None = None
    agrees_with_reference: bool | None = None


@dataclass
class StudyReport:
    study_id: str
    categories: list[str]
    cells: list[RateCell]

    def to_json_dict(self) -> dict:
        rows = []
        for cell in self.cells:
            d = {
                "grader_id": cell.grader_id,
                "category": cell.category,
                "tn_count": cell.tn_count,
                "fn_count": cell.fn_count,
                "n_original": cell.n_original,
                "n_modified": cell.n_modified,
                "tn_rate": cell.tn_rate,
                "fn_rate": cell.fn_rate,
                "statistic": cell.statistic,
                "p_value": cell.p_value,
                "test_used": cell.test_used,
            }
            if cell.reference_p is not None:
                d["reference_p"] = cell.reference_p
                d["agrees_with_reference"] = cell.agrees_with_reference
            rows.append(d)
        return {"study_id": self.study_id, "categories": self.categories, "cells": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def to_text(self) -> str:
        """Aligned table, one grader per row and one category per column
        group (originals labeled original / modified labeled original / p)."""
        graders = sorted({c.grader_id for c in self.cells})
        by_key = {(c.grader_id, c.category): c for c in self.cells}
        col_w = 22
        lines = [f"study {self.study_id}"]
        header = f"{'grader':<12}" + "".join(
            f"{cat:^{col_w}}" for cat in self.categories
        )
        sub = f"{'':<12}" + "".join(
            f"{'orig':>6}{'mod':>6}{'p':>9} " for _ in self.categories
        )
        lines += [header, sub]
        flagged = False
        for g in graders:
            row = f"{g:<12}"
            for cat in self.categories:
                cell = by_key.get((g, cat))
                if cell is None:
                    row += f"{'-':>6}{'-':>6}{'-':>9} "
                    continue
                mark = ""
                if cell.agrees_with_reference is False:
                    mark = "*"
                    flagged = True
                row += f"{cell.tn_count:>6}{cell.fn_count:>6}{format_p(cell.p_value) + mark:>9} "
            lines.append(row)
        if flagged:
            lines.append("* differs from the supplied reference value at its display precision")
        return "\n".join(lines)


def format_p(p: float) -> str:
    """Compact p-value display: '1', two decimals down to 0.01, three down
    to 0.001, scientific below that."""
    if p >= 0.995:
        return "1"
    if p >= 0.0095:
        return f"{p:.2f}"
    if p >= 0.001:
        return f"{p:.3f}"
    return f"{p:.0e}"


def display_ulp(display: str) -> float:
    """One unit in the last digit of a displayed number like '0.21' or '8e-3'."""
    s = display.strip().lower().replace(" ", "")
    m = re.fullmatch(r"([0-9]*\.?[0-9]+)e([+-][0-9]+)", s)
    if m:
        mantissa, exp = m.group(1), int(m.group(2))
        frac = len(mantissa.split(".")[1]) if "." in mantissa else 0
        return 10.0 ** (exp - frac)
    if "." in s:
        return 10.0 ** -len(s.split(".")[1])
    return 1.0


def agrees_at_display_precision(p: float, display: str) -> bool:
    """Whether p matches a displayed value within one unit of its last digit.

    A display like '<1e-3' is an upper bound and matches any smaller p.
    """
    s = display.strip().lower().replace(" ", "")
    if s.startswith("<"):
        return p < float(s[1:])
    return abs(p - float(s)) <= display_ulp(s)


def choose_test(table: ContingencyTable2x2) -> str:
    """Yates chi-square when every expected cell is at least 5, else Fisher."""
    return CHI2_YATES if table.min_expected() >= 5.0 else FISHER


def analyze_study(
    manifest: StudyManifest,
    logs: list[SessionLog],
    reference: dict[str, dict[str, str]] | None = None,
) -> StudyReport:
    """Per-grader, per-category rates and significance for finished sessions.

    ``reference`` optionally maps grader id -> category -> displayed p-value
    string; cells whose computed p disagrees with the reference beyond its
    display precision are marked, not altered.
    """
    cells = []
    for log in logs:
        for spec in manifest.categories:
            table = tabulate(manifest, log, spec.name)
            test = choose_test(table)
            if test == CHI2_YATES:
                stat, p = chi_square_2x2(table, yates=True)
            else:
                stat, p = None, fisher_exact_2x2(table)
            ref_p = None
            agrees = None
            if reference is not None:
                ref_p = reference.get(log.grader_id, {}).get(spec.name)
                if ref_p is not None:
                    agrees = agrees_at_display_precision(p, ref_p)
            n_orig, n_mod = table.row_totals
            cells.append(
                RateCell(
                    grader_id=log.grader_id,
                    category=spec.name,
                    tn_count=table.a,
                    fn_count=table.c,
                    n_original=n_orig,
                    n_modified=n_mod,
                    tn_rate=table.a / n_orig if n_orig else 0.0,
                    fn_rate=table.c / n_mod if n_mod else 0.0,
                    statistic=stat,
                    p_value=p,
                    test_used=test,
                    reference_p=ref_p,
                    agrees_with_reference=agrees,
                )
            )
    cells.sort(key=attrgetter("grader_id"))
    return StudyReport(
        study_id=manifest.study_id,
        categories=[c.name for c in manifest.categories],
        cells=cells,
    )
