"""Rate tables, chi-square / Fisher tests, sample size, report plumbing."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octaug.sessionlog import SessionEvent, SessionLog, utc_now_iso
from octaug.stats import (
    CHI2_YATES,
    FISHER,
    ContingencyTable2x2,
    NoninferiorityDesign,
    agrees_at_display_precision,
    analyze_study,
    chi_square_2x2,
    choose_test,
    display_ulp,
    fisher_exact_2x2,
    format_p,
    noninferiority_sample_size,
    normal_quantile,
    tabulate,
)
from octaug.study import CategorySpec, StudyItem, StudyManifest

# -- independent oracles -----------------------------------------------------

_FACT = [math.factorial(k) for k in range(41)]


def fisher_oracle(a, b, c, d):
    """Min-likelihood two-sided Fisher via explicit per-table factorial pmf.

    P(table) = r1! r2! c1! c2! / (n! a! b! c! d!); enumerates every table
    with the observed margins and sums those with P <= P(observed).
    Exact integer comparisons throughout (common numerator cancels, so
    P(k) <= P(a)  <=>  a! b! c! d! <= ak! bk! ck! dk! is reversed).
    """
    from fractions import Fraction

    r1, r2, c1, c2, n = a + b, c + d, a + c, b + d, a + b + c + d
    if n == 0:
        raise ValueError("empty table")

    def denom(k):
        # product of cell factorials for the table with a-cell k
        return _FACT[k] * _FACT[r1 - k] * _FACT[c1 - k] * _FACT[r2 - c1 + k]

    d_obs = denom(a)
    # P(k) <= P(a)  <=>  denom(k) >= d_obs (shared numerator cancels)
    p = Fraction(0)
    norm = Fraction(_FACT[r1] * _FACT[r2] * _FACT[c1] * _FACT[c2], _FACT[n])
    for k in range(max(0, c1 - r2), min(r1, c1) + 1):
        if denom(k) >= d_obs:
            p += norm / denom(k)
    return float(p)


def two_proportion_z_squared(a, b, c, d):
    """Classical pooled two-proportion z statistic, squared."""
    n1, n2 = a + b, c + d
    p1, p2 = a / n1, c / n2
    pooled = (a + c) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    z = (p1 - p2) / se
    return z * z


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# -- table basics --------------------------------------------------------------


def test_table_validation():
    with pytest.raises(ValueError):
        ContingencyTable2x2(-1, 0, 0, 1)
    with pytest.raises(ValueError):
        ContingencyTable2x2(0, 0, 0, 0)
    t = ContingencyTable2x2(1, 2, 3, 4)
    assert t.n == 10
    assert t.row_totals == (3, 7)
    assert t.col_totals == (4, 6)
    assert t.min_expected() == pytest.approx(3 * 4 / 10)


# -- chi-square -----------------------------------------------------------------


def test_chi_square_identical_rows_clamps_to_zero():
    stat, p = chi_square_2x2(ContingencyTable2x2(76, 24, 76, 24))
    assert stat == 0.0
    assert p == 1.0


def test_chi_square_golden_cell():
    stat, p = chi_square_2x2(ContingencyTable2x2(80, 20, 63, 37))
    assert stat == pytest.approx(6.281437860385229, rel=1e-12)
    assert p == pytest.approx(0.012200906702977018, rel=1e-12)


def test_chi_square_zero_marginal_rejected():
    with pytest.raises(ValueError):
        chi_square_2x2(ContingencyTable2x2(0, 0, 5, 5))
    with pytest.raises(ValueError):
        chi_square_2x2(ContingencyTable2x2(5, 0, 5, 0))


counts = st.integers(min_value=1, max_value=60)


@given(counts, counts, counts, counts)
@settings(max_examples=100)
def test_chi_square_without_yates_equals_z_squared(a, b, c, d):
    stat, _ = chi_square_2x2(ContingencyTable2x2(a, b, c, d), yates=False)
    assert stat == pytest.approx(two_proportion_z_squared(a, b, c, d), abs=1e-10)


@given(counts, counts, counts, counts)
@settings(max_examples=100)
def test_chi_square_swap_invariance(a, b, c, d):
    # swapping both rows and both columns leaves the statistic unchanged
    s1, p1 = chi_square_2x2(ContingencyTable2x2(a, b, c, d))
    s2, p2 = chi_square_2x2(ContingencyTable2x2(d, c, b, a))
    assert s1 == pytest.approx(s2, rel=1e-12)
    assert p1 == pytest.approx(p2, rel=1e-12)
    assert 0.0 <= p1 <= 1.0


# -- fisher ---------------------------------------------------------------------


def test_fisher_golden_control_cell():
    p = fisher_exact_2x2(ContingencyTable2x2(20, 0, 13, 7))
    assert 0.0080 <= p <= 0.0086


def test_fisher_identical_rows_is_one():
    assert fisher_exact_2x2(ContingencyTable2x2(9, 3, 9, 3)) == pytest.approx(1.0)


def test_fisher_balanced_example_vs_oracle():
    p = fisher_exact_2x2(ContingencyTable2x2(5, 5, 5, 5))
    assert p == pytest.approx(fisher_oracle(5, 5, 5, 5), abs=1e-12)


small = st.integers(min_value=0, max_value=10)


@given(small, small, small, small)
@settings(max_examples=200)
def test_fisher_matches_enumeration_oracle(a, b, c, d):
    if a + b + c + d == 0:
        return
    p = fisher_exact_2x2(ContingencyTable2x2(a, b, c, d))
    assert p == pytest.approx(fisher_oracle(a, b, c, d), abs=1e-12)
    assert 0.0 <= p <= 1.0


@given(small, small, small, small)
@settings(max_examples=100)
def test_fisher_swap_invariance(a, b, c, d):
    if a + b + c + d == 0:
        return
    p1 = fisher_exact_2x2(ContingencyTable2x2(a, b, c, d))
    p2 = fisher_exact_2x2(ContingencyTable2x2(d, c, b, a))
    assert p1 == pytest.approx(p2, abs=1e-12)


def test_fisher_against_scipy_if_available():
    scipy_stats = pytest.importorskip("scipy.stats")
    for cell in [(20, 0, 13, 7), (5, 5, 5, 5), (17, 3, 4, 16), (9, 1, 2, 8)]:
        ours = fisher_exact_2x2(ContingencyTable2x2(*cell))
        theirs = scipy_stats.fisher_exact(
            [[cell[0], cell[1]], [cell[2], cell[3]]], alternative="two-sided"
        )[1]
        assert ours == pytest.approx(theirs, abs=1e-9)


# -- quantile & sample size -------------------------------------------------------


def test_normal_quantile_goldens():
    assert normal_quantile(0.95) == pytest.approx(1.6448536269514722, abs=2e-9)
    assert normal_quantile(0.80) == pytest.approx(0.8416212335729143, abs=2e-9)
    assert normal_quantile(0.5) == pytest.approx(0.0, abs=1e-12)
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=2e-9)


@given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
@settings(max_examples=200)
def test_normal_quantile_round_trip(p):
    assert normal_cdf(normal_quantile(p)) == pytest.approx(p, abs=1e-8)


@given(st.floats(min_value=1e-6, max_value=0.5))
@settings(max_examples=100)
def test_normal_quantile_antisymmetric(p):
    assert normal_quantile(p) == pytest.approx(-normal_quantile(1 - p), abs=1e-8)


def test_normal_quantile_domain():
    for bad in (0.0, 1.0, -0.2, 1.2):
        with pytest.raises(ValueError):
            normal_quantile(bad)


def test_sample_size_golden_96():
    design = NoninferiorityDesign(
        p_standard=0.80, p_test=0.75, margin=0.20, alpha=0.05, power=0.80
    )
    assert noninferiority_sample_size(design) == 96


def test_sample_size_monotone_in_margin():
    ns = [
        noninferiority_sample_size(
            NoninferiorityDesign(0.80, 0.75, m, 0.05, 0.80)
        )
        for m in (0.10, 0.15, 0.20, 0.30)
    ]
    assert ns == sorted(ns, reverse=True)
    assert all(n >= 1 for n in ns)


def test_sample_size_grows_with_power():
    lo = noninferiority_sample_size(NoninferiorityDesign(0.80, 0.75, 0.20, 0.05, 0.70))
    hi = noninferiority_sample_size(NoninferiorityDesign(0.80, 0.75, 0.20, 0.05, 0.90))
    assert hi > lo


def test_sample_size_degenerate_margin_rejected():
    with pytest.raises(ValueError):
        NoninferiorityDesign(0.80, 0.75, 0.05, 0.05, 0.80)
    with pytest.raises(ValueError):
        NoninferiorityDesign(0.80, 0.75, 0.0, 0.05, 0.80)
    with pytest.raises(ValueError):
        NoninferiorityDesign(1.2, 0.75, 0.2, 0.05, 0.80)


# -- display formatting -------------------------------------------------------------


@pytest.mark.parametrize(
    "p,expected",
    [
        (1.0, "1"), (0.9999, "1"), (0.63, "0.63"), (0.21, "0.21"),
        (0.0122, "0.01"), (0.0373, "0.04"), (0.0034870, "0.003"),
        (0.00154, "0.002"), (0.0001545, "2e-04"),
    ],
)
def test_format_p(p, expected):
    assert format_p(p) == expected


@pytest.mark.parametrize(
    "display,ulp",
    [("0.21", 0.01), ("1", 1.0), ("8e-3", 1e-3), ("4e-4", 1e-4), ("0.037", 0.001),
     ("1.5e-2", 1e-3)],
)
def test_display_ulp(display, ulp):
    assert display_ulp(display) == pytest.approx(ulp)


def test_agreement_at_display_precision():
    assert agrees_at_display_precision(0.2070, "0.21")
    assert agrees_at_display_precision(0.001544, "1e-3")
    assert agrees_at_display_precision(0.008316, "8e-3")
    assert not agrees_at_display_precision(0.30, "0.21")
    assert agrees_at_display_precision(1.7e-5, "<1e-3")
    assert not agrees_at_display_precision(0.002, "<1e-3")


# -- tabulate / analyze ----------------------------------------------------------------


def tiny_manifest():
    items = [
        StudyItem("aa01", "c", "original", None, "s0"),
        StudyItem("aa02", "c", "modified", 2.0, "s0"),
        StudyItem("aa03", "c", "original", None, "s1"),
        StudyItem("aa04", "c", "modified", 2.5, "s1"),
    ]
    return StudyManifest(
        study_id="st1",
        categories=[CategorySpec("c", 1.0, 3.0, 2)],
        items=items,
        display_order=[2, 0, 3, 1],
        master_seed=5,
    )


def make_log(verdict_by_index, finished=True, study_id="st1", grader="g1"):
    events = [
        SessionEvent(0, utc_now_iso(), "started", extra={
            "session_id": "sess", "grader_id": grader, "study_id": study_id,
            "item_count": 4,
        })
    ]
    seq = 1
    for idx, verdict in verdict_by_index:
        events.append(SessionEvent(seq, utc_now_iso(), "verdict", idx, verdict))
        seq += 1
    if finished:
        events.append(SessionEvent(seq, utc_now_iso(), "finished"))
    return SessionLog("sess", grader, study_id, 4, events)


def test_tabulate_counts_by_display_index():
    # display_order [2,0,3,1]: display 0 -> item aa03 (original), 1 -> aa01
    # (original), 2 -> aa04 (modified), 3 -> aa02 (modified)
    log = make_log([(0, "original"), (1, "modified"), (2, "original"), (3, "modified")])
    t = tabulate(tiny_manifest(), log, "c")
    assert (t.a, t.b, t.c, t.d) == (1, 1, 1, 1)


def test_tabulate_last_write_wins():
    log = make_log(
        [(0, "modified"), (1, "modified"), (2, "modified"), (3, "modified"),
         (0, "original")]
    )
    t = tabulate(tiny_manifest(), log, "c")
    assert (t.a, t.b, t.c, t.d) == (1, 1, 0, 2)


def test_tabulate_requires_finished():
    log = make_log([(0, "original")], finished=False)
    with pytest.raises(ValueError):
        tabulate(tiny_manifest(), log, "c")


def test_tabulate_rejects_unknown_category_and_study():
    log = make_log([(i, "original") for i in range(4)])
    with pytest.raises(KeyError):
        tabulate(tiny_manifest(), log, "nope")
    with pytest.raises(ValueError):
        tabulate(tiny_manifest(), make_log([(0, "original")], study_id="other"), "c")


def test_choose_test_rule():
    assert choose_test(ContingencyTable2x2(80, 20, 63, 37)) == CHI2_YATES
    assert choose_test(ContingencyTable2x2(20, 0, 13, 7)) == FISHER  # min expected 3.5


def test_analyze_study_composition():
    manifest = tiny_manifest()
    log = make_log([(0, "original"), (1, "original"), (2, "modified"), (3, "original")])
    report = analyze_study(manifest, [log])
    assert len(report.cells) == 1
    cell = report.cells[0]
    t = tabulate(manifest, log, "c")
    direct = fisher_exact_2x2(t) if cell.test_used == FISHER else chi_square_2x2(t)[1]
    assert cell.p_value == direct
    assert cell.tn_count == t.a and cell.fn_count == t.c
    assert cell.tn_rate == t.a / 2 and cell.fn_rate == t.c / 2


def test_analyze_study_reference_marking():
    manifest = tiny_manifest()
    log = make_log([(0, "original"), (1, "original"), (2, "modified"), (3, "modified")])
    matching = analyze_study(manifest, [log], reference={"g1": {"c": "1"}})
    assert matching.cells[0].agrees_with_reference is True
    clashing = analyze_study(manifest, [log], reference={"g1": {"c": "1e-6"}})
    assert clashing.cells[0].agrees_with_reference is False
    assert "*" in clashing.to_text()
    assert clashing.cells[0].p_value == matching.cells[0].p_value  # marked, not altered


def test_report_renderings():
    manifest = tiny_manifest()
    log = make_log([(0, "original"), (1, "original"), (2, "modified"), (3, "modified")])
    report = analyze_study(manifest, [log])
    text = report.to_text()
    assert "g1" in text and "c" in text.splitlines()[1]
    doc = report.to_json_dict()
    assert doc["study_id"] == "st1"
    assert doc["cells"][0]["test_used"] in (CHI2_YATES, FISHER)
    assert 0.0 <= doc["cells"][0]["p_value"] <= 1.0
