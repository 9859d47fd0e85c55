import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entrospect.errors import DataError
from entrospect.spectra import (
    METRIC_NAMES,
    SpectraGroup,
    TestTrace,
    group_by_spectra,
    ingest_coverage,
    read_coverage_jsonl,
    read_lcov,
    suspiciousness_vector,
    write_spectra_csv,
)
from oracles import (
    all_counter_tuples,
    oracle_rogers_tanimoto_textbook,
    oracle_suspiciousness,
)


def metric(name, counters, **kw):
    return suspiciousness_vector(counters, **kw)[METRIC_NAMES.index(name)]


class TestIngest:
    def test_single_failing_test(self):
        traces = [TestTrace("t1", "fail", {("f", 1)})]
        matrix = ingest_coverage(traces, [("f", 1)])
        assert matrix.counters(("f", 1)) == (0, 1, 0, 0)

    def test_two_passing_one_failing(self):
        traces = [
            TestTrace("p1", "pass", {("f", 1)}),
            TestTrace("p2", "pass", {("f", 1)}),
            TestTrace("f1", "fail", {("f", 1)}),
        ]
        matrix = ingest_coverage(traces, [("f", 1)])
        assert matrix.counters(("f", 1)) == (2, 1, 0, 0)

    def test_uncovered_line_counters(self):
        traces = [
            TestTrace("p1", "pass", {("f", 1)}),
            TestTrace("f1", "fail", {("f", 1)}),
        ]
        matrix = ingest_coverage(traces, [("f", 1), ("f", 2)])
        assert matrix.counters(("f", 2)) == (0, 0, 1, 1)

    def test_counter_conservation(self):
        traces = [
            TestTrace("p1", "pass", {("f", 1), ("f", 2)}),
            TestTrace("p2", "pass", {("f", 2)}),
            TestTrace("f1", "fail", {("f", 1)}),
            TestTrace("f2", "fail", {("f", 3)}),
        ]
        universe = [("f", i) for i in (1, 2, 3, 4)]
        matrix = ingest_coverage(traces, universe)
        for key in universe:
            e_p, e_f, n_p, n_f = matrix.counters(key)
            assert e_p + n_p == matrix.passing_total
            assert e_f + n_f == matrix.failing_total

    def test_no_failing_test_rejected(self):
        traces = [TestTrace("p1", "pass", {("f", 1)})]
        with pytest.raises(DataError, match="no bug-reproducing test"):
            ingest_coverage(traces, [("f", 1)])

    def test_unknown_covered_lines_warned_and_ignored(self):
        traces = [TestTrace("f1", "fail", {("f", 1), ("ghost", 9)})]
        matrix = ingest_coverage(traces, [("f", 1)])
        assert matrix.unknown_covered == (("ghost", 9),)
        assert ("ghost", 9) not in matrix.executed

    def test_duplicate_test_id_rejected(self):
        traces = [
            TestTrace("t", "fail", {("f", 1)}),
            TestTrace("t", "pass", {("f", 1)}),
        ]
        with pytest.raises(DataError, match="duplicate"):
            ingest_coverage(traces, [("f", 1)])

    def test_empty_coverage_rejected(self):
        with pytest.raises(DataError, match="covers no lines"):
            ingest_coverage([TestTrace("t", "fail", set())], [("f", 1)])


class TestMetrics:
    def test_tarantula_and_ochiai_exact(self):
        counters = (0, 2, 3, 0)
        assert metric("Tarantula", counters) == 1.0
        assert metric("Ochiai", counters) == 1.0

    def test_zero_failing_executions(self):
        counters = (3, 0, 1, 2)
        assert metric("Ochiai", counters) == 0.0
        assert metric("Wong1", counters) == 0.0
        assert metric("Wong2", counters) == -3.0

    def test_wong3_piecewise(self):
        assert metric("Wong3", (5, 4, 0, 0)) == pytest.approx(4 - 2.3)
        assert metric("Wong3", (2, 1, 0, 0)) == pytest.approx(1 - 2)
        assert metric("Wong3", (10, 1, 0, 0)) == pytest.approx(1 - 2.8)
        assert metric("Wong3", (15, 1, 0, 0)) == pytest.approx(1 - (2.8 + 0.05))

    def test_zoltar_zero_convention(self):
        assert metric("Zoltar", (2, 0, 1, 3)) == 0.0

    def test_overlap_zero_convention(self):
        assert metric("Overlap", (0, 2, 1, 1)) == 0.0

    def test_matches_independent_oracle_exhaustively(self):
        for counters in all_counter_tuples(5, 5):
            vector = suspiciousness_vector(counters)
            for name, value in zip(METRIC_NAMES, vector):
                expected = oracle_suspiciousness(name, counters)
                assert value == pytest.approx(expected, abs=1e-12), (name, counters)

    def test_rogers_tanimoto_textbook_switch(self):
        for counters in all_counter_tuples(4, 4):
            got = metric("RogersTanimoto", counters, rogers_tanimoto_textbook=True)
            assert got == pytest.approx(
                oracle_rogers_tanimoto_textbook(counters), abs=1e-12
            )

    def test_published_rogers_tanimoto_can_exceed_one(self):
        # (e_p, e_f, n_p, n_f) = (0, 0, 5, 1): published denominator is 2,
        # numerator 5. The textbook switch stays within [0, 1].
        counters = (0, 0, 5, 1)
        assert metric("RogersTanimoto", counters) == 2.5
        assert metric("RogersTanimoto", counters, rogers_tanimoto_textbook=True) <= 1.0

    def test_negative_counters_rejected(self):
        with pytest.raises(ValueError):
            suspiciousness_vector((-1, 0, 0, 1))

    @settings(max_examples=200, derandomize=True)
    @given(
        e_p=st.integers(0, 30),
        e_f=st.integers(0, 30),
        n_p=st.integers(0, 30),
        n_f=st.integers(0, 30),
    )
    def test_vector_always_finite(self, e_p, e_f, n_p, n_f):
        import math

        for value in suspiciousness_vector((e_p, e_f, n_p, n_f)):
            assert math.isfinite(value)

    @settings(max_examples=200, derandomize=True)
    @given(
        e_p=st.integers(0, 20),
        e_f=st.integers(0, 20),
        n_p=st.integers(0, 20),
        n_f=st.integers(0, 20),
    )
    def test_unit_interval_metrics(self, e_p, e_f, n_p, n_f):
        counters = (e_p, e_f, n_p, n_f)
        vector = dict(zip(METRIC_NAMES, suspiciousness_vector(counters)))
        for name in ("Tarantula", "Ochiai", "Jaccard", "RusselRao", "SimpleMatching"):
            assert 0.0 <= vector[name] <= 1.0 + 1e-12, name
        textbook_rt = metric("RogersTanimoto", counters, rogers_tanimoto_textbook=True)
        assert 0.0 <= textbook_rt <= 1.0 + 1e-12

    def test_monotone_in_failing_executions(self):
        for e_p in range(0, 4):
            for total_f in range(1, 6):
                previous_t = previous_o = -1.0
                for e_f in range(0, total_f + 1):
                    counters = (e_p, e_f, 5 - e_p, total_f - e_f)
                    t = metric("Tarantula", counters)
                    o = metric("Ochiai", counters)
                    assert t >= previous_t - 1e-12
                    assert o >= previous_o - 1e-12
                    previous_t, previous_o = t, o


class TestGroups:
    def _matrix(self):
        traces = [
            TestTrace("p", "pass", {("f", 2), ("f", 3)}),
            TestTrace("f", "fail", {("f", 1), ("f", 3)}),
        ]
        return ingest_coverage(traces, [("f", i) for i in (1, 2, 3, 4)])

    def test_group_examples(self):
        groups = group_by_spectra(self._matrix())
        assert groups[("f", 1)] is SpectraGroup.FAIL_ONLY
        assert groups[("f", 2)] is SpectraGroup.PASS_ONLY
        assert groups[("f", 3)] is SpectraGroup.BOTH
        assert groups[("f", 4)] is SpectraGroup.UNCOVERED

    def test_groups_partition_universe(self):
        matrix = self._matrix()
        groups = group_by_spectra(matrix)
        assert set(groups) == set(matrix.universe)


class TestReaders:
    def test_jsonl_round(self, tmp_path):
        path = tmp_path / "cov.jsonl"
        rows = [
            {"test_id": "t1", "outcome": "fail",
             "covered": [{"file": "a.java", "lines": [1, 3]}]},
            {"test_id": "t2", "outcome": "pass",
             "covered": [{"file": "a.java", "lines": [2]}, {"file": "b.java", "lines": [1]}]},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        traces = read_coverage_jsonl(path)
        assert traces[0].covered == {("a.java", 1), ("a.java", 3)}
        assert traces[1].covered == {("a.java", 2), ("b.java", 1)}

    def test_jsonl_rejects_bad_json(self, tmp_path):
        path = tmp_path / "cov.jsonl"
        path.write_text("{not json}\n")
        with pytest.raises(DataError):
            read_coverage_jsonl(path)

    def test_lcov_adapter(self, tmp_path):
        tracefile = tmp_path / "lcov.info"
        tracefile.write_text(
            "TN:testA\n"
            "SF:src/a.c\n"
            "DA:1,1\n"
            "DA:2,0\n"
            "DA:3,4\n"
            "end_of_record\n"
            "TN:testB\n"
            "SF:src/a.c\n"
            "DA:2,2\n"
            "end_of_record\n"
        )
        outcomes = tmp_path / "outcomes.json"
        outcomes.write_text(json.dumps({"testA": "fail", "testB": "pass"}))
        traces = read_lcov(tracefile, outcomes)
        by_id = {t.test_id: t for t in traces}
        assert by_id["testA"].covered == {("src/a.c", 1), ("src/a.c", 3)}
        assert by_id["testA"].outcome == "fail"
        assert by_id["testB"].covered == {("src/a.c", 2)}

    def test_lcov_missing_outcome_rejected(self, tmp_path):
        tracefile = tmp_path / "lcov.info"
        tracefile.write_text("TN:t\nSF:a.c\nDA:1,1\nend_of_record\n")
        outcomes = tmp_path / "outcomes.json"
        outcomes.write_text("{}")
        with pytest.raises(DataError):
            read_lcov(tracefile, outcomes)


def test_csv_layout(tmp_path):
    traces = [
        TestTrace("p", "pass", {("f", 1)}),
        TestTrace("f", "fail", {("f", 1), ("f", 2)}),
    ]
    matrix = ingest_coverage(traces, [("f", 1), ("f", 2)])
    out = tmp_path / "spectra.csv"
    write_spectra_csv(out, matrix)
    lines = out.read_text().splitlines()
    assert lines[0] == "file,line_no,e_p,e_f,n_p,n_f," + ",".join(METRIC_NAMES)
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[:6] == ["f", "1", "1", "1", "0", "0"]
    assert len(first) == 6 + 25
