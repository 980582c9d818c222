from __future__ import annotations

import math
import random

import pytest

from specbench.errors import PhaseMissing
from specbench.metrics import (
    PHASE_POST,
    PHASE_PRE,
    UNDEFINED,
    CellStats,
    PassRateMatrix,
    emit_report,
    pass_at_1,
)


def rec(
    pre="success",
    post=None,
    dataset="d",
    source="python",
    target="java",
    approach="spec",
):
    return {
        "dataset": dataset,
        "source_language": source,
        "target_language": target,
        "approach": approach,
        "pre_repair_outcome": pre,
        "post_repair_outcome": post if post is not None else pre,
    }


def batch(n_success, n_total, **kwargs):
    rows = [rec(pre="success", **kwargs) for _ in range(n_success)]
    rows += [rec(pre="test_mismatch", **kwargs) for _ in range(n_total - n_success)]
    return rows


# --- pass_at_1 -------------------------------------------------------------------


def test_pass_at_1_three_of_four():
    assert pass_at_1(batch(3, 4), PHASE_PRE) == 0.75


def test_pass_at_1_zero_of_five_is_zero_not_undefined():
    assert pass_at_1(batch(0, 5), PHASE_PRE) == 0.0


def test_pass_at_1_empty_set_is_undefined():
    assert pass_at_1([], PHASE_PRE) is None


def test_pass_at_1_rejects_unknown_phase():
    with pytest.raises(ValueError):
        pass_at_1(batch(1, 1), "mid_repair")


# --- matrix construction -------------------------------------------------------------


def test_matrix_from_records_counts_both_phases():
    records = [rec(pre="compilation_error", post="success"), rec(pre="success")]
    matrix = PassRateMatrix.from_records(records)
    pre = matrix.cells[("d", "python", "java", "spec", PHASE_PRE)]
    post = matrix.cells[("d", "python", "java", "spec", PHASE_POST)]
    assert (pre.successes, pre.total) == (1, 2)
    assert (post.successes, post.total) == (2, 2)


def test_breakdown_counts_sum_to_total_and_match_successes():
    records = (
        batch(3, 5)
        + [rec(pre="runtime_error"), rec(pre="timeout"), rec(pre="compilation_error")]
    )
    matrix = PassRateMatrix.from_records(records)
    stats = matrix.cells[("d", "python", "java", "spec", PHASE_PRE)]
    assert sum(stats.outcomes.values()) == stats.total == 8
    assert stats.outcomes.get("success", 0) == stats.successes == 3


def test_post_rate_never_below_pre_rate_on_pipeline_shaped_data():
    # repair can only turn compilation errors into something else
    records = batch(3, 6) + [rec(pre="compilation_error", post="success")]
    matrix = PassRateMatrix.from_records(records)
    pre = matrix.cells[("d", "python", "java", "spec", PHASE_PRE)]
    post = matrix.cells[("d", "python", "java", "spec", PHASE_POST)]
    assert post.rate >= pre.rate


# --- repair delta ---------------------------------------------------------------------


def test_repair_delta_identity_zero():
    records = batch(2, 4) + batch(1, 2, target="go")
    matrix = PassRateMatrix.from_records(records)
    deltas = matrix.repair_delta()["spec"]
    assert deltas["weighted"] == 0.0
    assert deltas["unweighted"] == 0.0


def test_repair_delta_single_cell_six_points():
    rows = [rec(pre="compilation_error", post="success") for _ in range(6)]
    rows += [rec(pre="success") for _ in range(40)]
    rows += [rec(pre="compilation_error") for _ in range(54)]
    matrix = PassRateMatrix.from_records(rows)
    deltas = matrix.repair_delta()["spec"]
    assert math.isclose(deltas["weighted"], 6.0)
    assert math.isclose(deltas["unweighted"], 6.0)


def test_repair_delta_requires_both_phases():
    matrix = PassRateMatrix.from_records(batch(1, 2))
    del matrix.cells[("d", "python", "java", "spec", PHASE_POST)]
    with pytest.raises(PhaseMissing):
        matrix.repair_delta()


# --- pinned reference aggregates ------------------------------------------------------------


def _reference_fixture_records():
    """Counts that encode the pinned reference aggregates exactly.

    spec only:        pre 1296/2000 = 64.80%, post 1466/2000 (+8.5 points)
    spec+source:      pre 1503/2000 = 75.15%, post 1625/2000 (+6.1 points)
    source baseline:  pre 3843/5000 = 76.86%
    """
    rows = []
    rows += [rec(pre="success", approach="spec") for _ in range(1296)]
    rows += [rec(pre="compilation_error", post="success", approach="spec") for _ in range(170)]
    rows += [rec(pre="test_mismatch", approach="spec") for _ in range(534)]

    rows += [rec(pre="success", approach="spec+source") for _ in range(1503)]
    rows += [
        rec(pre="compilation_error", post="success", approach="spec+source")
        for _ in range(122)
    ]
    rows += [rec(pre="test_mismatch", approach="spec+source") for _ in range(375)]

    rows += [rec(pre="success", approach="source") for _ in range(3843)]
    rows += [rec(pre="test_mismatch", approach="source") for _ in range(1157)]
    return rows


def test_reference_average_rates_reproduced():
    records = _reference_fixture_records()
    by_approach = {
        approach: [r for r in records if r["approach"] == approach]
        for approach in ("spec", "spec+source", "source")
    }
    assert abs(pass_at_1(by_approach["spec"], PHASE_PRE) * 100 - 64.80) < 0.05
    assert abs(pass_at_1(by_approach["spec+source"], PHASE_PRE) * 100 - 75.15) < 0.05
    assert abs(pass_at_1(by_approach["source"], PHASE_PRE) * 100 - 76.86) < 0.05


def test_reference_repair_deltas_reproduced():
    matrix = PassRateMatrix.from_records(_reference_fixture_records())
    deltas = matrix.repair_delta()
    assert abs(deltas["spec"]["unweighted"] - 8.5) < 0.05
    assert abs(deltas["spec"]["weighted"] - 8.5) < 0.05
    assert abs(deltas["spec+source"]["unweighted"] - 6.1) < 0.05
    assert abs(deltas["spec+source"]["weighted"] - 6.1) < 0.05


def test_average_rate_weighting_labels():
    # two cells with different sizes: weighting must matter
    records = batch(9, 10) + batch(0, 2, target="go")
    matrix = PassRateMatrix.from_records(records)
    avg = matrix.average_rate("spec", PHASE_PRE)
    assert math.isclose(avg["weighted"], 9 / 12)
    assert math.isclose(avg["unweighted"], (0.9 + 0.0) / 2)


# --- merge safety -----------------------------------------------------------------------


def test_merge_combines_counts():
    first = PassRateMatrix.from_records(batch(2, 3))
    second = PassRateMatrix.from_records(batch(1, 4))
    merged = first.merged(second)
    stats = merged.cells[("d", "python", "java", "spec", PHASE_PRE)]
    assert (stats.successes, stats.total) == (3, 7)


def test_pass_at_1_merge_safe_under_partitions():
    rng = random.Random(20240811)
    outcomes = ["success", "compilation_error", "test_mismatch", "runtime_error", "timeout"]
    records = [rec(pre=rng.choice(outcomes)) for _ in range(200)]
    whole = pass_at_1(records, PHASE_PRE)
    for _ in range(50):
        cut = rng.randint(1, len(records) - 1)
        parts = [records[:cut], records[cut:]]
        combined = sum(
            pass_at_1(p, PHASE_PRE) * len(p) for p in parts if p
        ) / len(records)
        assert math.isclose(whole, combined, rel_tol=1e-12)


# --- emit / ingest -------------------------------------------------------------------------


def test_empty_matrix_csv_is_header_only():
    csv_text = PassRateMatrix().to_csv()
    lines = csv_text.strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("dataset,source,target,approach,phase,successes,total,rate")


def test_single_attempt_yields_two_csv_rows():
    matrix = PassRateMatrix.from_records([rec()])
    lines = matrix.to_csv().strip().splitlines()
    assert len(lines) == 3  # header + pre + post
    assert "pre_repair" in lines[1] and "post_repair" in lines[2]


def test_json_round_trip_equality():
    matrix = PassRateMatrix.from_records(
        batch(3, 4) + batch(2, 2, target="go") + [rec(pre="timeout", approach="source")]
    )
    assert PassRateMatrix.from_json(matrix.to_json()) == matrix


def test_undefined_rate_prints_em_dash_never_zero(tmp_path):
    matrix = PassRateMatrix()
    matrix.cells[("d", "c", "go", "spec", PHASE_PRE)] = CellStats()
    csv_text = matrix.to_csv()
    assert UNDEFINED in csv_text
    assert ",0.0000" not in csv_text


def test_emit_report_formats(tmp_path):
    matrix = PassRateMatrix.from_records(batch(1, 2))
    for fmt, name in (("json", "r.json"), ("csv", "r.csv"), ("markdown", "r.md")):
        emit_report(matrix, fmt, tmp_path / name)
        assert (tmp_path / name).exists()
    md = (tmp_path / "r.md").read_text()
    assert "| Source | Target |" in md
    assert "50.00% (1/2)" in md
    with pytest.raises(ValueError):
        emit_report(matrix, "xml", tmp_path / "r.xml")


def test_markdown_deterministic_ordering():
    records = batch(1, 1, dataset="b") + batch(1, 1, dataset="a")
    matrix = PassRateMatrix.from_records(records)
    md = matrix.to_markdown()
    assert md.index("Dataset: a") < md.index("Dataset: b")
