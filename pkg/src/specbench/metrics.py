"""Correctness rates, per-pair matrices, and repair improvement.

Rates are pass@1: the fraction of attempts whose single candidate passed
every test. Cells are keyed by (dataset, source, target, approach, phase)
with phase in {pre_repair, post_repair}. An empty cell has no rate; it is
reported as "—", never as zero.

Averages across cells come in two labeled flavors, sample-weighted and
cell-unweighted, since published aggregates rarely say which was meant.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import PhaseMissing
from .harness import Outcome

PHASE_PRE = "pre_repair"
PHASE_POST = "post_repair"
PHASES = (PHASE_PRE, PHASE_POST)

UNDEFINED = "—"  # em dash: the undefined-rate marker

CellKey = tuple[str, str, str, str, str]  # dataset, source, target, approach, phase

_CSV_OUTCOME_COLUMNS = {
    "compile_err": Outcome.COMPILATION_ERROR.value,
    "mismatch": Outcome.TEST_MISMATCH.value,
    "runtime_err": Outcome.RUNTIME_ERROR.value,
    "timeout": Outcome.TIMEOUT.value,
}


@dataclass
class CellStats:
    successes: int = 0
    total: int = 0
    outcomes: dict[str, int] = field(default_factory=dict)

    @property
    def rate(self) -> float | None:
        if self.total == 0:
            return None
        return self.successes / self.total

    def add_outcome(self, outcome: str) -> None:
        self.total += 1
        self.outcomes[outcome] = self.outcomes.get(outcome, 0) + 1
        if outcome == Outcome.SUCCESS.value:
            self.successes += 1

    def merged(self, other: "CellStats") -> "CellStats":
        outcomes = dict(self.outcomes)
        for key, count in other.outcomes.items():
            outcomes[key] = outcomes.get(key, 0) + count
        return CellStats(
            successes=self.successes + other.successes,
            total=self.total + other.total,
            outcomes=outcomes,
        )


def pass_at_1(records: Sequence[dict], phase: str) -> float | None:
    """successes / attempts for one phase; None (undefined) on an empty set."""
    if phase not in PHASES:
        raise ValueError(f"unknown phase '{phase}'")
    if not records:
        return None
    successes = sum(
        1 for r in records if r[f"{phase}_outcome"] == Outcome.SUCCESS.value
    )
    return successes / len(records)


class PassRateMatrix:
    """Per-cell success counts plus the outcome breakdown."""

    def __init__(self, cells: dict[CellKey, CellStats] | None = None):
        self.cells: dict[CellKey, CellStats] = cells or {}

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "PassRateMatrix":
        matrix = cls()
        for record in records:
            for phase in PHASES:
                key = (
                    record["dataset"],
                    record["source_language"],
                    record["target_language"],
                    record["approach"],
                    phase,
                )
                matrix.cells.setdefault(key, CellStats()).add_outcome(
                    record[f"{phase}_outcome"]
                )
        return matrix

    def merged(self, other: "PassRateMatrix") -> "PassRateMatrix":
        cells = dict(self.cells)
        for key, stats in other.cells.items():
            cells[key] = cells[key].merged(stats) if key in cells else stats
        return PassRateMatrix(cells)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PassRateMatrix):
            return NotImplemented
        if set(self.cells) != set(other.cells):
            return False
        for key, stats in self.cells.items():
            theirs = other.cells[key]
            if (
                stats.successes != theirs.successes
                or stats.total != theirs.total
                or stats.outcomes != theirs.outcomes
            ):
                return False
        return True

    def sorted_keys(self) -> list[CellKey]:
        # pre_repair sorts before post_repair within a cell
        return sorted(self.cells, key=lambda k: (k[:4], PHASES.index(k[4])))

    def approaches(self) -> list[str]:
        return sorted({key[3] for key in self.cells})

    # -- aggregates --------------------------------------------------------

    def average_rate(self, approach: str, phase: str) -> dict[str, float | None]:
        """{'weighted': Σsucc/Σtotal, 'unweighted': mean of cell rates}."""
        rates = []
        successes = total = 0
        for (dataset, source, target, cell_approach, cell_phase), stats in self.cells.items():
            if cell_approach != approach or cell_phase != phase:
                continue
            if stats.total:
                rates.append(stats.rate)
                successes += stats.successes
                total += stats.total
        return {
            "weighted": successes / total if total else None,
            "unweighted": sum(rates) / len(rates) if rates else None,
        }

    def repair_delta(self) -> dict[str, dict[str, float]]:
        """Per-approach (post - pre) improvement in percentage points.

        Both the cell-total-weighted and the unweighted mean over cells are
        returned. Raises PhaseMissing if a cell lacks one phase.
        """
        groups: dict[str, list[tuple[float, int]]] = {}
        seen = {key[:4] for key in self.cells}
        for dataset, source, target, approach in sorted(seen):
            pre = self.cells.get((dataset, source, target, approach, PHASE_PRE))
            post = self.cells.get((dataset, source, target, approach, PHASE_POST))
            if pre is None or post is None:
                raise PhaseMissing(
                    f"cell {dataset}/{source}->{target}/{approach} lacks a phase"
                )
            if pre.total == 0 or post.total == 0:
                continue
            delta_points = (post.rate - pre.rate) * 100.0
            groups.setdefault(approach, []).append((delta_points, pre.total))
        out = {}
        for approach, deltas in groups.items():
            weight_sum = sum(weight for _, weight in deltas)
            out[approach] = {
                "unweighted": sum(d for d, _ in deltas) / len(deltas),
                "weighted": sum(d * w for d, w in deltas) / weight_sum,
            }
        return out

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        rows = []
        for key in self.sorted_keys():
            dataset, source, target, approach, phase = key
            stats = self.cells[key]
            rows.append(
                {
                    "dataset": dataset,
                    "source": source,
                    "target": target,
                    "approach": approach,
                    "phase": phase,
                    "successes": stats.successes,
                    "total": stats.total,
                    "rate": stats.rate,
                    "outcomes": dict(sorted(stats.outcomes.items())),
                }
            )
        return json.dumps({"cells": rows}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PassRateMatrix":
        payload = json.loads(text)
        cells = {}
        for row in payload["cells"]:
            key = (row["dataset"], row["source"], row["target"], row["approach"], row["phase"])
            cells[key] = CellStats(
                successes=row["successes"],
                total=row["total"],
                outcomes=dict(row["outcomes"]),
            )
        return cls(cells)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["dataset", "source", "target", "approach", "phase", "successes", "total", "rate"]
            + list(_CSV_OUTCOME_COLUMNS)
        )
        for key in self.sorted_keys():
            dataset, source, target, approach, phase = key
            stats = self.cells[key]
            rate = UNDEFINED if stats.rate is None else f"{stats.rate:.4f}"
            writer.writerow(
                [dataset, source, target, approach, phase, stats.successes, stats.total, rate]
                + [stats.outcomes.get(outcome, 0) for outcome in _CSV_OUTCOME_COLUMNS.values()]
            )
        return buf.getvalue()

    def to_markdown(self) -> str:
        """A per-dataset grid: one row per language pair, approach x phase columns."""
        lines = ["# Translation correctness (pass@1)", ""]
        datasets = sorted({key[0] for key in self.cells})
        approaches = self.approaches()
        for dataset in datasets:
            lines.append(f"## Dataset: {dataset}")
            lines.append("")
            header = ["Source", "Target"]
            for approach in approaches:
                header += [f"{approach} pre", f"{approach} post"]
            lines.append("| " + " | ".join(header) + " |")
            lines.append("|" + "---|" * len(header))
            pairs = sorted(
                {
                    (key[1], key[2])
                    for key in self.cells
                    if key[0] == dataset
                }
            )
            for source, target in pairs:
                row = [source, target]
                for approach in approaches:
                    for phase in PHASES:
                        stats = self.cells.get((dataset, source, target, approach, phase))
                        row.append(_format_cell(stats))
                lines.append("| " + " | ".join(row) + " |")
            lines.append("")

        deltas = self._try_repair_delta()
        if deltas:
            lines.append("## Repair improvement (percentage points)")
            lines.append("")
            lines.append("| Approach | Weighted | Unweighted |")
            lines.append("|---|---|---|")
            for approach in sorted(deltas):
                d = deltas[approach]
                lines.append(
                    f"| {approach} | {d['weighted']:+.2f} | {d['unweighted']:+.2f} |"
                )
            lines.append("")

        lines.append("## Averages per approach")
        lines.append("")
        lines.append("| Approach | Phase | Weighted | Unweighted |")
        lines.append("|---|---|---|---|")
        for approach in approaches:
            for phase in PHASES:
                avg = self.average_rate(approach, phase)
                lines.append(
                    f"| {approach} | {phase} | {_format_rate(avg['weighted'])} "
                    f"| {_format_rate(avg['unweighted'])} |"
                )
        lines.append("")
        return "\n".join(lines)

    def _try_repair_delta(self) -> dict[str, dict[str, float]]:
        try:
            return self.repair_delta()
        except PhaseMissing:
            return {}


def _format_rate(rate: float | None) -> str:
    return UNDEFINED if rate is None else f"{100 * rate:.2f}%"


def _format_cell(stats: CellStats | None) -> str:
    if stats is None or stats.total == 0:
        return UNDEFINED
    return f"{100 * stats.rate:.2f}% ({stats.successes}/{stats.total})"


def emit_report(matrix: PassRateMatrix, fmt: str, path: str | Path) -> None:
    """Write the matrix in json, csv, or markdown with deterministic ordering."""
    renderers = {"json": matrix.to_json, "csv": matrix.to_csv, "markdown": matrix.to_markdown}
    if fmt not in renderers:
        raise ValueError(f"unknown report format '{fmt}' (json, csv, markdown)")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(renderers[fmt](), encoding="utf-8")
