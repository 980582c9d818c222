"""Code-quality accounting for translated programs.

Ingests a static analyzer's issue export (a minimal documented JSON
subset: {issues: [{rule, severity, message, component}]}), keeps only
files that belong to successfully compiled attempts, and reports
Blocker+Critical issue counts per 1000 non-commented lines of code.

NCLOC is computed by a built-in lexical scanner (line + block comments,
string-literal aware) so densities are available without the analyzer.
For Python, string literals - including docstrings - count as code; '#'
is the only comment form.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MalformedExport
from .harness import Outcome

SEVERITY_BLOCKER = "blocker"
SEVERITY_CRITICAL = "critical"
SEVERITY_OTHER = "other"
HEADLINE_SEVERITIES = (SEVERITY_BLOCKER, SEVERITY_CRITICAL)

_FILE_EXTENSIONS = {"c": "c", "cpp": "cpp", "go": "go", "java": "java", "python": "py"}

PHASE_PRE = "pre_repair"
PHASE_POST = "post_repair"
QUALITY_PHASES = (PHASE_PRE, PHASE_POST)


@dataclass(frozen=True)
class Issue:
    rule_id: str
    severity: str
    message: str
    file: str
    language: str | None = None

    @property
    def headline(self) -> bool:
        return self.severity in HEADLINE_SEVERITIES


def _map_severity(raw: str) -> str:
    lowered = str(raw).lower()
    if lowered in HEADLINE_SEVERITIES:
        return lowered
    return SEVERITY_OTHER


def _normalize_component(component: str) -> str:
    # SonarQube-style exports prefix the project key: "proj:path/to/file.c"
    if ":" in component:
        component = component.split(":", 1)[1]
    return component.lstrip("./")


def ingest_issues(
    export: str | Path | dict,
    compiled_files: set[str] | None = None,
) -> list[Issue]:
    """Parse an issue export; optionally keep only compiled files.

    `compiled_files` holds relative paths as produced by
    `attempt_code_path`; issue components match exactly or by suffix (the
    analyzer may have scanned from a parent directory).
    """
    if isinstance(export, (str, Path)):
        try:
            payload = json.loads(Path(export).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedExport(f"{export}: {exc}") from None
    else:
        payload = export
    if not isinstance(payload, dict) or not isinstance(payload.get("issues"), list):
        raise MalformedExport("export must be an object with an 'issues' list")

    issues = []
    for index, raw in enumerate(payload["issues"]):
        if not isinstance(raw, dict):
            raise MalformedExport(f"issues[{index}]: must be an object")
        for key in ("rule", "severity", "message", "component"):
            if key not in raw:
                raise MalformedExport(f"issues[{index}]: missing field '{key}'")
        component = _normalize_component(str(raw["component"]))
        if compiled_files is not None and not _component_matches(component, compiled_files):
            continue
        issues.append(
            Issue(
                rule_id=str(raw["rule"]),
                severity=_map_severity(raw["severity"]),
                message=str(raw["message"]),
                file=component,
                language=raw.get("language"),
            )
        )
    return issues


def _component_matches(component: str, compiled_files: set[str]) -> bool:
    if component in compiled_files:
        return True
    return any(component.endswith("/" + rel) for rel in compiled_files)


def headline_issues(issues: Iterable[Issue]) -> list[Issue]:
    """Blocker and Critical only; Other never reaches headline counts."""
    return [issue for issue in issues if issue.headline]


def top_messages(issues: Sequence[Issue], k: int) -> list[tuple[str, float]]:
    """Most prevalent messages among headline issues.

    Shares are fractions of all headline issues; ranked by share
    descending, ties broken lexicographically.
    """
    headline = headline_issues(issues)
    if not headline:
        return []
    counts = Counter(issue.message for issue in headline)
    total = sum(counts.values())
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [(message, count / total) for message, count in ranked[:k]]


def density(issue_count: int, ncloc: int) -> float | None:
    """Issues per 1000 NCLOC; None (printed as an em dash) when ncloc is 0."""
    if ncloc < 0:
        raise ValueError("ncloc must be >= 0")
    if ncloc == 0:
        return None
    return 1000.0 * issue_count / ncloc


def format_density(value: float | None) -> str:
    return "—" if value is None else f"{value:.2f}"


# --- NCLOC scanner ----------------------------------------------------------


def count_ncloc(code: str, language: str) -> int:
    """Lines containing at least one token outside comments.

    Handles per-language line and block comments and does not treat
    comment markers inside string literals as comments. A closing
    block-comment line with trailing code counts.
    """
    if language == "python":
        return _ncloc_python(code)
    return _ncloc_c_family(code, raw_strings=(language == "go"))


def _ncloc_c_family(code: str, raw_strings: bool) -> int:
    count = 0
    i, n = 0, len(code)
    in_block = False
    string_delim: str | None = None
    has_code = False
    while i < n:
        ch = code[i]
        if ch == "\n":
            if has_code:
                count += 1
            has_code = False
            i += 1
            continue
        if in_block:
            if code.startswith("*/", i):
                in_block = False
                i += 2
            else:
                i += 1
            continue
        if string_delim:
            if not ch.isspace():
                has_code = True
            if string_delim != "`" and ch == "\\":
                i += 2
                continue
            if ch == string_delim:
                string_delim = None
            i += 1
            continue
        if code.startswith("//", i):
            nl = code.find("\n", i)
            i = n if nl == -1 else nl
            continue
        if code.startswith("/*", i):
            in_block = True
            i += 2
            continue
        if ch in ('"', "'") or (raw_strings and ch == "`"):
            string_delim = ch
            has_code = True
            i += 1
            continue
        if not ch.isspace():
            has_code = True
        i += 1
    if has_code:
        count += 1
    return count


def _ncloc_python(code: str) -> int:
    count = 0
    i, n = 0, len(code)
    string_delim: str | None = None  # "'", '"', "'''" or '"""'
    has_code = False
    while i < n:
        ch = code[i]
        if ch == "\n":
            if string_delim and len(string_delim) == 1:
                string_delim = None  # single-quoted strings end at EOL
            if has_code:
                count += 1
            has_code = False
            i += 1
            continue
        if string_delim:
            if not ch.isspace():
                has_code = True
            if ch == "\\":
                i += 2
                continue
            if code.startswith(string_delim, i):
                i += len(string_delim)
                string_delim = None
                continue
            i += 1
            continue
        if ch == "#":
            nl = code.find("\n", i)
            i = n if nl == -1 else nl
            continue
        if ch in ('"', "'"):
            triple = code[i : i + 3] in ('"""', "'''")
            string_delim = code[i : i + 3] if triple else ch
            has_code = True
            i += 3 if triple else 1
            continue
        if not ch.isspace():
            has_code = True
        i += 1
    if has_code:
        count += 1
    return count


# --- wiring between results records and analyzer components -----------------


def attempt_code_path(record: dict, phase: str) -> str:
    """Canonical relative path for one attempt's code in one phase.

    This naming is shared by `bench run --emit-code` (which writes the
    tree the analyzer scans) and issue ingestion (which maps components
    back onto attempts).
    """
    ext = _FILE_EXTENSIONS.get(record["target_language"], "txt")
    return (
        f"{record['dataset']}/{record['approach']}/"
        f"{record['source_language']}-{record['target_language']}/{phase}/"
        f"{record['sample_id']}.{ext}"
    )


def _phase_code(record: dict, phase: str) -> str:
    return record["candidate_code"] if phase == PHASE_PRE else record["final_code"]


def _phase_compiled(record: dict, phase: str) -> bool:
    outcome = record[f"{phase}_outcome"]
    return bool(_phase_code(record, phase)) and outcome != Outcome.COMPILATION_ERROR.value


def compiled_file_map(records: Sequence[dict]) -> dict[str, tuple[dict, str]]:
    """relative path -> (record, phase) for every compiled attempt/phase."""
    out = {}
    for record in records:
        for phase in QUALITY_PHASES:
            if _phase_compiled(record, phase):
                out[attempt_code_path(record, phase)] = (record, phase)
    return out


def emit_code_tree(records: Sequence[dict], root: str | Path) -> list[str]:
    """Write every attempt's non-empty code under root; returns the paths."""
    root = Path(root)
    written = []
    for record in records:
        for phase in QUALITY_PHASES:
            code = _phase_code(record, phase)
            if not code:
                continue
            rel = attempt_code_path(record, phase)
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(code, encoding="utf-8")
            written.append(rel)
    return written


@dataclass
class QualityCell:
    issue_count: int = 0
    ncloc: int = 0

    @property
    def density(self) -> float | None:
        return density(self.issue_count, self.ncloc)


QualityKey = tuple[str, str, str, str, str]  # dataset, approach, source, target, phase


def build_quality_cells(
    records: Sequence[dict], issues: Sequence[Issue]
) -> dict[QualityKey, QualityCell]:
    """Headline issue counts and NCLOC per (approach, language pair, phase)."""
    files = compiled_file_map(records)
    cells: dict[QualityKey, QualityCell] = {}
    for rel, (record, phase) in files.items():
        key = _cell_key(record, phase)
        cell = cells.setdefault(key, QualityCell())
        cell.ncloc += count_ncloc(_phase_code(record, phase), record["target_language"])

    compiled_paths = set(files)
    for issue in headline_issues(issues):
        rel = _resolve_component(issue.file, compiled_paths)
        if rel is None:
            continue
        record, phase = files[rel]
        cells[_cell_key(record, phase)].issue_count += 1
    return cells


def _cell_key(record: dict, phase: str) -> QualityKey:
    return (
        record["dataset"],
        record["approach"],
        record["source_language"],
        record["target_language"],
        phase,
    )


def _resolve_component(component: str, compiled_paths: set[str]) -> str | None:
    if component in compiled_paths:
        return component
    for rel in compiled_paths:
        if component.endswith("/" + rel):
            return rel
    return None


def quality_csv(cells: dict[QualityKey, QualityCell]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["dataset", "approach", "source", "target", "phase", "issue_count", "ncloc", "density"]
    )
    for key in sorted(cells):
        cell = cells[key]
        writer.writerow(list(key) + [cell.issue_count, cell.ncloc, format_density(cell.density)])
    return buf.getvalue()


def distribution_rows(
    records: Sequence[dict], issues: Sequence[Issue]
) -> list[tuple[str, str, str, float | None]]:
    """Per-file issue density: (dataset, method, file, density) rows.

    The shape external distribution plots (violin and friends) consume.
    """
    files = compiled_file_map(records)
    compiled_paths = set(files)
    per_file = Counter()
    for issue in headline_issues(issues):
        rel = _resolve_component(issue.file, compiled_paths)
        if rel is not None:
            per_file[rel] += 1
    rows = []
    for rel in sorted(files):
        record, phase = files[rel]
        ncloc = count_ncloc(_phase_code(record, phase), record["target_language"])
        rows.append(
            (record["dataset"], record["approach"], rel, density(per_file.get(rel, 0), ncloc))
        )
    return rows


def distribution_csv(rows: Sequence[tuple[str, str, str, float | None]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", "method", "file", "density"])
    for dataset, method, file, value in rows:
        writer.writerow([dataset, method, file, "" if value is None else f"{value:.4f}"])
    return buf.getvalue()
