"""Load, validate, and repair benchmark corpora of code samples.

A corpus is a directory with one ``manifest.json`` plus per-sample source
files and paired ``*.in`` / ``*.out`` test files (raw bytes, decoded as
strict UTF-8). Some published benchmark outputs are cut short and end with
a literal ``...``; validation runs the original program on each test input
and either rewrites such truncated outputs with the real one (when the
prefix matches) or excludes the sample as having no valid test case.

Comparison policy: both sides go through ``harness.normalize_output``
(newline unification, per-line trailing-whitespace trim, outer strip)
before the exact or prefix check. The reference procedure leaves the
normalization point unspecified; trimming first is this artifact's choice.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .errors import (
    DuplicateSampleId,
    MalformedManifest,
    MissingManifest,
    ReportSampleMismatch,
)
from .harness import normalize_output

if TYPE_CHECKING:
    from .harness import ExecutionHarness

TRUNCATION_MARKER = "..."
SUBJECT_LANGUAGES = ("c", "cpp", "go", "java", "python")

REASON_NO_VALID_TESTS = "no valid test case"
REASON_UNCOMPILABLE = "source uncompilable"


@dataclass(frozen=True)
class TestCase:
    input: str
    expected_output: str
    truncated: bool
    in_file: str | None = None
    out_file: str | None = None

    @classmethod
    def from_raw(
        cls, input_text: str, expected_output: str, in_file: str | None = None, out_file: str | None = None
    ) -> "TestCase":
        return cls(
            input=input_text,
            expected_output=expected_output,
            truncated=expected_output.rstrip().endswith(TRUNCATION_MARKER),
            in_file=in_file,
            out_file=out_file,
        )


@dataclass
class CodeSample:
    sample_id: str
    language: str
    source_text: str
    tests: list[TestCase]
    dataset_id: str
    source_file: str | None = None


@dataclass
class Corpus:
    dataset_id: str
    samples: list[CodeSample]
    excluded: list[tuple[str, str]] = field(default_factory=list)

    def sample_ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]


class ValidationVerdict(str, Enum):
    EXACT = "exact"
    PREFIX_REPAIRABLE = "prefix_repairable"
    MISMATCH = "mismatch"


@dataclass(frozen=True)
class TestValidation:
    verdict: ValidationVerdict
    actual_output: str
    timed_out: bool = False


@dataclass
class ValidationReport:
    sample_id: str
    source_compiled: bool
    compile_diagnostics: str
    tests: list[TestValidation]


def _manifest_error(context: str, detail: str) -> MalformedManifest:
    return MalformedManifest(f"{context}: {detail}")


def _read_text(path: Path, context: str) -> str:
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise _manifest_error(context, f"file not found: {path.name}") from None
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise _manifest_error(context, f"{path.name} is not valid UTF-8 ({exc})") from None


def load_manifest(root: str | Path) -> Corpus:
    """Parse a corpus directory into a Corpus, ordered by sample_id."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingManifest(f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise _manifest_error("manifest.json", str(exc)) from None

    if not isinstance(manifest, dict):
        raise _manifest_error("manifest.json", "top level must be an object")
    dataset_id = manifest.get("dataset_id")
    if not isinstance(dataset_id, str) or not dataset_id:
        raise _manifest_error("manifest.json", "missing or empty field 'dataset_id'")
    raw_samples = manifest.get("samples")
    if not isinstance(raw_samples, list):
        raise _manifest_error("manifest.json", "missing field 'samples' (list)")

    samples: list[CodeSample] = []
    seen: set[str] = set()
    for index, entry in enumerate(raw_samples):
        context = f"samples[{index}]"
        if not isinstance(entry, dict):
            raise _manifest_error(context, "must be an object")
        for key in ("sample_id", "language", "source_file", "tests"):
            if key not in entry:
                raise _manifest_error(context, f"missing field '{key}'")
        sample_id = entry["sample_id"]
        if sample_id in seen:
            raise DuplicateSampleId(f"duplicate sample_id '{sample_id}'")
        seen.add(sample_id)
        language = entry["language"]
        if language not in SUBJECT_LANGUAGES:
            raise _manifest_error(
                f"{context} ({sample_id})",
                f"unknown language '{language}' (expected one of {', '.join(SUBJECT_LANGUAGES)})",
            )
        if not isinstance(entry["tests"], list):
            raise _manifest_error(f"{context} ({sample_id})", "'tests' must be a list")

        source_text = _read_text(root / entry["source_file"], f"{context} ({sample_id})")
        tests = []
        for t_index, test_entry in enumerate(entry["tests"]):
            t_context = f"{context} ({sample_id}) tests[{t_index}]"
            if not isinstance(test_entry, dict) or "in_file" not in test_entry or "out_file" not in test_entry:
                raise _manifest_error(t_context, "needs 'in_file' and 'out_file'")
            tests.append(
                TestCase.from_raw(
                    _read_text(root / test_entry["in_file"], t_context),
                    _read_text(root / test_entry["out_file"], t_context),
                    in_file=test_entry["in_file"],
                    out_file=test_entry["out_file"],
                )
            )
        samples.append(
            CodeSample(
                sample_id=sample_id,
                language=language,
                source_text=source_text,
                tests=tests,
                dataset_id=dataset_id,
                source_file=entry["source_file"],
            )
        )

    samples.sort(key=lambda s: s.sample_id)
    excluded = [
        (e["sample_id"], e["reason"]) for e in manifest.get("excluded", [])
    ]
    return Corpus(dataset_id=dataset_id, samples=samples, excluded=excluded)


_EXTENSIONS = {"c": "c", "cpp": "cpp", "go": "go", "java": "java", "python": "py"}


def save_corpus(corpus: Corpus, root: str | Path) -> None:
    """Write a corpus back to the manifest layout, byte-preserving payloads."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for sample in corpus.samples:
        source_file = sample.source_file or f"{sample.sample_id}.{_EXTENSIONS[sample.language]}"
        (root / source_file).parent.mkdir(parents=True, exist_ok=True)
        (root / source_file).write_bytes(sample.source_text.encode("utf-8"))
        test_entries = []
        for index, test in enumerate(sample.tests):
            in_file = test.in_file or f"{sample.sample_id}_{index}.in"
            out_file = test.out_file or f"{sample.sample_id}_{index}.out"
            (root / in_file).parent.mkdir(parents=True, exist_ok=True)
            (root / in_file).write_bytes(test.input.encode("utf-8"))
            (root / out_file).write_bytes(test.expected_output.encode("utf-8"))
            test_entries.append({"in_file": in_file, "out_file": out_file})
        entries.append(
            {
                "sample_id": sample.sample_id,
                "language": sample.language,
                "source_file": source_file,
                "tests": test_entries,
            }
        )
    manifest = {"dataset_id": corpus.dataset_id, "samples": entries}
    if corpus.excluded:
        manifest["excluded"] = [
            {"sample_id": sid, "reason": reason} for sid, reason in corpus.excluded
        ]
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _strip_marker(expected_output: str) -> str:
    trimmed = expected_output.rstrip()
    return trimmed[: -len(TRUNCATION_MARKER)]


def classify_test_output(expected: TestCase, actual_output: str) -> ValidationVerdict:
    actual_n = normalize_output(actual_output)
    if actual_n == normalize_output(expected.expected_output):
        return ValidationVerdict.EXACT
    if expected.truncated:
        prefix = normalize_output(_strip_marker(expected.expected_output))
        if prefix and actual_n.startswith(prefix):
            return ValidationVerdict.PREFIX_REPAIRABLE
    return ValidationVerdict.MISMATCH


def validate_sample(sample: CodeSample, harness: "ExecutionHarness") -> ValidationReport:
    """Run the original source on its own tests and classify each output.

    A source that fails to compile is reported (source_compiled=False), not
    dropped; a per-test timeout is recorded as a mismatch with timed_out set.
    """
    with harness.prepare(sample.source_text, sample.language) as prep:
        if not prep.compile_result.ok:
            return ValidationReport(
                sample_id=sample.sample_id,
                source_compiled=False,
                compile_diagnostics=prep.compile_result.diagnostics,
                tests=[],
            )
        results = []
        for test in sample.tests:
            res = prep.run(test.input)
            if res.timed_out or res.exit_code != 0:
                results.append(
                    TestValidation(
                        verdict=ValidationVerdict.MISMATCH,
                        actual_output=res.stdout,
                        timed_out=res.timed_out,
                    )
                )
                continue
            results.append(
                TestValidation(
                    verdict=classify_test_output(test, res.stdout),
                    actual_output=res.stdout,
                )
            )
    return ValidationReport(
        sample_id=sample.sample_id,
        source_compiled=True,
        compile_diagnostics="",
        tests=results,
    )


def repair_corpus(corpus: Corpus, reports: Sequence[ValidationReport]) -> Corpus:
    """Fold validation reports into a repaired corpus.

    Prefix-repairable tests get their expected output replaced by the
    recorded actual output; samples with any mismatching test (or an
    uncompilable source) move to the excluded list.
    """
    by_id = {}
    for report in reports:
        if report.sample_id not in {s.sample_id for s in corpus.samples}:
            raise ReportSampleMismatch(f"report references unknown sample_id '{report.sample_id}'")
        by_id[report.sample_id] = report

    kept: list[CodeSample] = []
    excluded = list(corpus.excluded)
    for sample in corpus.samples:
        report = by_id.get(sample.sample_id)
        if report is None:
            raise ReportSampleMismatch(f"no report for sample_id '{sample.sample_id}'")
        if not report.source_compiled:
            excluded.append((sample.sample_id, REASON_UNCOMPILABLE))
            continue
        if len(report.tests) != len(sample.tests):
            raise ReportSampleMismatch(
                f"report for '{sample.sample_id}' covers {len(report.tests)} of "
                f"{len(sample.tests)} tests"
            )
        if any(t.verdict is ValidationVerdict.MISMATCH for t in report.tests):
            excluded.append((sample.sample_id, REASON_NO_VALID_TESTS))
            continue
        new_tests = []
        for test, validation in zip(sample.tests, report.tests):
            if validation.verdict is ValidationVerdict.PREFIX_REPAIRABLE:
                new_tests.append(
                    replace(test, expected_output=validation.actual_output, truncated=False)
                )
            else:
                new_tests.append(test)
        kept.append(replace_sample_tests(sample, new_tests))

    return Corpus(dataset_id=corpus.dataset_id, samples=kept, excluded=excluded)


def replace_sample_tests(sample: CodeSample, tests: list[TestCase]) -> CodeSample:
    return CodeSample(
        sample_id=sample.sample_id,
        language=sample.language,
        source_text=sample.source_text,
        tests=tests,
        dataset_id=sample.dataset_id,
        source_file=sample.source_file,
    )
