"""End-to-end orchestration per sample and (approach, target) pair.

Workflow per attempt: render the approach's prompt, call the gateway once
(single candidate, pass@1), extract code, compile, repair compilation
errors within budget, run the tests, classify. Both the pre-repair and
post-repair outcomes are kept so repair improvement can be reported.

A sample's NL-specification is generated once and shared by every
spec-based attempt for that sample. Failures of individual attempts are
recorded, never allowed to abort the batch.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import CodeSample, Corpus
from .errors import EmptyExtraction, GatewayFailure, SandboxFailure, ToolMissing, TruncatedResponse
from .gateway import Gateway
from .harness import ExecutionHarness, Outcome, classify
from .prompting import Specification, TemplateId, TemplateSet, display_name, extract_code
from .repair import RepairPolicy, RepairTrace, repair


class Approach(str, Enum):
    SOURCE_ONLY = "source"
    SPEC_ONLY = "spec"
    SPEC_PLUS_SOURCE = "spec+source"

    @property
    def needs_spec(self) -> bool:
        return self in (Approach.SPEC_ONLY, Approach.SPEC_PLUS_SOURCE)


_APPROACH_TEMPLATES = {
    Approach.SOURCE_ONLY: TemplateId.TRANSLATE_SOURCE_ONLY,
    Approach.SPEC_ONLY: TemplateId.TRANSLATE_SPEC_ONLY,
    Approach.SPEC_PLUS_SOURCE: TemplateId.TRANSLATE_SPEC_PLUS_SOURCE,
}

FLAG_EMPTY_EXTRACTION = "empty_extraction"
FLAG_GATEWAY_ERROR = "gateway_error"
FLAG_TRUNCATED_RESPONSE = "truncated_response"
FLAG_SANDBOX_FAILURE = "sandbox_failure"


@dataclass
class TranslationAttempt:
    sample_id: str
    dataset_id: str
    approach: Approach
    source_language: str
    target_language: str
    candidate_code: str
    final_code: str
    pre_repair_outcome: Outcome
    post_repair_outcome: Outcome
    spec_digest: str | None = None
    repair: RepairTrace | None = None
    flags: list[str] = field(default_factory=list)
    request_digests: list[str] = field(default_factory=list)
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "dataset": self.dataset_id,
            "approach": self.approach.value,
            "source_language": self.source_language,
            "target_language": self.target_language,
            "candidate_code": self.candidate_code,
            "final_code": self.final_code,
            "pre_repair_outcome": self.pre_repair_outcome.value,
            "post_repair_outcome": self.post_repair_outcome.value,
            "spec_digest": self.spec_digest,
            "repair": self.repair.to_record() if self.repair else None,
            "flags": sorted(self.flags),
            "request_digests": self.request_digests,
            "error": self.error,
        }


def generate_specification(
    sample: CodeSample, gateway: Gateway, templates: TemplateSet
) -> Specification:
    """One NL-specification per sample, response saved verbatim."""
    prompt = templates.render(
        TemplateId.SPEC_GEN,
        {
            "source_code": sample.source_text,
            "source_language": display_name(sample.language),
        },
    )
    try:
        response = gateway.complete(gateway.request(prompt))
    except GatewayFailure as exc:
        raise type(exc)(f"sample {sample.sample_id}: {exc}") from exc
    return Specification(
        sample_id=sample.sample_id,
        text=response.raw_text,
        source_language=sample.language,
        request_digest=response.request_digest,
    )


def translate(
    sample: CodeSample,
    spec: Specification | None,
    approach: Approach,
    target_language: str,
    gateway: Gateway,
    templates: TemplateSet,
) -> tuple[str, str]:
    """Render the approach's template, call the gateway once, extract code.

    Returns (candidate_code, request_digest).
    """
    if approach.needs_spec and spec is None:
        raise ValueError(f"approach {approach.value} requires a specification")
    bindings = {
        "source_language": display_name(sample.language),
        "target_language": display_name(target_language),
    }
    if approach is not Approach.SPEC_ONLY:
        bindings["source_code"] = sample.source_text
    if approach.needs_spec:
        bindings["pseudocode_content"] = spec.text
    prompt = templates.render(_APPROACH_TEMPLATES[approach], bindings)
    response = gateway.complete(gateway.request(prompt))
    return extract_code(response.raw_text, target_language), response.request_digest


def evaluate_candidate(
    candidate_code: str,
    target_language: str,
    tests: Sequence,
    harness: ExecutionHarness,
    gateway: Gateway,
    templates: TemplateSet,
    policy: RepairPolicy | None = None,
    no_repair: bool = False,
) -> tuple[Outcome, Outcome, RepairTrace | None, str]:
    """Compile -> (repair on error) -> test -> classify.

    Returns (pre_repair_outcome, post_repair_outcome, repair_trace,
    final_code). The tested program always corresponds to final_code.
    """
    with harness.prepare(candidate_code, target_language) as prep:
        if prep.compile_result.ok:
            outcome = prep.run_tests(tests).overall
            return outcome, outcome, None, candidate_code
        pre = classify(prep.compile_result, None)  # raises ToolMissing when absent
        diagnostics = prep.compile_result.diagnostics

    if no_repair:
        return pre, pre, None, candidate_code

    trace = repair(
        candidate_code, target_language, diagnostics, harness, gateway, templates, policy
    )
    if not trace.fixed:
        return pre, Outcome.COMPILATION_ERROR, trace, trace.final_code

    with harness.prepare(trace.final_code, target_language) as prep:
        if not prep.compile_result.ok:
            return pre, Outcome.COMPILATION_ERROR, trace, trace.final_code
        post = prep.run_tests(tests).overall
    return pre, post, trace, trace.final_code


def plan_attempts(
    corpus: Corpus, approaches: Sequence[Approach], targets: Sequence[str]
) -> list[tuple[CodeSample, Approach, str]]:
    """The attempt grid: every admitted sample x approach x target != source."""
    return [
        (sample, approach, target)
        for sample in corpus.samples
        for approach in approaches
        for target in targets
        if target != sample.language
    ]


def _failed_attempt(
    sample: CodeSample,
    approach: Approach,
    target: str,
    spec: Specification | None,
    flag: str,
    error: str,
    outcome: Outcome = Outcome.COMPILATION_ERROR,
) -> TranslationAttempt:
    return TranslationAttempt(
        sample_id=sample.sample_id,
        dataset_id=sample.dataset_id,
        approach=approach,
        source_language=sample.language,
        target_language=target,
        candidate_code="",
        final_code="",
        pre_repair_outcome=outcome,
        post_repair_outcome=outcome,
        spec_digest=spec.request_digest if spec else None,
        flags=[flag],
        error=error,
    )


def run_experiment(
    corpus: Corpus,
    approaches: Sequence[Approach],
    targets: Sequence[str],
    gateway: Gateway,
    harness: ExecutionHarness,
    templates: TemplateSet,
    policy: RepairPolicy | None = None,
    no_repair: bool = False,
    jobs: int = 1,
) -> list[TranslationAttempt]:
    """Produce one evaluated TranslationAttempt per planned cell.

    Deterministic output order: (sample_id, approach, target). Individual
    failures are recorded on their attempt; the batch always completes.
    """
    for target in targets:
        profile = harness.registry.profile(target)
        if harness.registry.resolve_binary(profile) is None:
            raise ToolMissing(
                f"target '{target}': binary '{profile.version_probe[0]}' not found on PATH"
            )

    plan = plan_attempts(corpus, approaches, targets)
    need_spec = any(a.needs_spec for a in approaches)
    specs: dict[str, Specification] = {}
    spec_errors: dict[str, str] = {}

    if need_spec:
        def gen(sample: CodeSample):
            try:
                specs[sample.sample_id] = generate_specification(sample, gateway, templates)
            except GatewayFailure as exc:
                spec_errors[sample.sample_id] = f"{type(exc).__name__}: {exc}"

        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            list(pool.map(gen, corpus.samples))

    def run_one(cell: tuple[CodeSample, Approach, str]) -> TranslationAttempt:
        sample, approach, target = cell
        spec = specs.get(sample.sample_id) if approach.needs_spec else None
        if approach.needs_spec and spec is None:
            return _failed_attempt(
                sample, approach, target, None, FLAG_GATEWAY_ERROR,
                f"specification unavailable: {spec_errors.get(sample.sample_id, 'unknown')}",
            )
        try:
            candidate, digest = translate(sample, spec, approach, target, gateway, templates)
        except TruncatedResponse as exc:
            return _failed_attempt(
                sample, approach, target, spec, FLAG_TRUNCATED_RESPONSE, str(exc)
            )
        except GatewayFailure as exc:
            return _failed_attempt(
                sample, approach, target, spec, FLAG_GATEWAY_ERROR,
                f"{type(exc).__name__}: {exc}",
            )
        except EmptyExtraction as exc:
            return _failed_attempt(
                sample, approach, target, spec, FLAG_EMPTY_EXTRACTION, str(exc)
            )

        digests = ([spec.request_digest] if spec else []) + [digest]
        try:
            pre, post, trace, final_code = evaluate_candidate(
                candidate, target, sample.tests, harness, gateway, templates,
                policy=policy, no_repair=no_repair,
            )
        except SandboxFailure as exc:
            attempt = _failed_attempt(
                sample, approach, target, spec, FLAG_SANDBOX_FAILURE, str(exc),
                outcome=Outcome.RUNTIME_ERROR,
            )
            attempt.candidate_code = candidate
            attempt.final_code = candidate
            attempt.request_digests = digests
            return attempt

        if trace is not None:
            digests = digests + trace.request_digests
        return TranslationAttempt(
            sample_id=sample.sample_id,
            dataset_id=sample.dataset_id,
            approach=approach,
            source_language=sample.language,
            target_language=target,
            candidate_code=candidate,
            final_code=final_code,
            pre_repair_outcome=pre,
            post_repair_outcome=post,
            spec_digest=spec.request_digest if spec else None,
            repair=trace,
            request_digests=digests,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            attempts = list(pool.map(run_one, plan))
    else:
        attempts = [run_one(cell) for cell in plan]

    attempts.sort(key=lambda a: (a.sample_id, a.approach.value, a.target_language))
    return attempts


def write_results(attempts: Iterable[TranslationAttempt], path: str | Path) -> None:
    """One JSON object per line, key-sorted: byte-stable given equal inputs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for attempt in attempts:
            fh.write(json.dumps(attempt.to_record(), sort_keys=True, ensure_ascii=False) + "\n")


def read_results(path: str | Path) -> list[dict]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records
