"""Iterative compilation-error repair through the model gateway.

Only compilation errors are repaired, never test failures. Each iteration
feeds the latest candidate and its compiler diagnostics back to the model;
the loop stops on a successful compile or when the iteration budget
(default 3) is exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EmptyExtraction, GatewayFailure
from .gateway import Gateway
from .harness import CompileStatus, ExecutionHarness
from .prompting import TemplateId, TemplateSet, display_name, extract_code

DEFAULT_MAX_ITERATIONS = 3
DIAGNOSTICS_CAP_BYTES = 16 * 1024


@dataclass(frozen=True)
class RepairPolicy:
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    diagnostics_cap: int = DIAGNOSTICS_CAP_BYTES

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class RepairAttempt:
    code_before: str
    diagnostics: str
    code_after: str
    compile_status: str


@dataclass
class RepairTrace:
    attempts: list[RepairAttempt] = field(default_factory=list)
    final_code: str = ""
    fixed: bool = False
    iterations_used: int = 0
    request_digests: list[str] = field(default_factory=list)
    error: str | None = None

    def to_record(self) -> dict:
        return {
            "attempts": [
                {
                    "diagnostics": a.diagnostics,
                    "compile_status": a.compile_status,
                }
                for a in self.attempts
            ],
            "final_code": self.final_code,
            "fixed": self.fixed,
            "iterations_used": self.iterations_used,
            "request_digests": self.request_digests,
            "error": self.error,
        }


def truncate_diagnostics(diagnostics: str, cap: int) -> str:
    """Head-preserving byte cap on compiler output (token-budget hygiene)."""
    encoded = diagnostics.encode("utf-8")
    if len(encoded) <= cap:
        return diagnostics
    head = encoded[:cap].decode("utf-8", errors="ignore")
    return head + "\n[diagnostics truncated]"


def repair(
    code: str,
    target_language: str,
    diagnostics: str,
    harness: ExecutionHarness,
    gateway: Gateway,
    templates: TemplateSet,
    policy: RepairPolicy | None = None,
) -> RepairTrace:
    """Repair a candidate whose initial compile failed.

    `diagnostics` is the output of that failed compile. Callers must not
    invoke this when the initial compile succeeded.
    """
    policy = policy or RepairPolicy()
    trace = RepairTrace(final_code=code)
    current = code
    current_diags = diagnostics

    for _ in range(policy.max_iterations):
        prompt = templates.render(
            TemplateId.REPAIR_COMPILE,
            {
                "target_code": current,
                "err_context": truncate_diagnostics(current_diags, policy.diagnostics_cap),
                "target_language": display_name(target_language),
            },
        )
        try:
            response = gateway.complete(gateway.request(prompt))
        except GatewayFailure as exc:
            trace.error = f"{type(exc).__name__}: {exc}"
            break
        trace.request_digests.append(response.request_digest)

        try:
            candidate = extract_code(response.raw_text, target_language)
        except EmptyExtraction:
            # A consumed iteration that produced nothing usable.
            trace.attempts.append(
                RepairAttempt(
                    code_before=current,
                    diagnostics=current_diags,
                    code_after=current,
                    compile_status=CompileStatus.ERROR.value,
                )
            )
            continue

        with harness.prepare(candidate, target_language) as prep:
            result = prep.compile_result
        trace.attempts.append(
            RepairAttempt(
                code_before=current,
                diagnostics=current_diags,
                code_after=candidate,
                compile_status=result.status.value,
            )
        )
        current = candidate
        if result.ok:
            trace.fixed = True
            break
        current_diags = result.diagnostics

    trace.final_code = current
    trace.iterations_used = len(trace.attempts)
    return trace
