"""Compile and execute single-file programs against stdin/stdout test cases.

Each evaluation owns a throwaway sandbox directory. Runs are bounded by a
wall-clock deadline and (where the runtime tolerates it) an address-space
cap. Verdicts map onto the five-way outcome taxonomy: Success,
CompilationError, TestMismatch, RuntimeError, Timeout.

Two behaviors here are deliberate policy, isolated so they can be swapped:

* ``normalize_output`` defines output-comparison strictness: newlines are
  unified, every line loses trailing whitespace, and the whole payload is
  stripped at both ends. Nothing else is touched.
* The child's stdin pipe is kept open after the test input has been
  written. A program that asks for more input than the test provides
  therefore blocks until the wall deadline and is classified Timeout
  (same bucket as an infinite loop) instead of crashing on EOF. The flip
  side: programs that read until EOF will also hit the deadline, so test
  corpora must read bounded input, and inputs should end with a newline
  so scanner-style numeric reads (scanf, cin >>) can see the end of
  their final token.
"""

from __future__ import annotations

import json
import os
import re
import resource
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import SandboxFailure, SandboxSetupFailure, ToolMissing

if TYPE_CHECKING:
    from .corpus import TestCase

DEFAULT_WALL_DEADLINE = 10.0
DEFAULT_MEMORY_BYTES = 512 * 1024 * 1024
DEFAULT_OUTPUT_CAP = 16 * 1024 * 1024
COMPILE_DEADLINE = 60.0


class Outcome(str, Enum):
    SUCCESS = "success"
    COMPILATION_ERROR = "compilation_error"
    TEST_MISMATCH = "test_mismatch"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"


class CompileStatus(str, Enum):
    OK = "ok"
    ERROR = "error"
    TOOL_MISSING = "tool_missing"


class TestVerdict(str, Enum):
    PASS = "pass"
    MISMATCH = "mismatch"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"


_VERDICT_TO_OUTCOME = {
    TestVerdict.MISMATCH: Outcome.TEST_MISMATCH,
    TestVerdict.RUNTIME_ERROR: Outcome.RUNTIME_ERROR,
    TestVerdict.TIMEOUT: Outcome.TIMEOUT,
}


def normalize_output(text: str) -> str:
    """Unify newlines, trim trailing whitespace per line, strip the ends."""
    unified = text.replace("\r\n", "\n").replace("\r", "\n")
    return "\n".join(line.rstrip() for line in unified.split("\n")).strip()


@dataclass(frozen=True)
class Limits:
    wall_deadline: float = DEFAULT_WALL_DEADLINE
    memory_bytes: int | None = DEFAULT_MEMORY_BYTES
    output_cap: int = DEFAULT_OUTPUT_CAP


@dataclass(frozen=True)
class ToolchainProfile:
    """How to compile, check, and run one subject language.

    compile_cmd is None for interpreted languages; check_cmd, when present,
    is the interpreter's syntax pre-check and stands in for compilation in
    the outcome taxonomy.
    """

    language: str
    display_name: str
    entry_file: str
    run_cmd: tuple[str, ...]
    version_probe: tuple[str, ...]
    compile_cmd: tuple[str, ...] | None = None
    check_cmd: tuple[str, ...] | None = None
    expected_version: str | None = None
    env: dict[str, str] = field(default_factory=dict)
    memory_limit_exempt: bool = False

    @property
    def interpreted(self) -> bool:
        return self.compile_cmd is None


@dataclass
class CompileResult:
    status: CompileStatus
    diagnostics: str = ""
    artifact: str | None = None
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status is CompileStatus.OK


@dataclass
class PerTestResult:
    verdict: TestVerdict
    actual_output: str
    elapsed: float


@dataclass
class TestRunResult:
    per_test: list[PerTestResult]
    overall: Outcome


@dataclass
class ExecResult:
    exit_code: int
    stdout: str
    stderr: str
    timed_out: bool
    elapsed: float


def classify(compile_result: CompileResult, run_result: TestRunResult | None) -> Outcome:
    """Map a compile/run pair onto the five-way taxonomy."""
    if compile_result.status is CompileStatus.TOOL_MISSING:
        raise ToolMissing(compile_result.diagnostics or "toolchain binary not found")
    if compile_result.status is CompileStatus.ERROR:
        return Outcome.COMPILATION_ERROR
    if run_result is None:
        raise ValueError("run result required when compilation succeeded")
    return run_result.overall


def overall_outcome(per_test: Iterable[PerTestResult]) -> Outcome:
    """First failing test in corpus order decides the category."""
    for item in per_test:
        if item.verdict is not TestVerdict.PASS:
            return _VERDICT_TO_OUTCOME[item.verdict]
    return Outcome.SUCCESS


class ToolchainRegistry:
    """Language id -> ToolchainProfile, seeded from the packaged defaults."""

    def __init__(self, profiles: dict[str, ToolchainProfile]):
        self._profiles = dict(profiles)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ToolchainRegistry":
        """Load the default registry, overlaying entries from `path` if given."""
        raw = json.loads(
            resources.files("specbench").joinpath("data/toolchains.json").read_text("utf-8")
        )
        if path is not None:
            raw.update(json.loads(Path(path).read_text(encoding="utf-8")))
        profiles = {lang: _profile_from_dict(lang, spec) for lang, spec in raw.items()}
        return cls(profiles)

    def profile(self, language: str) -> ToolchainProfile:
        try:
            return self._profiles[language]
        except KeyError:
            raise ToolMissing(f"no toolchain profile registered for language '{language}'") from None

    def languages(self) -> list[str]:
        return sorted(self._profiles)

    def __contains__(self, language: str) -> bool:
        return language in self._profiles

    def resolve_binary(self, profile: ToolchainProfile) -> str | None:
        return shutil.which(profile.version_probe[0])

    def resolve_version(self, language: str) -> str | None:
        """First line of the version probe, or None if the tool is absent."""
        profile = self.profile(language)
        if self.resolve_binary(profile) is None:
            return None
        try:
            proc = subprocess.run(
                list(profile.version_probe),
                capture_output=True,
                text=True,
                timeout=15,
            )
        except (OSError, subprocess.TimeoutExpired):
            return None
        # javac -version historically prints to stderr
        text = (proc.stdout or proc.stderr).strip()
        return text.splitlines()[0] if text else None


def _profile_from_dict(language: str, spec: dict) -> ToolchainProfile:
    return ToolchainProfile(
        language=language,
        display_name=spec["display_name"],
        entry_file=spec["entry_file"],
        run_cmd=tuple(spec["run_cmd"]),
        version_probe=tuple(spec["version_probe"]),
        compile_cmd=tuple(spec["compile_cmd"]) if spec.get("compile_cmd") else None,
        check_cmd=tuple(spec["check_cmd"]) if spec.get("check_cmd") else None,
        expected_version=spec.get("expected_version"),
        env=dict(spec.get("env", {})),
        memory_limit_exempt=bool(spec.get("memory_limit_exempt", False)),
    )


_JAVA_PUBLIC_CLASS = re.compile(
    r"\bpublic\s+(?:final\s+|abstract\s+)*class\s+([A-Za-z_$][A-Za-z0-9_$]*)"
)


def prepare_entry(code: str, profile: ToolchainProfile) -> str:
    """Adjust code to the fixed entry-file convention.

    Java binds the file name to the public class, so a translated public
    class is renamed to Main across the (single) file.
    """
    if profile.language == "java":
        match = _JAVA_PUBLIC_CLASS.search(code)
        if match and match.group(1) != "Main":
            code = re.sub(rf"\b{re.escape(match.group(1))}\b", "Main", code)
    return code


def _expand(template: Sequence[str], subs: dict[str, str]) -> list[str]:
    out = []
    for part in template:
        for key, value in subs.items():
            part = part.replace("{" + key + "}", value)
        out.append(part)
    return out


def _set_child_limits(memory_bytes: int | None):
    def preexec():
        if memory_bytes:
            resource.setrlimit(resource.RLIMIT_AS, (memory_bytes, memory_bytes))
        try:
            resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
        except (ValueError, OSError):
            pass

    return preexec


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        try:
            proc.kill()
        except ProcessLookupError:
            pass


def _drain(stream, sink: list[bytes], cap: int) -> None:
    # Keep reading past the cap (discarding) so the child never blocks on
    # a full pipe because of us.
    kept = 0
    while True:
        chunk = stream.read(65536)
        if not chunk:
            return
        if kept < cap:
            sink.append(chunk[: cap - kept])
            kept += len(chunk)


def execute(
    argv: Sequence[str],
    *,
    cwd: str | Path,
    stdin_data: bytes = b"",
    deadline: float,
    memory_bytes: int | None = None,
    output_cap: int = DEFAULT_OUTPUT_CAP,
    env: dict[str, str] | None = None,
    keep_stdin_open: bool = False,
) -> ExecResult:
    """Run one process with a wall deadline, killing its whole group on expiry."""
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            list(argv),
            cwd=str(cwd),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            env=env,
            start_new_session=True,
            preexec_fn=_set_child_limits(memory_bytes),
        )
    except OSError as exc:
        raise SandboxFailure(f"could not execute {argv[0]}: {exc}") from exc

    def feed():
        try:
            if stdin_data:
                proc.stdin.write(stdin_data)
                proc.stdin.flush()
            if not keep_stdin_open:
                proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass

    out_chunks: list[bytes] = []
    err_chunks: list[bytes] = []
    threads = [
        threading.Thread(target=feed, daemon=True),
        threading.Thread(target=_drain, args=(proc.stdout, out_chunks, output_cap), daemon=True),
        threading.Thread(target=_drain, args=(proc.stderr, err_chunks, output_cap), daemon=True),
    ]
    for t in threads:
        t.start()

    timed_out = False
    try:
        proc.wait(timeout=deadline)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill_group(proc)
        proc.wait()
    elapsed = time.monotonic() - start

    for t in threads:
        t.join(timeout=5)
    try:
        proc.stdin.close()
    except (BrokenPipeError, OSError):
        pass

    return ExecResult(
        exit_code=proc.returncode,
        stdout=b"".join(out_chunks).decode("utf-8", errors="replace"),
        stderr=b"".join(err_chunks).decode("utf-8", errors="replace"),
        timed_out=timed_out,
        elapsed=elapsed,
    )


class PreparedProgram:
    """One candidate program written and compiled inside its own sandbox."""

    def __init__(
        self,
        profile: ToolchainProfile,
        workdir: Path,
        compile_result: CompileResult,
        limits: Limits,
        env: dict[str, str],
        cleanup: bool = True,
    ):
        self.profile = profile
        self.workdir = workdir
        self.compile_result = compile_result
        self.limits = limits
        self._env = env
        self._cleanup = cleanup

    def __enter__(self) -> "PreparedProgram":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._cleanup:
            shutil.rmtree(self.workdir, ignore_errors=True)

    def _run_argv(self) -> list[str]:
        subs = {
            "source": str(self.workdir / self.profile.entry_file),
            "artifact": self.compile_result.artifact or "",
            "workdir": str(self.workdir),
        }
        return _expand(self.profile.run_cmd, subs)

    def run(self, input_text: str) -> ExecResult:
        memory = None if self.profile.memory_limit_exempt else self.limits.memory_bytes
        return execute(
            self._run_argv(),
            cwd=self.workdir,
            stdin_data=input_text.encode("utf-8"),
            deadline=self.limits.wall_deadline,
            memory_bytes=memory,
            output_cap=self.limits.output_cap,
            env=self._env,
            keep_stdin_open=True,
        )

    def run_tests(self, tests: Sequence["TestCase"], fail_fast: bool = False) -> TestRunResult:
        per_test: list[PerTestResult] = []
        for test in tests:
            res = self.run(test.input)
            if res.timed_out:
                verdict = TestVerdict.TIMEOUT
            elif res.exit_code != 0:
                verdict = TestVerdict.RUNTIME_ERROR
            elif normalize_output(res.stdout) == normalize_output(test.expected_output):
                verdict = TestVerdict.PASS
            else:
                verdict = TestVerdict.MISMATCH
            per_test.append(PerTestResult(verdict, res.stdout, res.elapsed))
            if fail_fast and verdict is not TestVerdict.PASS:
                break
        return TestRunResult(per_test=per_test, overall=overall_outcome(per_test))


class ExecutionHarness:
    """Sandbox factory plus the compile/run/classify surface."""

    def __init__(
        self,
        registry: ToolchainRegistry | None = None,
        limits: Limits | None = None,
        sandbox_root: str | Path | None = None,
        compile_deadline: float = COMPILE_DEADLINE,
    ):
        self.registry = registry or ToolchainRegistry.load()
        self.limits = limits or Limits()
        self.sandbox_root = Path(sandbox_root) if sandbox_root else None
        self.compile_deadline = compile_deadline
        if self.sandbox_root:
            self.sandbox_root.mkdir(parents=True, exist_ok=True)

    def _make_sandbox(self) -> Path:
        try:
            return Path(
                tempfile.mkdtemp(
                    prefix="bench-",
                    dir=str(self.sandbox_root) if self.sandbox_root else None,
                )
            )
        except OSError as exc:
            raise SandboxSetupFailure(f"could not create sandbox: {exc}") from exc

    def prepare(self, code: str, language: str) -> PreparedProgram:
        """Write code into a fresh sandbox and compile (or syntax-check) it."""
        profile = self.registry.profile(language)
        workdir = self._make_sandbox()
        env = dict(os.environ)
        env.update(
            {k: v.replace("{workdir}", str(workdir)) for k, v in profile.env.items()}
        )

        source_path = workdir / profile.entry_file
        try:
            source_path.write_text(prepare_entry(code, profile), encoding="utf-8")
        except OSError as exc:
            shutil.rmtree(workdir, ignore_errors=True)
            raise SandboxSetupFailure(f"could not write source: {exc}") from exc

        compile_result = self._compile(profile, workdir, source_path, env)
        return PreparedProgram(profile, workdir, compile_result, self.limits, env)

    def _compile(
        self,
        profile: ToolchainProfile,
        workdir: Path,
        source_path: Path,
        env: dict[str, str],
    ) -> CompileResult:
        cmd = profile.compile_cmd or profile.check_cmd
        if cmd is None:
            return CompileResult(status=CompileStatus.OK)
        if shutil.which(cmd[0]) is None:
            return CompileResult(
                status=CompileStatus.TOOL_MISSING,
                diagnostics=f"'{cmd[0]}' not found on PATH",
            )
        artifact = str(workdir / "prog") if profile.compile_cmd else None
        argv = _expand(
            cmd,
            {
                "source": profile.entry_file,  # relative: keeps diagnostics paths stable
                "artifact": artifact or "",
                "workdir": str(workdir),
            },
        )
        res = execute(
            argv,
            cwd=workdir,
            deadline=self.compile_deadline,
            output_cap=DEFAULT_OUTPUT_CAP,
            env=env,
        )
        diagnostics = "\n".join(part for part in (res.stderr, res.stdout) if part).strip("\n")
        if res.timed_out:
            return CompileResult(
                status=CompileStatus.ERROR,
                diagnostics=diagnostics + "\n[compile deadline exceeded]",
                elapsed=res.elapsed,
            )
        if res.exit_code != 0:
            return CompileResult(
                status=CompileStatus.ERROR, diagnostics=diagnostics, elapsed=res.elapsed
            )
        return CompileResult(
            status=CompileStatus.OK,
            diagnostics=diagnostics,
            artifact=artifact,
            elapsed=res.elapsed,
        )

    def evaluate(
        self, code: str, language: str, tests: Sequence["TestCase"]
    ) -> tuple[CompileResult, TestRunResult | None, Outcome]:
        """Compile, run all tests, classify. Sandbox is cleaned up on return."""
        with self.prepare(code, language) as prep:
            if not prep.compile_result.ok:
                return prep.compile_result, None, classify(prep.compile_result, None)
            run_result = prep.run_tests(tests)
            return prep.compile_result, run_result, run_result.overall

    def doctor(self) -> list[tuple[str, str | None, str | None]]:
        """(language, resolved version or None, expected version) per profile."""
        rows = []
        for language in self.registry.languages():
            profile = self.registry.profile(language)
            rows.append(
                (language, self.registry.resolve_version(language), profile.expected_version)
            )
        return rows
