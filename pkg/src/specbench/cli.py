"""Single command-line entry point.

Subcommands: corpus validate, doctor, run, report, quality, gateway ping.
Any package error surfaces as one machine-parsable line on stderr
(`error: <Kind>: <message>`) with a nonzero exit. `--config FILE` supplies
defaults for `run`; explicit flags win. Every run writes a
run_manifest.json capturing config, resolved toolchain versions, and the
fixture digest so results are attributable and reproducible.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click

from . import corpus as corpus_mod
from .errors import BenchError
from .gateway import (
    DEFAULT_MAX_OUTPUT,
    DEFAULT_MODEL_ID,
    DEFAULT_TEMPERATURE,
    ChatRequest,
    FixtureStore,
    Gateway,
    LiveBackend,
    ReplayBackend,
    ScriptedBackend,
    fixture_key,
)
from .harness import DEFAULT_WALL_DEADLINE, ExecutionHarness, Limits, ToolchainRegistry
from .metrics import PassRateMatrix, emit_report
from .pipeline import Approach, read_results, run_experiment, write_results
from .prompting import TemplateSet
from .quality import (
    build_quality_cells,
    distribution_csv,
    distribution_rows,
    emit_code_tree,
    ingest_issues,
    quality_csv,
    top_messages,
)
from .repair import DEFAULT_MAX_ITERATIONS, RepairPolicy

SCRIPTED_CLI_RESPONSE = "// scripted backend placeholder response\n// End of Code"


@dataclass
class RunConfig:
    """Everything `bench run` needs; serializable and round-trippable."""

    corpus_root: str = ""
    approaches: list[str] = field(default_factory=lambda: ["spec"])
    targets: list[str] = field(default_factory=list)
    backend: str = "replay"
    fixtures: str | None = None
    record: bool = False
    out: str = "results.jsonl"
    report: str | None = None
    max_repair_iters: int = DEFAULT_MAX_ITERATIONS
    no_repair: bool = False
    deadline: float = DEFAULT_WALL_DEADLINE
    temperature: float = DEFAULT_TEMPERATURE
    model_id: str = DEFAULT_MODEL_ID
    max_output: int = DEFAULT_MAX_OUTPUT
    jobs: int = 0  # 0 -> logical cores
    template_dir: str | None = None
    toolchains: str | None = None
    emit_code: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise BenchError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**known)

    @property
    def report_path(self) -> str:
        return self.report or str(Path(self.out).with_name("report.md"))

    @property
    def effective_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)


def build_gateway(config: RunConfig) -> Gateway:
    defaults = {
        "temperature": config.temperature,
        "model_id": config.model_id,
        "max_output": config.max_output,
    }
    if config.backend == "replay":
        if not config.fixtures:
            raise BenchError("replay backend requires --fixtures")
        return Gateway(ReplayBackend(FixtureStore(config.fixtures)), defaults=defaults)
    if config.backend == "scripted":
        return Gateway(
            ScriptedBackend(script=lambda request: SCRIPTED_CLI_RESPONSE), defaults=defaults
        )
    if config.backend == "live":
        store = None
        if config.record:
            if not config.fixtures:
                raise BenchError("--record requires --fixtures")
            store = FixtureStore(config.fixtures)
        return Gateway(LiveBackend(), record_store=store, defaults=defaults)
    raise BenchError(f"unknown backend '{config.backend}'")


@click.group()
def bench():
    """Specification-driven code translation benchmark."""


# --- corpus -----------------------------------------------------------------


@bench.group("corpus")
def corpus_group():
    """Corpus loading and validation."""


@corpus_group.command("validate")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.option("--repair", "do_repair", is_flag=True, help="Apply the repair rules.")
@click.option("--write", "do_write", is_flag=True, help="Write the repaired corpus back.")
@click.option("--deadline", type=float, default=DEFAULT_WALL_DEADLINE, show_default=True)
@click.option("--toolchains", type=click.Path(exists=True, dir_okay=False), default=None)
def corpus_validate(root, do_repair, do_write, deadline, toolchains):
    """Run every sample's original program against its own tests."""
    loaded = corpus_mod.load_manifest(root)
    harness = ExecutionHarness(
        ToolchainRegistry.load(toolchains), Limits(wall_deadline=deadline)
    )
    reports = [corpus_mod.validate_sample(sample, harness) for sample in loaded.samples]
    for sample, report in zip(loaded.samples, reports):
        if not report.source_compiled:
            status = "source uncompilable"
        elif any(t.verdict is corpus_mod.ValidationVerdict.MISMATCH for t in report.tests):
            status = "no valid test case"
        elif any(
            t.verdict is corpus_mod.ValidationVerdict.PREFIX_REPAIRABLE for t in report.tests
        ):
            status = "prefix-repairable"
        else:
            status = "ok"
        click.echo(f"{sample.sample_id}: {status}")

    if do_repair:
        repaired = corpus_mod.repair_corpus(loaded, reports)
        click.echo(
            f"repaired corpus: {len(repaired.samples)} samples kept, "
            f"{len(repaired.excluded) - len(loaded.excluded)} newly excluded"
        )
        if do_write:
            corpus_mod.save_corpus(repaired, root)
            click.echo(f"written to {root}")
    elif do_write:
        raise click.UsageError("--write requires --repair")


# --- doctor -----------------------------------------------------------------


@bench.command()
@click.option("--toolchains", type=click.Path(exists=True, dir_okay=False), default=None)
def doctor(toolchains):
    """Print resolved toolchain versions; nonzero exit if any are missing."""
    harness = ExecutionHarness(ToolchainRegistry.load(toolchains))
    missing = 0
    for language, resolved, expected in harness.doctor():
        suffix = f" [expected: {expected}]" if expected else ""
        if resolved is None:
            missing += 1
            click.echo(f"{language}: MISSING{suffix}")
        else:
            click.echo(f"{language}: {resolved}{suffix}")
    if missing:
        raise SystemExit(1)


# --- run ----------------------------------------------------------------------


def _merged_config(ctx: click.Context, params: dict) -> RunConfig:
    """Config-file values are defaults; flags the user typed win."""
    config_path = params.pop("config")
    base = RunConfig()
    if config_path:
        base = RunConfig.from_dict(json.loads(Path(config_path).read_text(encoding="utf-8")))
    for name, value in params.items():
        source = ctx.get_parameter_source(name)
        if config_path and source == click.core.ParameterSource.DEFAULT:
            continue  # keep the config-file value
        setattr(base, name, value)
    return base


@bench.command()
@click.option("--corpus", "corpus_root", type=click.Path(exists=True, file_okay=False), required=False)
@click.option(
    "--approach",
    "approaches",
    multiple=True,
    type=click.Choice([a.value for a in Approach]),
    default=("spec",),
    show_default=True,
)
@click.option("--targets", default="", help="Comma-separated target language ids.")
@click.option(
    "--backend",
    type=click.Choice(["live", "replay", "scripted"]),
    default="replay",
    show_default=True,
)
@click.option("--fixtures", type=click.Path(), default=None)
@click.option("--record", is_flag=True, help="Append live responses to the fixture log.")
@click.option("--out", default="results.jsonl", show_default=True)
@click.option("--report", default=None, help="Report path (default: report.md beside --out).")
@click.option("--max-repair-iters", type=int, default=DEFAULT_MAX_ITERATIONS, show_default=True)
@click.option("--no-repair", is_flag=True)
@click.option("--deadline", type=float, default=DEFAULT_WALL_DEADLINE, show_default=True)
@click.option("--temperature", type=float, default=DEFAULT_TEMPERATURE, show_default=True)
@click.option("--model-id", default=DEFAULT_MODEL_ID, show_default=True)
@click.option("--max-output", type=int, default=DEFAULT_MAX_OUTPUT, show_default=True)
@click.option("--jobs", type=int, default=0, help="Worker count (0 = logical cores).")
@click.option("--template-dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--toolchains", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--emit-code", type=click.Path(), default=None, help="Write translated code tree.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_context
def run(ctx, **params):
    """Translate, repair, test, and report over a corpus."""
    # normalize CLI-shaped params into RunConfig fields
    params["approaches"] = list(params["approaches"]) or ["spec"]
    params["targets"] = [t.strip() for t in params["targets"].split(",") if t.strip()]
    config = _merged_config(ctx, params)
    if not config.corpus_root:
        raise click.UsageError("--corpus is required (flag or config file)")
    if not config.targets:
        raise click.UsageError("--targets is required (flag or config file)")

    registry = ToolchainRegistry.load(config.toolchains)
    harness = ExecutionHarness(registry, Limits(wall_deadline=config.deadline))
    templates = TemplateSet.load(config.template_dir)
    loaded = corpus_mod.load_manifest(config.corpus_root)
    gateway = build_gateway(config)
    policy = RepairPolicy(max_iterations=config.max_repair_iters)

    attempts = run_experiment(
        loaded,
        [Approach(a) for a in config.approaches],
        config.targets,
        gateway,
        harness,
        templates,
        policy=policy,
        no_repair=config.no_repair,
        jobs=config.effective_jobs,
    )
    write_results(attempts, config.out)
    records = [a.to_record() for a in attempts]

    matrix = PassRateMatrix.from_records(records)
    emit_report(matrix, "markdown", config.report_path)

    if config.emit_code:
        emit_code_tree(records, config.emit_code)

    _write_run_manifest(config, harness)
    click.echo(
        f"{len(attempts)} attempts -> {config.out}; report: {config.report_path}"
    )


def _write_run_manifest(config: RunConfig, harness: ExecutionHarness) -> None:
    fixtures_digest = None
    if config.fixtures and Path(config.fixtures).exists():
        fixtures_digest = FixtureStore(config.fixtures).digest_of_file()
    manifest = {
        "config": config.to_dict(),
        "toolchain_versions": {
            language: resolved for language, resolved, _ in harness.doctor()
        },
        "fixtures_digest": fixtures_digest,
    }
    path = Path(config.out).with_name("run_manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- report -------------------------------------------------------------------


@bench.command()
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option(
    "--format",
    "fmt",
    type=click.Choice(["json", "csv", "markdown"]),
    default="markdown",
    show_default=True,
)
@click.option("--out", required=True)
def report(in_path, fmt, out):
    """Build the pass-rate report from a results.jsonl file."""
    matrix = PassRateMatrix.from_records(read_results(in_path))
    emit_report(matrix, fmt, out)
    click.echo(f"report written to {out}")


# --- quality --------------------------------------------------------------------


@bench.command("quality")
@click.option("--issues", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--compiled", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", required=True)
@click.option("--distribution", default=None, help="Also write per-file density CSV.")
@click.option("--top", type=int, default=10, show_default=True)
def quality_cmd(issues, compiled, out, distribution, top):
    """Severity-filtered issue densities over compiled translations."""
    records = read_results(compiled)
    from .quality import compiled_file_map

    compiled_files = set(compiled_file_map(records))
    parsed = ingest_issues(issues, compiled_files=compiled_files)
    cells = build_quality_cells(records, parsed)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(quality_csv(cells), encoding="utf-8")
    click.echo(f"quality cells written to {out}")
    if distribution:
        Path(distribution).write_text(
            distribution_csv(distribution_rows(records, parsed)), encoding="utf-8"
        )
        click.echo(f"density distribution written to {distribution}")
    for message, share in top_messages(parsed, top):
        click.echo(f"{share * 100:.2f}%  {message}")


# --- gateway --------------------------------------------------------------------


@bench.group("gateway")
def gateway_group():
    """Model gateway utilities."""


@gateway_group.command("ping")
@click.option(
    "--backend",
    type=click.Choice(["live", "replay", "scripted"]),
    default="scripted",
    show_default=True,
)
@click.option("--fixtures", type=click.Path(), default=None)
@click.option("--record", is_flag=True)
def gateway_ping(backend, fixtures, record):
    """Check that the selected backend is usable."""
    config = RunConfig(backend=backend, fixtures=fixtures, record=record)
    gw = build_gateway(config)
    if backend == "replay":
        store = FixtureStore(fixtures)
        click.echo(f"replay: {len(store)} fixture entries in {fixtures}")
        return
    request = ChatRequest(prompt_text="ping", max_output=16)
    response = gw.complete(request)
    click.echo(f"{backend}: ok (digest {fixture_key(request)[:12]}, {len(response.raw_text)} chars)")


def main(argv: list[str] | None = None) -> int:
    try:
        bench.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: UsageError: {exc.format_message()}", err=True)
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except SystemExit as exc:
        return int(exc.code or 0)
    except BenchError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 1
    except click.Abort:
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
