from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mini_responses import REPAIR_RESPONSES, SPEC_RESPONSES, TRANSLATION_RESPONSES

from specbench.corpus import load_manifest
from specbench.gateway import ChatRequest, FixtureStore
from specbench.harness import ExecutionHarness, Limits
from specbench.prompting import TemplateId, TemplateSet, display_name, extract_code
from specbench.repair import DIAGNOSTICS_CAP_BYTES, truncate_diagnostics

DATA_DIR = Path(__file__).parent / "data"
MINI_CORPUS = DATA_DIR / "mini_corpus"

MINI_TARGETS = ("c", "cpp", "python")


def toolchain_available(language: str) -> bool:
    binary = {"c": "gcc", "cpp": "g++", "go": "go", "java": "javac", "python": "python3"}
    return shutil.which(binary[language]) is not None


def require_toolchains(*languages: str):
    missing = [lang for lang in languages if not toolchain_available(lang)]
    if missing:
        pytest.skip(f"toolchain(s) not installed: {', '.join(missing)}")


@pytest.fixture(scope="session")
def templates() -> TemplateSet:
    return TemplateSet.load()


@pytest.fixture
def fast_harness() -> ExecutionHarness:
    return ExecutionHarness(limits=Limits(wall_deadline=2.0))


def build_mini_fixtures(path: Path, templates: TemplateSet) -> FixtureStore:
    """Record every response the replay run over the mini corpus will need.

    The repair-prompt fixture embeds the real compiler diagnostics for the
    broken go_add->c candidate, so this needs gcc.
    """
    store = FixtureStore(path)
    corpus = load_manifest(MINI_CORPUS)
    for sample in corpus.samples:
        spec_text = SPEC_RESPONSES[sample.sample_id]
        spec_prompt = templates.render(
            TemplateId.SPEC_GEN,
            {
                "source_code": sample.source_text,
                "source_language": display_name(sample.language),
            },
        )
        store.append(ChatRequest(spec_prompt), spec_text)
        for target in MINI_TARGETS:
            if target == sample.language:
                continue
            prompt = templates.render(
                TemplateId.TRANSLATE_SPEC_ONLY,
                {
                    "pseudocode_content": spec_text,
                    "source_language": display_name(sample.language),
                    "target_language": display_name(target),
                },
            )
            store.append(ChatRequest(prompt), TRANSLATION_RESPONSES[(sample.sample_id, target)])

    # repair fixture: compile the broken candidate to capture its diagnostics
    harness = ExecutionHarness()
    for (sample_id, target), fixed_response in REPAIR_RESPONSES.items():
        broken = extract_code(TRANSLATION_RESPONSES[(sample_id, target)], target)
        with harness.prepare(broken, target) as prep:
            diagnostics = prep.compile_result.diagnostics
        assert not prep.compile_result.ok, "repair fixture candidate must fail to compile"
        repair_prompt = templates.render(
            TemplateId.REPAIR_COMPILE,
            {
                "target_code": broken,
                "err_context": truncate_diagnostics(diagnostics, DIAGNOSTICS_CAP_BYTES),
                "target_language": display_name(target),
            },
        )
        store.append(ChatRequest(repair_prompt), fixed_response)
    return store


@pytest.fixture(scope="session")
def mini_fixtures(tmp_path_factory) -> Path:
    require_toolchains(*MINI_TARGETS)
    path = tmp_path_factory.mktemp("fixtures") / "fixtures.jsonl"
    build_mini_fixtures(path, TemplateSet.load())
    return path


def write_corpus(root: Path, dataset_id: str, samples: list[dict]) -> Path:
    """Materialize a corpus directory from inline sample definitions.

    Each sample dict: {sample_id, language, source, tests: [(in, out), ...]}
    """
    ext = {"c": "c", "cpp": "cpp", "go": "go", "java": "java", "python": "py"}
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for sample in samples:
        sid, language = sample["sample_id"], sample["language"]
        src = f"{sid}.{ext[language]}"
        (root / src).write_text(sample["source"], encoding="utf-8")
        test_entries = []
        for index, (tin, tout) in enumerate(sample["tests"]):
            in_file, out_file = f"{sid}_{index}.in", f"{sid}_{index}.out"
            (root / in_file).write_bytes(tin.encode("utf-8") if isinstance(tin, str) else tin)
            (root / out_file).write_bytes(tout.encode("utf-8") if isinstance(tout, str) else tout)
            test_entries.append({"in_file": in_file, "out_file": out_file})
        entries.append(
            {"sample_id": sid, "language": language, "source_file": src, "tests": test_entries}
        )
    (root / "manifest.json").write_text(
        json.dumps({"dataset_id": dataset_id, "samples": entries}, indent=2) + "\n",
        encoding="utf-8",
    )
    return root
