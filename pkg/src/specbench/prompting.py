"""Prompt templates and response post-processing.

Templates live as editable text files under ``templates/`` with ``{name}``
placeholders, so the exact wording can be diffed and overridden
(``--template-dir``). Rendering is a pure substitution of the known
placeholder names only; since bound values are code and routinely contain
braces, no general format-string machinery is used.

``extract_code`` is the documented best-effort policy for stripping model
chatter: fenced blocks win when present (multiple blocks are concatenated
in order), everything from the "End of Code" sentinel comment onward is
dropped, and bare responses are returned trimmed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import EmptyExtraction, UnboundPlaceholder

PLACEHOLDERS = (
    "source_code",
    "source_language",
    "target_language",
    "pseudocode_content",
    "target_code",
    "err_context",
)

DISPLAY_NAMES = {"c": "C", "cpp": "C++", "go": "Go", "java": "Java", "python": "Python"}

END_OF_CODE_SENTINEL = "End of Code"


class TemplateId(str, Enum):
    SPEC_GEN = "spec_gen"
    TRANSLATE_SPEC_ONLY = "translate_spec_only"
    TRANSLATE_SPEC_PLUS_SOURCE = "translate_spec_plus_source"
    TRANSLATE_SOURCE_ONLY = "translate_source_only"
    REPAIR_COMPILE = "repair_compile"


@dataclass(frozen=True)
class Specification:
    """Model-generated natural-language pseudocode for one sample.

    The text is stored verbatim as returned, no reflow.
    """

    sample_id: str
    text: str
    source_language: str
    request_digest: str


def display_name(language: str) -> str:
    return DISPLAY_NAMES.get(language, language)


_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


class TemplateSet:
    """The prompt templates, loaded from packaged data or a directory."""

    def __init__(self, bodies: dict[TemplateId, str]):
        self._bodies = bodies

    @classmethod
    def load(cls, template_dir: str | Path | None = None) -> "TemplateSet":
        bodies = {}
        for template_id in TemplateId:
            name = f"{template_id.value}.txt"
            if template_dir is not None:
                text = (Path(template_dir) / name).read_text(encoding="utf-8")
            else:
                text = (
                    resources.files("specbench").joinpath(f"templates/{name}").read_text("utf-8")
                )
            bodies[template_id] = text.rstrip("\n")
        return cls(bodies)

    def body(self, template_id: TemplateId) -> str:
        return self._bodies[template_id]

    def required_placeholders(self, template_id: TemplateId) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self._bodies[template_id]))

    def render(self, template_id: TemplateId, bindings: dict[str, str]) -> str:
        """Substitute bound values into the template, verbatim.

        Raises UnboundPlaceholder naming the first missing key.
        """
        body = self._bodies[template_id]
        required = sorted(self.required_placeholders(template_id))
        for name in required:
            if name not in bindings:
                raise UnboundPlaceholder(name)

        def substitute(match: re.Match) -> str:
            return bindings[match.group(1)]

        return _PLACEHOLDER_RE.sub(substitute, body)


_FENCE_RE = re.compile(r"^\s*```")
# Tolerant of comment syntax across targets (//, #, --, /* */), strict on
# the sentinel's own casing.
_SENTINEL_RE = re.compile(
    r'^\s*(?://|#|--|/\*)?\s*\\?"?End of Code\\?"?\.?\s*(?:\*/)?\s*$'
)


def _cut_at_sentinel(lines: list[str]) -> list[str]:
    for index, line in enumerate(lines):
        if _SENTINEL_RE.match(line):
            return lines[:index]
    return lines


def extract_code(raw_text: str, target_language: str | None = None) -> str:
    """Pull the code body out of a model response.

    Fenced blocks are concatenated in order and chatter outside them is
    dropped; with no fence, the text is trimmed as-is. Everything from the
    "End of Code" sentinel comment onward is removed either way. Raises
    EmptyExtraction when nothing remains. Idempotent.
    """
    if not raw_text:
        raise EmptyExtraction("empty model response")

    lines = raw_text.split("\n")
    fenced_blocks: list[list[str]] = []
    current: list[str] | None = None
    for line in lines:
        if _FENCE_RE.match(line):
            if current is None:
                current = []
            else:
                fenced_blocks.append(current)
                current = None
            continue
        if current is not None:
            current.append(line)
    if current:  # unterminated fence: take what's there
        fenced_blocks.append(current)

    if fenced_blocks:
        body_lines: list[str] = []
        for block in fenced_blocks:
            body_lines.extend(block)
    else:
        body_lines = lines

    body_lines = _cut_at_sentinel(body_lines)
    body = "\n".join(body_lines).strip()
    if not body:
        raise EmptyExtraction("nothing left after stripping fences and sentinel")
    return body
