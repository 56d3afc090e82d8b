"""Assemble structured repair prompts.

The main mode lays out seven fixed sections; ablation modes drop the API
Knowledge and/or Bug Knowledge sections and change nothing else, so a
sectionwise diff against the full prompt is empty outside the dropped parts.
Baseline modes reuse the same section machinery with their own layouts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .bugs import BugKind, BugReport, TestSpec
from .errors import PromptBuildError
from .retrieval import ApiKnowledge, RichnessLevel
from .templates import render


class PromptMode(Enum):
    DSREPAIR = "dsrepair"
    DSREPAIR_WO_API = "dsrepair_wo_api"
    DSREPAIR_WO_BUG = "dsrepair_wo_bug"
    DSREPAIR_WO_API_BUG = "dsrepair_wo_api_bug"
    SELF_DEBUGGING_S = "self_debugging_s"
    SELF_DEBUGGING_E = "self_debugging_e"
    CHAT_REPAIR = "chat_repair"
    SELF_REPAIR = "self_repair"


TWO_STAGE_MODES = frozenset({PromptMode.SELF_DEBUGGING_E, PromptMode.SELF_REPAIR})

# Section headers, fixed per mode.
PROBLEM = "Problem Description"
CODE = "Incorrect Code"
ERROR = "Error Message"
API = "API Knowledge"
BUG = "Bug Knowledge"
FACT = "Fact Checking"
FORMAT = "Response Format"
FEEDBACK = "Feedback"
CODE_EXPLANATION = "Code Explanation"
FAILURE_EXPLANATION = "Failure Explanation"
INSTRUCTION = "Instruction"

_SECTION_LAYOUT: dict[PromptMode, tuple[str, ...]] = {
    PromptMode.DSREPAIR: (PROBLEM, CODE, ERROR, API, BUG, FACT, FORMAT),
    PromptMode.DSREPAIR_WO_API: (PROBLEM, CODE, ERROR, BUG, FACT, FORMAT),
    PromptMode.DSREPAIR_WO_BUG: (PROBLEM, CODE, ERROR, API, FACT, FORMAT),
    PromptMode.DSREPAIR_WO_API_BUG: (PROBLEM, CODE, ERROR, FACT, FORMAT),
    PromptMode.CHAT_REPAIR: (PROBLEM, CODE, ERROR, FORMAT),
    PromptMode.SELF_DEBUGGING_S: (PROBLEM, CODE, FEEDBACK, FORMAT),
    PromptMode.SELF_DEBUGGING_E: (PROBLEM, CODE, CODE_EXPLANATION, FORMAT),
    PromptMode.SELF_REPAIR: (PROBLEM, CODE, ERROR, FAILURE_EXPLANATION, FORMAT),
}


@dataclass
class RepairPrompt:
    sections: list[tuple[str, str]]
    mode: PromptMode
    richness: RichnessLevel
    rendered: str


_WARNING_HEADER_RE = re.compile(r"^\s*\S+:\d+:\s*\w*Warning\b")
_FRAME_RE = re.compile(r'^\s*File "([^"]*)", line \d+')
_POSIX_PATH_RE = re.compile(r"(?<![\w.])/(?:[\w.+\-]+/)*[\w.+\-]+")
_WIN_PATH_RE = re.compile(r"\b[A-Za-z]:\\(?:[^\\/\s\"']+\\)*[^\\/\s\"']+")


def _is_warning_header(line: str) -> bool:
    head = line.split(":", 1)[0].strip()
    if head.endswith("Warning"):
        return True
    return bool(_WARNING_HEADER_RE.match(line))


def _strip_warnings(lines: list[str]) -> list[str]:
    kept = []
    i = 0
    while i < len(lines):
        if _is_warning_header(lines[i]):
            i += 1
            while i < len(lines) and lines[i].strip() and lines[i][:1] in (" ", "\t"):
                i += 1
            continue
        kept.append(lines[i])
        i += 1
    return kept


def _collapse_external_frames(lines: list[str]) -> list[str]:
    """Keep traceback frames from the user snippet (angle-bracket filenames);
    each run of foreign frames becomes one ellipsis line."""

    def is_external_frame(idx: int) -> bool:
        m = _FRAME_RE.match(lines[idx])
        return bool(m) and not m.group(1).startswith("<")

    def eat_frame(idx: int) -> int:
        idx += 1
        while (
            idx < len(lines)
            and not _FRAME_RE.match(lines[idx])
            and lines[idx].strip()
            and lines[idx][:1] in (" ", "\t")
        ):
            idx += 1
        return idx

    kept: list[str] = []
    i = 0
    while i < len(lines):
        if is_external_frame(i):
            while i < len(lines) and is_external_frame(i):
                i = eat_frame(i)
            kept.append("  ...")
        else:
            kept.append(lines[i])
            i += 1
    return kept


def _shorten_paths(text: str) -> str:
    text = _POSIX_PATH_RE.sub(lambda m: m.group(0).rsplit("/", 1)[-1], text)
    return _WIN_PATH_RE.sub(lambda m: m.group(0).rsplit("\\", 1)[-1], text)


def clean_stderr(raw: str) -> str:
    """Drop warning blocks, collapse foreign traceback frames, and replace
    absolute paths by their final component. Whitespace-only results are
    normalized to the empty string."""
    lines = _strip_warnings(raw.splitlines())
    lines = _collapse_external_frames(lines)
    cleaned = _shorten_paths("\n".join(lines)).strip("\n")
    return "" if not cleaned.strip() else cleaned


def _code_block(code: str) -> str:
    return f"```python\n{code.rstrip()}\n```"


def _tests_text(tests: TestSpec | None) -> str:
    if tests is None or (not tests.fixtures and not tests.assertions):
        return "(none)"
    parts = []
    if tests.fixtures:
        parts.append(tests.fixtures)
    parts.extend(tests.assertions)
    return "\n".join(parts)


def _bug_body(report: BugReport, tests: TestSpec | None) -> str:
    tests_text = _tests_text(tests)
    if report.kind is BugKind.RUNTIME:
        return render(
            "bug_runtime",
            tests=tests_text,
            last_executed=report.last_executed_source or "(none)",
            first_failed=report.first_failed_source or "(unknown)",
        ).rstrip("\n")
    if report.kind is BugKind.ASSERTION:
        return render(
            "bug_assertion",
            tests=tests_text,
            assertion=report.first_failed_source or "(unknown)",
            captured=report.captured_value_repr or "(unavailable)",
            expected=report.expected_repr or "(not stated in the tests)",
        ).rstrip("\n")
    return render("bug_unknown", tests=tests_text).rstrip("\n")


def _require(value, name: str, section: str):
    if value is None:
        raise PromptBuildError(f"mode requires {name}", section=section)
    return value


def build(
    description: str,
    buggy_code: str,
    stderr: str | None = None,
    api_knowledge: ApiKnowledge | None = None,
    bug_report: BugReport | None = None,
    mode: PromptMode = PromptMode.DSREPAIR,
    richness: RichnessLevel = RichnessLevel.EXPRESSION_ONLY,
    tests: TestSpec | None = None,
    explanation: str | None = None,
) -> RepairPrompt:
    """Render the repair prompt for a mode.

    Two-stage modes get the model's own explanation through ``explanation``
    (see :func:`build_explanation_request` for stage one).
    """
    if description is None:
        raise PromptBuildError("mode requires a problem description", section=PROBLEM)
    if buggy_code is None:
        raise PromptBuildError("mode requires the incorrect code", section=CODE)

    bodies: dict[str, str] = {
        PROBLEM: description.strip(),
        CODE: _code_block(buggy_code),
        FACT: render("fact_checking").rstrip("\n"),
        FORMAT: render("response_format").rstrip("\n"),
        FEEDBACK: render("feedback_simple").rstrip("\n"),
    }
    layout = _SECTION_LAYOUT[mode]
    if ERROR in layout:
        cleaned = clean_stderr(_require(stderr, "stderr", ERROR))
        bodies[ERROR] = cleaned or "(no error output)"
    if API in layout:
        knowledge = _require(api_knowledge, "api_knowledge", API)
        bodies[API] = knowledge.rendered() or "(no API knowledge retrieved)"
    if BUG in layout:
        report = _require(bug_report, "bug_report", BUG)
        bodies[BUG] = _bug_body(report, tests)
    if CODE_EXPLANATION in layout:
        bodies[CODE_EXPLANATION] = _require(
            explanation, "the stage-one explanation", CODE_EXPLANATION
        ).strip()
    if FAILURE_EXPLANATION in layout:
        bodies[FAILURE_EXPLANATION] = _require(
            explanation, "the stage-one explanation", FAILURE_EXPLANATION
        ).strip()

    sections = [(header, bodies[header]) for header in layout]
    return RepairPrompt(
        sections=sections,
        mode=mode,
        richness=richness,
        rendered=render_sections(sections),
    )


def build_explanation_request(
    description: str,
    buggy_code: str,
    stderr: str | None = None,
    mode: PromptMode = PromptMode.SELF_REPAIR,
) -> RepairPrompt:
    """Stage one of the two-stage baselines: ask for an explanation."""
    if mode not in TWO_STAGE_MODES:
        raise PromptBuildError(f"{mode.value} is not a two-stage mode")
    sections = [(PROBLEM, description.strip()), (CODE, _code_block(buggy_code))]
    if mode is PromptMode.SELF_REPAIR:
        cleaned = clean_stderr(_require(stderr, "stderr", ERROR))
        sections.append((ERROR, cleaned or "(no error output)"))
        sections.append((INSTRUCTION, render("explain_failure_request").rstrip("\n")))
    else:
        sections.append((INSTRUCTION, render("explain_code_request").rstrip("\n")))
    return RepairPrompt(
        sections=sections,
        mode=mode,
        richness=RichnessLevel.EXPRESSION_ONLY,
        rendered=render_sections(sections),
    )


def render_sections(sections: list[tuple[str, str]]) -> str:
    blocks = [f"## {header}\n{body}" for header, body in sections]
    return "\n\n".join(blocks) + "\n"


def split_sections(rendered: str) -> list[tuple[str, str]]:
    """Inverse of render_sections for sectionwise diffing in tests."""
    sections = []
    header = None
    body_lines: list[str] = []
    for line in rendered.splitlines():
        if line.startswith("## "):
            if header is not None:
                sections.append((header, "\n".join(body_lines).strip("\n")))
            header = line[3:]
            body_lines = []
        else:
            body_lines.append(line)
    if header is not None:
        sections.append((header, "\n".join(body_lines).strip("\n")))
    return sections
