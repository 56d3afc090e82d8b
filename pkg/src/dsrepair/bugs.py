"""Bug knowledge enrichment: drive the sandbox runner and condense its
execution trace into a report the prompt builder can render.

The runner is a child process speaking line-delimited JSON on stdio; for
tests, a replay handle answers from a recorded transcript so the primary
side never needs a live runner.
"""

from __future__ import annotations

import ast
import json
import re
import subprocess
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import ReplayExhaustedError, RunnerError


@dataclass
class TestSpec:
    """Tests recovered from a task description: setup code plus assertions."""

    __test__ = False  # keep pytest from collecting this as a test class

    fixtures: str = ""
    assertions: list[str] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.assertions


class BugKind(Enum):
    RUNTIME = "runtime"
    ASSERTION = "assertion"
    UNKNOWN = "unknown"


@dataclass
class BugReport:
    kind: BugKind
    last_executed_source: str = ""
    first_failed_source: str = ""
    captured_value_repr: str = ""
    expected_repr: str = ""
    stderr_raw: str = ""


_FENCE_RE = re.compile(r"```(?:\w+)?\n(.*?)```", re.DOTALL)


def extract_tests(description: str) -> TestSpec:
    """Pull assertion lines and their setup out of fenced code blocks.

    Blocks without any assert statement are ignored; inside a block with
    asserts, non-assert lines become fixtures.
    """
    spec = TestSpec()
    fixture_lines: list[str] = []
    for block in _FENCE_RE.findall(description):
        lines = block.splitlines()
        if not any(line.lstrip().startswith("assert") for line in lines):
            continue
        for line in lines:
            if line.lstrip().startswith("assert"):
                spec.assertions.append(line.strip())
            elif line.strip():
                fixture_lines.append(line)
    spec.fixtures = "\n".join(fixture_lines)
    return spec


def tests_for_task(description: str, test_code: str) -> TestSpec:
    """Task-level test selection: a verbatim harness wins over extraction."""
    if test_code.strip():
        return TestSpec(fixtures="", assertions=[test_code])
    return extract_tests(description)


def split_statements(code: str) -> list[str]:
    """Source text of each top-level statement, in order."""
    try:
        tree = ast.parse(code)
    except SyntaxError:
        return []
    segments = []
    for node in tree.body:
        segment = ast.get_source_segment(code, node)
        segments.append(segment if segment is not None else "")
    return segments


def expected_from_assertion(assertion: str) -> str:
    """repr of the right-hand literal of ``assert x == <literal>`` when the
    comparison literal is syntactically evident; empty string otherwise."""
    try:
        tree = ast.parse(assertion.strip())
    except SyntaxError:
        return ""
    for node in ast.walk(tree):
        if not isinstance(node, ast.Assert):
            continue
        test = node.test
        if isinstance(test, ast.Compare) and len(test.ops) == 1 and isinstance(test.ops[0], ast.Eq):
            for side in (test.comparators[0], test.left):
                try:
                    return repr(ast.literal_eval(side))
                except (ValueError, SyntaxError):
                    continue
    return ""


class SubprocessRunner:
    """Launches the runner command once per request (fresh namespace, no
    state bleed between snippets)."""

    def __init__(self, command: list[str], default_timeout_s: float = 10.0):
        self.command = command
        self.default_timeout_s = default_timeout_s

    def request(self, payload: dict) -> dict:
        line = json.dumps(payload, ensure_ascii=False)
        timeout = payload.get("timeout_s", self.default_timeout_s)
        try:
            proc = subprocess.run(
                self.command,
                input=line + "\n",
                capture_output=True,
                text=True,
                timeout=timeout * len(split_statements(payload.get("code", ""))) + 30,
            )
        except FileNotFoundError as exc:
            raise RunnerError(f"runner command not found: {self.command[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise RunnerError("runner process wedged past its budget") from exc
        for out_line in proc.stdout.splitlines():
            out_line = out_line.strip()
            if out_line:
                try:
                    return json.loads(out_line)
                except json.JSONDecodeError:
                    continue
        raise RunnerError(
            f"runner produced no response (exit {proc.returncode}): "
            f"{proc.stderr.strip()[:500]}"
        )


class ReplayRunner:
    """Answers requests from a transcript of recorded request/response pairs.

    Keyed by request content (mode, code, tests, imports) so replay is
    order-independent and safe under a worker pool.
    """

    def __init__(self, transcript_path: str | Path):
        self._responses: dict[tuple, dict] = {}
        for line_no, line in enumerate(
            Path(transcript_path).read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            entry = json.loads(line)
            request, response = entry["request"], entry["response"]
            self._responses[self._key(request)] = response

    @staticmethod
    def _key(request: dict) -> tuple:
        return (
            request.get("mode", ""),
            request.get("code", ""),
            request.get("tests", ""),
            request.get("imports", ""),
        )

    def request(self, payload: dict) -> dict:
        key = self._key(payload)
        if key not in self._responses:
            raise ReplayExhaustedError(
                f"transcript holds no response for mode={payload.get('mode')!r} "
                f"code starting {payload.get('code', '')[:60]!r}"
            )
        return self._responses[key]


def localize(runner, code: str, tests: TestSpec, imports: str, timeout_s: float = 10.0) -> dict:
    preamble = "\n".join(part for part in (imports, tests.fixtures) if part.strip())
    return runner.request(
        {
            "mode": "localize",
            "code": code,
            "tests": "\n".join(tests.assertions),
            "imports": preamble,
            "timeout_s": timeout_s,
        }
    )


def run_tests(runner, code: str, tests: TestSpec, imports: str, timeout_s: float = 10.0) -> dict:
    preamble = "\n".join(part for part in (imports, tests.fixtures) if part.strip())
    return runner.request(
        {
            "mode": "run_tests",
            "code": code,
            "tests": "\n".join(tests.assertions),
            "imports": preamble,
            "timeout_s": timeout_s,
        }
    )


def enrich(
    code: str,
    tests: TestSpec,
    runner,
    imports: str = "",
    timeout_s: float = 10.0,
) -> BugReport | None:
    """Run localization and map the trace onto a BugReport.

    Returns None when the code passes its tests (nothing to repair). Every
    runner response shape maps to exactly one report shape; a crashed or
    unreachable runner degrades to kind=unknown with stderr preserved.
    """
    try:
        response = localize(runner, code, tests, imports, timeout_s)
    except (RunnerError, ReplayExhaustedError) as exc:
        return BugReport(kind=BugKind.UNKNOWN, stderr_raw=str(exc))

    status = response.get("status", "error")
    statements = split_statements(code)

    def source_at(index) -> str:
        if index is None or not isinstance(index, int):
            return ""
        if 0 <= index < len(statements):
            return statements[index]
        return ""

    if status == "timeout":
        failed_index = response.get("first_failed_index")
        note = response.get("stderr", "") or f"statement timed out after {timeout_s}s"
        return BugReport(
            kind=BugKind.RUNTIME,
            last_executed_source=source_at(
                failed_index - 1 if isinstance(failed_index, int) else None
            ),
            first_failed_source=response.get("failed_source") or source_at(failed_index),
            stderr_raw=note,
        )
    if status == "error":
        return BugReport(kind=BugKind.UNKNOWN, stderr_raw=response.get("stderr", ""))

    # status == "ok"
    kind = response.get("kind", "none")
    if response.get("passed") and not tests.empty:
        return None
    if kind == "runtime":
        return BugReport(
            kind=BugKind.RUNTIME,
            last_executed_source=source_at(response.get("last_executed_index")),
            first_failed_source=response.get("failed_source")
            or source_at(response.get("first_failed_index")),
            captured_value_repr=response.get("captured_value_repr", "") or "",
            stderr_raw=response.get("stderr", ""),
        )
    if kind == "assertion":
        failing = response.get("failed_source", "") or ""
        return BugReport(
            kind=BugKind.ASSERTION,
            last_executed_source=source_at(response.get("last_executed_index")),
            first_failed_source=failing,
            captured_value_repr=response.get("captured_value_repr", "") or "",
            expected_repr=expected_from_assertion(failing),
            stderr_raw=response.get("stderr", ""),
        )
    # Fully executed, no tests to judge against: stderr is all we know.
    return BugReport(kind=BugKind.UNKNOWN, stderr_raw=response.get("stderr", ""))
