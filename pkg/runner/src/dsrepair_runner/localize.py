"""Incremental statement execution with failure localization.

A snippet is executed one top-level statement at a time inside a single
shared namespace that was seeded with the preamble (imports plus any test
fixtures). The first statement that raises marks the boundary between the
last executable and the first unexecutable node; for that statement alone,
call sub-expressions are re-evaluated innermost-first to name the precise
failing call. Code that runs to completion is then judged by its tests:
any failure there is an assertion-kind outcome carrying the repr of the
final value the code produced.
"""

from __future__ import annotations

import ast
import signal
import traceback
from contextlib import contextmanager

VALUE_REPR_LIMIT = 500


class StatementTimeout(Exception):
    pass


@contextmanager
def time_limit(seconds: float):
    """Wall-clock limit via SIGALRM; only usable on the main thread."""

    def handler(signum, frame):
        raise StatementTimeout()

    previous = signal.signal(signal.SIGALRM, handler)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, previous)


def truncate_repr(value) -> str:
    try:
        text = repr(value)
    except BaseException:
        return "<unrepresentable>"
    if len(text) > VALUE_REPR_LIMIT:
        return text[: VALUE_REPR_LIMIT - 1] + "…"
    return text


def split_statements(code: str) -> list[tuple[ast.stmt, str]]:
    module = ast.parse(code)
    return [
        (node, ast.get_source_segment(code, node) or "") for node in module.body
    ]


def postorder_calls(node: ast.AST) -> list[ast.Call]:
    """Call sub-expressions, innermost first (approximates evaluation order)."""
    calls: list[ast.Call] = []

    def visit(current: ast.AST) -> None:
        for child in ast.iter_child_nodes(current):
            visit(child)
        if isinstance(current, ast.Call):
            calls.append(current)

    visit(node)
    return calls


def refine_failing_call(
    node: ast.stmt, code: str, namespace: dict, exc_type: type, timeout_s: float
) -> str | None:
    """Source of the innermost call that reproduces the failure, if any.

    Skipped entirely when the statement contains a walrus assignment, since
    re-evaluation would repeat its side effect.
    """
    if any(isinstance(sub, ast.NamedExpr) for sub in ast.walk(node)):
        return None
    for call in postorder_calls(node):
        source = ast.get_source_segment(code, call)
        if not source:
            continue
        try:
            with time_limit(timeout_s):
                eval(compile(source, "<refine>", "eval"), namespace)
        except StatementTimeout:
            return None
        except exc_type:
            return source
        except BaseException:
            continue
    return None


def _error_response(message: str) -> dict:
    return {
        "status": "error",
        "passed": False,
        "kind": "none",
        "failed_source": "",
        "captured_value_repr": "",
        "stderr": message,
    }


def _capture_final_value(
    captured: tuple[bool, object], failing_node: ast.stmt, namespace: dict
) -> str:
    has_value, value = captured
    if has_value:
        return truncate_repr(value)
    if isinstance(failing_node, ast.Assert) and isinstance(failing_node.test, ast.Compare):
        try:
            left = eval(
                compile(ast.Expression(failing_node.test.left), "<capture>", "eval"),
                namespace,
            )
            return truncate_repr(left)
        except BaseException:
            pass
    return "<unavailable>"


def execute(
    mode: str,
    code: str,
    tests: str = "",
    imports: str = "",
    timeout_s: float = 10.0,
) -> dict:
    """Run one request; returns the wire-format response fields."""
    refine = mode == "localize"
    response: dict = {
        "status": "ok",
        "passed": False,
        "kind": "none",
        "failed_source": "",
        "captured_value_repr": "",
        "stderr": "",
    }
    namespace: dict = {"__name__": "__main__"}

    if imports.strip():
        try:
            with time_limit(timeout_s):
                exec(compile(imports, "<imports>", "exec"), namespace)
        except StatementTimeout:
            return _error_response(f"preamble timed out after {timeout_s}s")
        except BaseException:
            return _error_response("preamble failed:\n" + traceback.format_exc())

    try:
        statements = split_statements(code)
    except SyntaxError:
        return _error_response("snippet does not parse:\n" + traceback.format_exc())

    final_value: tuple[bool, object] = (False, None)
    for index, (node, source) in enumerate(statements):
        is_last = index == len(statements) - 1
        try:
            with time_limit(timeout_s):
                if is_last and isinstance(node, ast.Expr):
                    value = eval(
                        compile(ast.Expression(node.value), "<snippet>", "eval"),
                        namespace,
                    )
                    final_value = (True, value)
                else:
                    exec(
                        compile(ast.Module(body=[node], type_ignores=[]), "<snippet>", "exec"),
                        namespace,
                    )
        except StatementTimeout:
            response["status"] = "timeout"
            if index > 0:
                response["last_executed_index"] = index - 1
            response["first_failed_index"] = index
            response["failed_source"] = source
            response["stderr"] = f"statement timed out after {timeout_s}s"
            return response
        except BaseException as exc:
            response["kind"] = "runtime"
            if index > 0:
                response["last_executed_index"] = index - 1
            response["first_failed_index"] = index
            response["stderr"] = traceback.format_exc()
            refined = (
                refine_failing_call(node, code, namespace, type(exc), timeout_s)
                if refine
                else None
            )
            response["failed_source"] = refined or source
            return response
        if is_last and not final_value[0]:
            target = None
            if isinstance(node, ast.Assign) and node.targets:
                target = node.targets[0]
            elif isinstance(node, (ast.AnnAssign, ast.AugAssign)):
                target = node.target
            if isinstance(target, ast.Name) and target.id in namespace:
                final_value = (True, namespace[target.id])

    if statements:
        response["last_executed_index"] = len(statements) - 1

    try:
        test_statements = split_statements(tests) if tests.strip() else []
    except SyntaxError:
        return _error_response("tests do not parse:\n" + traceback.format_exc())

    for node, source in test_statements:
        try:
            with time_limit(timeout_s):
                exec(
                    compile(ast.Module(body=[node], type_ignores=[]), "<tests>", "exec"),
                    namespace,
                )
        except StatementTimeout:
            response["status"] = "timeout"
            response["failed_source"] = source
            response["stderr"] = f"test statement timed out after {timeout_s}s"
            return response
        except BaseException:
            # the snippet ran to completion; any test failure is assertion-kind
            response["kind"] = "assertion"
            response["failed_source"] = source
            response["captured_value_repr"] = _capture_final_value(
                final_value, node, namespace
            )
            response["stderr"] = traceback.format_exc()
            return response

    response["passed"] = True
    return response
