"""Line-delimited JSON stdio service around the localizer.

One request object per line in, one response object per line out, in order.
A malformed or invalid request produces a status=error response; nothing a
client sends can take the loop down. The process exits when stdin closes.
"""

from __future__ import annotations

import json
import sys

from .localize import execute

MAX_TIMEOUT_S = 60.0
DEFAULT_TIMEOUT_S = 10.0

MODES = ("run_tests", "localize")


def handle_request(request: dict) -> dict:
    mode = request.get("mode")
    if mode not in MODES:
        return {"status": "error", "stderr": f"unknown mode {mode!r}"}
    code = request.get("code", "")
    if not isinstance(code, str):
        return {"status": "error", "stderr": "code must be a string"}
    if mode == "localize" and not code.strip():
        return {"status": "error", "stderr": "localize needs non-empty code"}
    tests = request.get("tests", "")
    imports = request.get("imports", "")
    if not isinstance(tests, str) or not isinstance(imports, str):
        return {"status": "error", "stderr": "tests and imports must be strings"}
    timeout_s = request.get("timeout_s", DEFAULT_TIMEOUT_S)
    if not isinstance(timeout_s, (int, float)) or isinstance(timeout_s, bool):
        return {"status": "error", "stderr": "timeout_s must be a number"}
    if timeout_s <= 0 or timeout_s > MAX_TIMEOUT_S:
        return {
            "status": "error",
            "stderr": f"timeout_s must be in (0, {MAX_TIMEOUT_S:g}]",
        }
    return execute(mode, code, tests=tests, imports=imports, timeout_s=float(timeout_s))


def handle_line(line: str) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"status": "error", "stderr": f"malformed request line: {exc.msg}"}
    if not isinstance(request, dict):
        return {"status": "error", "stderr": "request must be a JSON object"}
    try:
        response = handle_request(request)
    except Exception as exc:  # the loop survives anything
        response = {"status": "error", "stderr": f"internal failure: {exc!r}"}
    if "id" in request:
        response["id"] = request["id"]
    return response


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        response = handle_line(line)
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()


def main() -> int:
    serve()
    return 0


if __name__ == "__main__":
    sys.exit(main())
