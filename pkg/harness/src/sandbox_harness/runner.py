"""Candidate execution: stdin scripts and entry-point calls with coverage.

Every job runs in a fresh module namespace with swapped stdio. The watchdog
checks the deadline on trace events, so pure-Python loops hit TIMEOUT on
their own; blocking C calls are left to the client's wall-clock kill. A
job's outcome is always encoded in the reply, never in harness termination.
"""

from __future__ import annotations

import io
import json
import sys
import time
import traceback

STATUS_OK = "OK"
STATUS_CRASH = "CRASH"
STATUS_TIMEOUT = "TIMEOUT"

MODE_STDIN = "STDIN"
MODE_CALL = "CALL"

_JOB_FILE = "<candidate>"


class _WatchdogTimeout(BaseException):
    # BaseException: a candidate's `except Exception` must not swallow it.
    pass


class _EntryPointError(Exception):
    pass


def render_value(value) -> str:
    """Canonical return-value text: JSON with sorted keys, repr as fallback."""
    try:
        return json.dumps(value, ensure_ascii=False, sort_keys=True)
    except (TypeError, ValueError):
        return repr(value)


def _resolve_entry_point(namespace: dict, entry_point: str | None):
    """A plain function, Type.method, or a method found on any class the
    candidate defined (the class is instantiated with no arguments)."""
    if not entry_point:
        raise _EntryPointError("EntryPointNotFound: CALL job without entry_point")
    if "." in entry_point:
        type_name, _, method_name = entry_point.partition(".")
        cls = namespace.get(type_name)
        if isinstance(cls, type):
            method = getattr(cls(), method_name, None)
            if callable(method):
                return method
    direct = namespace.get(entry_point)
    if callable(direct):
        return direct
    for value in namespace.values():
        if isinstance(value, type) and getattr(value, "__module__", None) == "__main__":
            method = getattr(value(), entry_point, None)
            if callable(method):
                return method
    raise _EntryPointError(f"EntryPointNotFound: {entry_point!r} not resolvable")


def _crash_text(exc: BaseException) -> str:
    parts = [f"{type(exc).__name__}: {exc}"]
    candidate_frames = [
        f"  line {frame.lineno}" + (f": {frame.line}" if frame.line else "")
        for frame in traceback.extract_tb(exc.__traceback__)
        if frame.filename == _JOB_FILE
    ]
    parts.extend(candidate_frames[-3:])
    return "\n".join(parts)


def _execute(
    mode: str,
    source_code: str,
    entry_point: str | None,
    stdin_text: str,
    call_args: list,
    timeout_ms: int,
    collect_coverage: bool,
) -> dict:
    start = time.monotonic()
    deadline = start + timeout_ms / 1000.0
    covered: set[int] = set()
    coverage_warning = False

    def tracer(frame, event, arg):
        nonlocal coverage_warning
        if time.monotonic() > deadline:
            raise _WatchdogTimeout()
        if frame.f_code.co_filename != _JOB_FILE:
            return None
        if event == "line":
            try:
                covered.add(frame.f_lineno)
            except Exception:
                coverage_warning = True
        return tracer

    reply: dict = {
        "status": STATUS_OK,
        "output": None,
        "error_text": None,
        "coverage": None,
        "duration_ms": 0,
        "stderr_text": None,
        "coverage_warning": False,
    }

    try:
        code = compile(source_code, _JOB_FILE, "exec")
    except SyntaxError as exc:
        reply["status"] = STATUS_CRASH
        reply["error_text"] = f"SyntaxError: {exc}"
        reply["duration_ms"] = int((time.monotonic() - start) * 1000)
        return reply

    namespace: dict = {"__name__": "__main__"}
    out_buffer, err_buffer = io.StringIO(), io.StringIO()
    saved = (sys.stdin, sys.stdout, sys.stderr, sys.gettrace())
    sys.stdin, sys.stdout, sys.stderr = io.StringIO(stdin_text), out_buffer, err_buffer

    return_value = None
    try:
        sys.settrace(tracer)
        try:
            exec(code, namespace)
            if mode == MODE_CALL:
                target = _resolve_entry_point(namespace, entry_point)
                return_value = target(*call_args)
        finally:
            sys.settrace(saved[3])
    except _WatchdogTimeout:
        reply["status"] = STATUS_TIMEOUT
    except SystemExit as exc:
        if exc.code not in (None, 0):
            reply["status"] = STATUS_CRASH
            reply["error_text"] = f"SystemExit: {exc.code}"
    except _EntryPointError as exc:
        reply["status"] = STATUS_CRASH
        reply["error_text"] = str(exc)
    except BaseException as exc:
        reply["status"] = STATUS_CRASH
        reply["error_text"] = _crash_text(exc)
    finally:
        sys.stdin, sys.stdout, sys.stderr = saved[0], saved[1], saved[2]

    reply["duration_ms"] = int((time.monotonic() - start) * 1000)
    reply["stderr_text"] = err_buffer.getvalue() or None
    reply["coverage_warning"] = coverage_warning
    if reply["status"] == STATUS_OK:
        if mode == MODE_STDIN:
            reply["output"] = {"kind": "STDOUT_TEXT", "text": out_buffer.getvalue().rstrip("\n")}
        else:
            reply["output"] = {"kind": "RETURN_VALUE", "text": render_value(return_value)}
        if collect_coverage:
            reply["coverage"] = sorted(covered)
    return reply


def execute_stdin(
    source_code: str,
    stdin_text: str,
    timeout_ms: int = 10_000,
    collect_coverage: bool = False,
) -> dict:
    """Run the candidate as a top-level script with stdin_text as its input."""
    return _execute(MODE_STDIN, source_code, None, stdin_text, [], timeout_ms, collect_coverage)


def execute_call(
    source_code: str,
    entry_point: str,
    call_args: list,
    timeout_ms: int = 10_000,
    collect_coverage: bool = False,
) -> dict:
    """Load the candidate, resolve entry_point, and call it positionally."""
    return _execute(
        MODE_CALL, source_code, entry_point, "", list(call_args), timeout_ms, collect_coverage
    )


def run_job(job: dict) -> dict:
    """Execute one decoded protocol job; bad fields become a PROTOCOL_ERROR reply."""
    try:
        mode = job["mode"]
        source_code = job["source_code"]
        payload = job.get("payload") or {}
        timeout_ms = int(job.get("timeout_ms", 10_000))
        collect_coverage = bool(job.get("collect_coverage", False))
        if mode == MODE_STDIN:
            stdin_text = payload.get("stdin_text")
            if not isinstance(stdin_text, str):
                raise KeyError("payload.stdin_text")
            return execute_stdin(source_code, stdin_text, timeout_ms, collect_coverage)
        if mode == MODE_CALL:
            call_args = payload.get("call_args")
            if not isinstance(call_args, list):
                raise KeyError("payload.call_args")
            return execute_call(
                source_code, job.get("entry_point"), call_args, timeout_ms, collect_coverage
            )
        raise KeyError(f"mode {mode!r}")
    except (KeyError, TypeError, ValueError) as exc:
        return {"status": "PROTOCOL_ERROR", "error_text": f"malformed job: {exc}"}
