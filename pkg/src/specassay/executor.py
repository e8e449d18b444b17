"""Execution bridge: run candidate programs with a payload and capture the outcome.

Two executors implement the same contract:

* InProcessExecutor runs the candidate inside this interpreter with redirected
  stdio, a line-tracing watchdog, and line coverage. It needs no subprocess
  and is the executor used by the scripted test suites.
* SubprocessExecutor drives a pool of external harness processes over a
  line-delimited JSON protocol (one request object per line on the harness's
  stdin, one result object per line on its stdout), enforcing a wall-clock
  kill at timeout_ms + grace as a backstop.
"""

from __future__ import annotations

import io
import json
import os
import select
import shlex
import subprocess
import sys
import threading
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence

STATUS_OK = "OK"
STATUS_CRASH = "CRASH"
STATUS_TIMEOUT = "TIMEOUT"

KIND_STDOUT_TEXT = "STDOUT_TEXT"
KIND_RETURN_VALUE = "RETURN_VALUE"

MODE_STDIN = "STDIN"
MODE_CALL = "CALL"

_CANDIDATE_FILE = "<candidate>"


class ExecutorUnavailable(Exception):
    pass


class HarnessSpawnError(ExecutorUnavailable):
    pass


class HarnessProtocolError(Exception):
    """The harness replied with garbage, died, or reported a protocol failure."""


class RunBatchError(Exception):
    """One or more requests in a batch failed at the executor level."""

    def __init__(self, errors: dict[int, Exception]):
        super().__init__(f"batch failed at positions {sorted(errors)}")
        self.errors = errors


@dataclass(frozen=True)
class InputPayload:
    """Concrete input: stdin text for STDIN mode, positional args for CALL mode."""

    mode: str
    stdin_text: str | None = None
    call_args: tuple | None = None

    def __post_init__(self):
        if self.mode == MODE_STDIN:
            if self.stdin_text is None or self.call_args is not None:
                raise ValueError("STDIN payload must carry stdin_text only")
        elif self.mode == MODE_CALL:
            if self.call_args is None or self.stdin_text is not None:
                raise ValueError("CALL payload must carry call_args only")
        else:
            raise ValueError(f"unknown payload mode {self.mode!r}")

    def as_text(self) -> str:
        """Stable textual rendering used in prompts and reports."""
        if self.mode == MODE_STDIN:
            return self.stdin_text or ""
        return json.dumps(list(self.call_args or ()), ensure_ascii=False)


@dataclass(frozen=True)
class SerializedOutput:
    kind: str  # KIND_STDOUT_TEXT | KIND_RETURN_VALUE
    text: str


@dataclass(frozen=True)
class ExecutionRequest:
    mode: str
    source_code: str
    entry_point: str | None
    payload: InputPayload
    timeout_ms: int = 10_000
    collect_coverage: bool = False


@dataclass(frozen=True)
class ExecutionResult:
    status: str  # STATUS_OK | STATUS_CRASH | STATUS_TIMEOUT
    output: SerializedOutput | None = None
    error_text: str | None = None
    coverage: frozenset[int] | None = None
    duration_ms: int = 0
    stderr_text: str | None = None
    coverage_warning: bool = False


class Executor(Protocol):
    def run(self, request: ExecutionRequest) -> ExecutionResult: ...

    def run_batch(
        self, requests: Sequence[ExecutionRequest], parallelism: int = 1
    ) -> list[ExecutionResult]: ...


def render_return_value(value) -> str:
    """Canonical string for a return value: JSON with sorted keys, repr fallback."""
    try:
        return json.dumps(value, ensure_ascii=False, sort_keys=True)
    except (TypeError, ValueError):
        return repr(value)


def _run_batch_threaded(executor: Executor, requests, parallelism: int):
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    requests = list(requests)
    if not requests:
        return []
    results: list[ExecutionResult | None] = [None] * len(requests)
    errors: dict[int, Exception] = {}

    def work(index: int) -> None:
        try:
            results[index] = executor.run(requests[index])
        except Exception as exc:  # infra errors, aggregated positionally
            errors[index] = exc

    with ThreadPoolExecutor(max_workers=min(parallelism, len(requests))) as pool:
        list(pool.map(work, range(len(requests))))
    if errors:
        raise RunBatchError(errors)
    return [r for r in results if r is not None]


# --------------------------------------------------------------------------
# In-process execution


class _WatchdogTimeout(BaseException):
    # BaseException so candidate `except Exception` blocks cannot swallow it.
    pass


class _EntryPointNotFound(Exception):
    pass


def _resolve_entry_point(namespace: dict, entry_point: str | None):
    """Find the callable for entry_point: a function, Type.method, or a method
    found on any class defined by the candidate (instantiated with no args)."""
    if not entry_point:
        raise _EntryPointNotFound("EntryPointNotFound: no entry_point given for CALL mode")
    if "." in entry_point:
        type_name, _, method = entry_point.partition(".")
        cls = namespace.get(type_name)
        if isinstance(cls, type):
            fn = getattr(cls(), method, None)
            if callable(fn):
                return fn
    obj = namespace.get(entry_point)
    if callable(obj):
        return obj
    for value in namespace.values():
        if isinstance(value, type) and getattr(value, "__module__", None) == "__main__":
            fn = getattr(value(), entry_point, None)
            if callable(fn):
                return fn
    raise _EntryPointNotFound(f"EntryPointNotFound: {entry_point!r} not resolvable")


def _format_crash(exc: BaseException) -> str:
    lines = [f"{type(exc).__name__}: {exc}"]
    frames = [
        f"  line {fs.lineno}" + (f": {fs.line}" if fs.line else "")
        for fs in traceback.extract_tb(exc.__traceback__)
        if fs.filename == _CANDIDATE_FILE
    ]
    lines.extend(frames[-3:])
    return "\n".join(lines)


def execute_in_process(request: ExecutionRequest) -> ExecutionResult:
    """Run one candidate with redirected stdio, coverage, and a trace watchdog.

    The watchdog checks the deadline on trace events, so pure-Python loops are
    interruptible; a blocking C call is not (the subprocess executor's
    wall-clock kill covers that case for the real harness).
    """
    start = time.monotonic()
    deadline = start + request.timeout_ms / 1000.0
    covered: set[int] = set()
    coverage_warning = False

    def tracer(frame, event, arg):
        if time.monotonic() > deadline:
            raise _WatchdogTimeout()
        if frame.f_code.co_filename != _CANDIDATE_FILE:
            return None
        if event == "line":
            try:
                covered.add(frame.f_lineno)
            except Exception:
                nonlocal coverage_warning
                coverage_warning = True
        return tracer

    namespace: dict = {"__name__": "__main__"}
    stdin_text = request.payload.stdin_text or ""
    out_buf, err_buf = io.StringIO(), io.StringIO()
    old_stdin, old_stdout, old_stderr = sys.stdin, sys.stdout, sys.stderr
    old_trace = sys.gettrace()

    status = STATUS_OK
    error_text: str | None = None
    return_value = None
    try:
        code = compile(request.source_code, _CANDIDATE_FILE, "exec")
    except SyntaxError as exc:
        return ExecutionResult(
            status=STATUS_CRASH,
            error_text=f"SyntaxError: {exc}",
            duration_ms=int((time.monotonic() - start) * 1000),
        )

    sys.stdin, sys.stdout, sys.stderr = io.StringIO(stdin_text), out_buf, err_buf
    try:
        sys.settrace(tracer)
        try:
            exec(code, namespace)
            if request.mode == MODE_CALL:
                fn = _resolve_entry_point(namespace, request.entry_point)
                return_value = fn(*(request.payload.call_args or ()))
        finally:
            sys.settrace(old_trace)
    except _WatchdogTimeout:
        status = STATUS_TIMEOUT
    except SystemExit as exc:
        if exc.code not in (None, 0):
            status = STATUS_CRASH
            error_text = f"SystemExit: {exc.code}"
    except _EntryPointNotFound as exc:
        status = STATUS_CRASH
        error_text = str(exc)
    except BaseException as exc:
        status = STATUS_CRASH
        error_text = _format_crash(exc)
    finally:
        sys.stdin, sys.stdout, sys.stderr = old_stdin, old_stdout, old_stderr

    duration_ms = int((time.monotonic() - start) * 1000)
    output = None
    if status == STATUS_OK:
        if request.mode == MODE_STDIN:
            output = SerializedOutput(KIND_STDOUT_TEXT, out_buf.getvalue().rstrip("\n"))
        else:
            output = SerializedOutput(KIND_RETURN_VALUE, render_return_value(return_value))
    stderr_text = err_buf.getvalue() or None
    return ExecutionResult(
        status=status,
        output=output,
        error_text=error_text,
        coverage=frozenset(covered) if request.collect_coverage and status == STATUS_OK else None,
        duration_ms=duration_ms,
        stderr_text=stderr_text,
        coverage_warning=coverage_warning,
    )


class InProcessExecutor:
    """In-memory executor sharing the harness contract; used by scripted tests.

    Execution swaps process-global stdio, so runs are serialized behind a
    lock; the executor is safe to call from concurrent workers.
    """

    _lock = threading.Lock()

    def run(self, request: ExecutionRequest) -> ExecutionResult:
        with InProcessExecutor._lock:
            return execute_in_process(request)

    def run_batch(
        self, requests: Sequence[ExecutionRequest], parallelism: int = 1
    ) -> list[ExecutionResult]:
        return _run_batch_threaded(self, requests, parallelism)


# --------------------------------------------------------------------------
# Subprocess harness client


def request_to_wire(request: ExecutionRequest) -> dict:
    payload: dict = {}
    if request.payload.mode == MODE_STDIN:
        payload["stdin_text"] = request.payload.stdin_text
    else:
        payload["call_args"] = list(request.payload.call_args or ())
    return {
        "mode": request.mode,
        "source_code": request.source_code,
        "entry_point": request.entry_point,
        "payload": payload,
        "timeout_ms": request.timeout_ms,
        "collect_coverage": request.collect_coverage,
    }


def result_from_wire(data: dict) -> ExecutionResult:
    status = data.get("status")
    if status not in (STATUS_OK, STATUS_CRASH, STATUS_TIMEOUT):
        raise HarnessProtocolError(f"harness reported status {status!r}")
    output = None
    if data.get("output") is not None:
        out = data["output"]
        try:
            output = SerializedOutput(kind=out["kind"], text=out["text"])
        except (KeyError, TypeError) as exc:
            raise HarnessProtocolError(f"malformed output object: {exc}") from exc
    coverage = None
    if data.get("coverage") is not None:
        coverage = frozenset(int(line) for line in data["coverage"])
    return ExecutionResult(
        status=status,
        output=output,
        error_text=data.get("error_text"),
        coverage=coverage,
        duration_ms=int(data.get("duration_ms", 0)),
        stderr_text=data.get("stderr_text"),
        coverage_warning=bool(data.get("coverage_warning", False)),
    )


class _HarnessProcess:
    def __init__(self, argv: list[str]):
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise HarnessSpawnError(f"cannot spawn harness {argv!r}: {exc}") from exc
        self._buffer = b""

    def alive(self) -> bool:
        return self.proc.poll() is None

    def send(self, line: str) -> None:
        assert self.proc.stdin is not None
        try:
            self.proc.stdin.write(line.encode("utf-8") + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise HarnessProtocolError(f"harness pipe closed: {exc}") from exc

    def read_reply(self, deadline: float) -> str | None:
        """Read one protocol line; None means the deadline passed first."""
        assert self.proc.stdout is not None
        fd = self.proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([fd], [], [], min(remaining, 0.05))
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                code = self.proc.poll()
                raise HarnessProtocolError(
                    f"harness closed its stdout (exit code {code})"
                )
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line.decode("utf-8")

    def kill(self) -> None:
        try:
            self.proc.kill()
            self.proc.wait(timeout=5)
        except Exception:
            pass

    def shutdown(self) -> None:
        # Clean shutdown: close stdin so the harness exits at end of stream.
        try:
            if self.proc.stdin is not None:
                self.proc.stdin.close()
            self.proc.wait(timeout=2)
        except Exception:
            self.kill()


class SubprocessExecutor:
    """Pooled harness client; processes are reused after OK results and
    recycled after any CRASH or TIMEOUT so abnormal runs cannot contaminate
    later ones."""

    def __init__(self, harness_cmd: str | Sequence[str], pool_size: int = 2, grace_ms: int = 500):
        if isinstance(harness_cmd, str):
            harness_cmd = shlex.split(harness_cmd)
        if not harness_cmd:
            raise ValueError("harness_cmd must not be empty")
        self._argv = list(harness_cmd)
        self._grace_s = grace_ms / 1000.0
        self._idle: list[_HarnessProcess] = []
        self._lock = threading.Lock()
        self._slots = threading.Semaphore(max(1, pool_size))
        self._closed = False

    def _acquire(self) -> _HarnessProcess:
        self._slots.acquire()
        with self._lock:
            if self._closed:
                self._slots.release()
                raise ExecutorUnavailable("executor is closed")
            while self._idle:
                proc = self._idle.pop()
                if proc.alive():
                    return proc
                proc.kill()
        try:
            return _HarnessProcess(self._argv)
        except Exception:
            self._slots.release()
            raise

    def _release(self, proc: _HarnessProcess, reusable: bool) -> None:
        with self._lock:
            if reusable and proc.alive() and not self._closed:
                self._idle.append(proc)
            else:
                proc.kill()
        self._slots.release()

    def run(self, request: ExecutionRequest) -> ExecutionResult:
        start = time.monotonic()
        proc = self._acquire()
        reusable = False
        try:
            proc.send(json.dumps(request_to_wire(request), ensure_ascii=False))
            deadline = start + request.timeout_ms / 1000.0 + self._grace_s
            line = proc.read_reply(deadline)
            if line is None:
                # Harness missed its own watchdog; wall-clock backstop.
                proc.kill()
                return ExecutionResult(
                    status=STATUS_TIMEOUT,
                    error_text=None,
                    duration_ms=int((time.monotonic() - start) * 1000),
                )
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise HarnessProtocolError(f"unparseable harness reply: {exc}") from exc
            if data.get("status") == "PROTOCOL_ERROR":
                raise HarnessProtocolError(data.get("error_text") or "harness protocol error")
            result = result_from_wire(data)
            reusable = result.status == STATUS_OK
            return result
        finally:
            self._release(proc, reusable)

    def run_batch(
        self, requests: Sequence[ExecutionRequest], parallelism: int = 1
    ) -> list[ExecutionResult]:
        return _run_batch_threaded(self, requests, parallelism)

    def close(self) -> None:
        with self._lock:
            self._closed = True
            procs, self._idle = self._idle, []
        for proc in procs:
            proc.shutdown()

    def __enter__(self) -> "SubprocessExecutor":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
