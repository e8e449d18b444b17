"""Protocol loop: one JSON job per stdin line, one JSON reply per stdout line.

At startup the real stdout is duplicated for protocol replies and file
descriptor 1 is repointed at /dev/null, so nothing a candidate writes (even
straight to the descriptor) can ever land on the protocol channel. The
process exits 0 when its input stream ends.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .runner import run_job


def _parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="sandbox-harness", description=__doc__)
    parser.add_argument(
        "--recursion-limit",
        type=int,
        default=10_000,
        help="interpreter recursion limit; modest so runaway recursion crashes fast",
    )
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    sys.setrecursionlimit(args.recursion_limit)

    protocol_out = os.fdopen(os.dup(1), "w", encoding="utf-8")
    devnull = os.open(os.devnull, os.O_WRONLY)
    os.dup2(devnull, 1)
    os.close(devnull)
    protocol_in = sys.stdin

    for raw in protocol_in:
        line = raw.strip()
        if not line:
            continue
        try:
            job = json.loads(line)
            if not isinstance(job, dict):
                raise ValueError("job is not an object")
        except ValueError as exc:
            reply = {"status": "PROTOCOL_ERROR", "error_text": f"undecodable job line: {exc}"}
        else:
            try:
                reply = run_job(job)
            except BaseException as exc:  # liveness: one reply per job, always
                reply = {"status": "CRASH", "error_text": f"harness failure: {exc!r}"}
        protocol_out.write(json.dumps(reply, ensure_ascii=False) + "\n")
        protocol_out.flush()
    return 0


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
