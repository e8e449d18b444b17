"""Sandbox harness: execute one untrusted Python candidate per protocol line.

The harness reads one JSON job object per line on stdin and writes exactly
one JSON reply per line on stdout, whatever the candidate does. Candidate
stdio is captured per job, line coverage is traced when requested, and a
trace-based watchdog plus a modest recursion limit bound runaway code; the
client keeps its own wall-clock kill as a backstop.
"""

from .runner import execute_call, execute_stdin, run_job

__version__ = "0.1.0"

__all__ = ["execute_call", "execute_stdin", "run_job", "__version__"]
