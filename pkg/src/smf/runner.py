"""Run one metric executable and parse its stdout protocol.

The contract with a metric script, bit-exact:

* argv is ``[script_path, project_root]``
* the working directory is the project root
* env carries ``SMF_PROJECT`` and ``SMF_SHA``
* stdout lines containing ``#>>`` report values as ``#>> NAME=VALUE``
* stderr is diagnostics only and is never parsed
* exit 0 means success

A script that outlives the timeout is killed along with its whole process
group (metric scripts spawn helpers such as disassemblers).
"""

from __future__ import annotations

import logging
import math
import os
import re
import signal
import subprocess
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable

from .errors import InvalidName, ScriptNotExecutable
from .util import now_utc

log = logging.getLogger(__name__)

MARKER = "#>>"
METRIC_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")

DEFAULT_TIMEOUT_SECONDS = 300

OK = "ok"
TIMEOUT = "timeout"
SCRIPT_ERROR = "script_error"
PROTOCOL_EMPTY = "protocol_empty"

ENV_PROJECT = "SMF_PROJECT"
ENV_SHA = "SMF_SHA"


@dataclass
class MetricSample:
    """One (project, revision, metric, value) observation."""

    project_key: str
    sha: str
    metric_name: str
    value: float | None
    script_id: str
    status: str
    purity_violation: bool = False
    recorded_at: datetime = field(default_factory=now_utc)


@dataclass
class RunConfig:
    """Knobs for one invocation."""

    repo_base: Path
    no_compile: bool = False
    project_filter: str | None = None
    sha_filter: str | None = None
    timeout_seconds: int = DEFAULT_TIMEOUT_SECONDS
    verbosity: int = 1

    def __post_init__(self):
        if self.timeout_seconds < 1:
            raise ValueError("timeout_seconds must be >= 1")
        if self.verbosity not in (0, 1, 2, 3):
            raise ValueError("verbosity must be in {0, 1, 2, 3}")


@dataclass
class ParsedOutput:
    pairs: list[tuple[str, float]]
    warnings: list[str]


def parse_metric_output(lines: Iterable[str]) -> ParsedOutput:
    """Grep lines for the ``#>>`` marker and split them into (name, value).

    Everything after the first marker occurrence is trimmed and split at the
    first ``=``; the left side must be a valid metric name, the right side a
    finite decimal number. Marker lines that fail either rule are collected
    as warnings instead of raising.
    """
    pairs: list[tuple[str, float]] = []
    warnings: list[str] = []
    for line in lines:
        if MARKER not in line:
            continue
        payload = line.split(MARKER, 1)[1].strip()
        if "=" not in payload:
            warnings.append(line)
            continue
        name, _, raw_value = payload.partition("=")
        name = name.strip()
        if not METRIC_NAME_RE.match(name):
            warnings.append(line)
            continue
        try:
            value = float(raw_value.strip())
        except ValueError:
            warnings.append(line)
            continue
        if not math.isfinite(value):
            warnings.append(line)
            continue
        pairs.append((name, value))
    return ParsedOutput(pairs=pairs, warnings=warnings)


def render_value(value: float) -> str:
    """Shortest decimal text that parses back to exactly this value."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def format_metric_line(name: str, value: float) -> str:
    """Inverse of parse_metric_output for one pair."""
    if not METRIC_NAME_RE.match(name):
        raise InvalidName(name)
    value = float(value)
    if not math.isfinite(value):
        raise InvalidName(f"value for {name} must be finite, got {value!r}")
    return f"{MARKER} {name}={render_value(value)}"


@dataclass
class MetricExecution:
    """Samples plus the process-level detail the builder logs per stage."""

    samples: list[MetricSample]
    exit_code: int
    duration: float
    warnings: list[str]


def run_metric_script(
    script: Path,
    project_root: Path,
    config: RunConfig,
    project_key: str,
    sha: str,
    stderr_log: Path | None = None,
    env: dict[str, str] | None = None,
) -> MetricExecution:
    """Execute one script against a checked-out tree.

    Exit 0 yields one ok sample per protocol pair, or a single
    protocol_empty sample when nothing was reported. Nonzero exit discards
    any parsed pairs (a crashed metric cannot be trusted) and yields one
    script_error sample. Exceeding the timeout kills the process group and
    yields one timeout sample.
    """
    script = Path(script).resolve()
    project_root = Path(project_root)
    if not script.is_file() or not os.access(script, os.X_OK):
        raise ScriptNotExecutable(str(script))

    child_env = dict(os.environ if env is None else env)
    child_env[ENV_PROJECT] = project_key
    child_env[ENV_SHA] = sha

    start = time.monotonic()
    proc = subprocess.Popen(
        [str(script), str(project_root)],
        cwd=project_root,
        env=child_env,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        errors="replace",
        start_new_session=True,
    )
    log.debug("+ %s %s (timeout %ds)", script, project_root, config.timeout_seconds)
    timed_out = False
    try:
        stdout, stderr = proc.communicate(timeout=config.timeout_seconds)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill_process_group(proc)
        stdout, stderr = proc.communicate()
    duration = time.monotonic() - start

    if stderr_log is not None:
        stderr_log.parent.mkdir(parents=True, exist_ok=True)
        stderr_log.write_text(stderr, encoding="utf-8")
    elif stderr:
        log.debug("stderr of %s: %s", script.name, stderr.rstrip())

    def sample(status: str, name: str = "", value: float | None = None) -> MetricSample:
        return MetricSample(
            project_key=project_key,
            sha=sha,
            metric_name=name,
            value=value,
            script_id=script.name,
            status=status,
        )

    parsed = parse_metric_output(stdout.splitlines())
    for warning in parsed.warnings:
        log.warning("%s: unparseable protocol line: %s", script.name, warning)

    if timed_out:
        samples = [sample(TIMEOUT)]
    elif proc.returncode != 0:
        samples = [sample(SCRIPT_ERROR)]
    elif not parsed.pairs:
        samples = [sample(PROTOCOL_EMPTY)]
    else:
        samples = [sample(OK, name, value) for name, value in parsed.pairs]
    return MetricExecution(
        samples=samples,
        exit_code=proc.returncode,
        duration=duration,
        warnings=parsed.warnings,
    )


def execute_metric(
    script: Path,
    project_root: Path,
    config: RunConfig,
    project_key: str = "",
    sha: str = "",
    stderr_log: Path | None = None,
    env: dict[str, str] | None = None,
) -> list[MetricSample]:
    """The sample-producing surface of run_metric_script."""
    return run_metric_script(
        script, project_root, config, project_key, sha, stderr_log, env
    ).samples


def _kill_process_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()
