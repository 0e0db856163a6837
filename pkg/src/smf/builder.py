"""Drive one version through its lifecycle.

Stage order: checkout, prebuild hook, build, postbuild hook, each metric
script in turn, clean, cleanup hook. Hooks run only when configured; build
and clean are skipped under no_compile. A failing build skips the metric
stages and the version is simply recorded as skipped; a failing hook aborts
the remaining pre-metric stages. The cleanup hook is attempted exactly once
per lifecycle no matter what failed earlier (checkout failures excepted).

Metrics run strictly one at a time, on the artifacts the build left behind.
After each metric the tracked tree must still be pristine; a metric that
modified tracked files gets its samples flagged and the tree is restored
before the next stage.
"""

from __future__ import annotations

import logging
import os
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import vcs
from .errors import (
    AmbiguousPrefix,
    CheckoutFailed,
    DirtyWorkspace,
    ScriptNotExecutable,
    UnknownRef,
)
from .records import Block
from .registry import CLEAN_COMMAND, ProjectRecord
from .runner import ENV_PROJECT, ENV_SHA, MetricSample, RunConfig, run_metric_script

log = logging.getLogger(__name__)

BUILT = "built"
SKIPPED_BUILD_FAILED = "skipped_build_failed"
SKIPPED_HOOK_FAILED = "skipped_hook_failed"
NOT_COMPILED = "not_compiled"


@dataclass
class StageResult:
    name: str
    exit_code: int
    duration: float


@dataclass
class BuildOutcome:
    sha: str
    status: str
    stage_log: list[StageResult] = field(default_factory=list)


def run_lifecycle(
    project: ProjectRecord,
    ref_or_sha: str,
    scripts: list[Path],
    config: RunConfig,
    run_dir: Path | None = None,
    env: dict[str, str] | None = None,
) -> tuple[BuildOutcome, list[MetricSample]]:
    """Execute the lifecycle for one version of one project.

    The working copy lives at ``<config.repo_base>/<project.key>`` and must
    exist and be clean. Stage stdout/stderr land in per-stage log files under
    ``run_dir`` when given, along with an ``outcome`` summary.
    """
    local = Path(config.repo_base) / project.key
    base_env = dict(os.environ if env is None else env)

    if not vcs.is_clean(local):
        raise DirtyWorkspace(str(local))

    start = time.monotonic()
    try:
        sha = vcs.checkout(local, ref_or_sha)
    except (UnknownRef, AmbiguousPrefix, DirtyWorkspace) as exc:
        raise CheckoutFailed(f"{project.key}: cannot check out {ref_or_sha!r}: {exc}") from exc
    outcome = BuildOutcome(sha=sha, status=BUILT)
    outcome.stage_log.append(StageResult("checkout", 0, time.monotonic() - start))
    log.info("%s: checked out %s", project.key, sha)

    stage_env = dict(base_env)
    stage_env[ENV_PROJECT] = project.key
    stage_env[ENV_SHA] = sha
    stage_dir = None
    if run_dir is not None:
        stage_dir = Path(run_dir) / project.key / sha
        stage_dir.mkdir(parents=True, exist_ok=True)

    samples: list[MetricSample] = []
    build_ran = False
    aborted = False

    hook = project.hook_path("prebuild_script")
    if hook is not None:
        rc = _run_stage(outcome, "prebuild", [str(hook)], local, stage_env, stage_dir)
        if rc != 0:
            outcome.status = SKIPPED_HOOK_FAILED
            aborted = True

    if not aborted and not config.no_compile:
        build_ran = True
        rc = _run_stage(
            outcome, "build", shlex.split(project.build_command), local, stage_env, stage_dir
        )
        if rc != 0:
            outcome.status = SKIPPED_BUILD_FAILED
            aborted = True
            log.info("%s: build failed at %s, version skipped", project.key, sha)

    if not aborted:
        hook = project.hook_path("postbuild_script")
        if hook is not None:
            rc = _run_stage(outcome, "postbuild", [str(hook)], local, stage_env, stage_dir)
            if rc != 0:
                outcome.status = SKIPPED_HOOK_FAILED
                aborted = True

    if not aborted:
        for index, script in enumerate(scripts, start=1):
            stage = f"metric:{index}"
            samples.extend(
                _run_metric_stage(outcome, stage, script, local, config,
                                  project.key, sha, stage_env, stage_dir)
            )
        if config.no_compile and outcome.status == BUILT:
            outcome.status = NOT_COMPILED

    if build_ran:
        _run_stage(outcome, "clean", shlex.split(CLEAN_COMMAND), local, stage_env, stage_dir)

    hook = project.hook_path("cleanup_script")
    if hook is not None:
        _run_stage(outcome, "cleanup", [str(hook)], local, stage_env, stage_dir)

    if stage_dir is not None:
        _write_outcome(stage_dir / "outcome", outcome)
    return outcome, samples


def _run_stage(
    outcome: BuildOutcome,
    stage: str,
    argv: list[str],
    cwd: Path,
    env: dict[str, str],
    stage_dir: Path | None,
) -> int:
    log.debug("+ %s", shlex.join(argv))
    start = time.monotonic()
    log_fh = open(stage_dir / f"{stage}.log", "wb") if stage_dir is not None else subprocess.DEVNULL
    try:
        proc = subprocess.run(argv, cwd=cwd, env=env, stdout=log_fh, stderr=log_fh)
        exit_code = proc.returncode
    except OSError as exc:
        log.warning("stage %s could not start (%s)", stage, exc)
        exit_code = 127
    finally:
        if stage_dir is not None:
            log_fh.close()
    duration = time.monotonic() - start
    outcome.stage_log.append(StageResult(stage, exit_code, duration))
    if exit_code != 0:
        log.info("stage %s exited %d", stage, exit_code)
    return exit_code


def _run_metric_stage(
    outcome: BuildOutcome,
    stage: str,
    script: Path,
    local: Path,
    config: RunConfig,
    project_key: str,
    sha: str,
    env: dict[str, str],
    stage_dir: Path | None,
) -> list[MetricSample]:
    stderr_log = stage_dir / f"{stage}.log" if stage_dir is not None else None
    try:
        execution = run_metric_script(
            script, local, config, project_key, sha, stderr_log=stderr_log, env=env
        )
        samples, exit_code, duration = execution.samples, execution.exit_code, execution.duration
    except ScriptNotExecutable as exc:
        # Metric problems never abort the lifecycle.
        log.warning("metric script not executable: %s", exc)
        samples = [
            MetricSample(
                project_key=project_key, sha=sha, metric_name="", value=None,
                script_id=Path(script).name, status="script_error",
            )
        ]
        exit_code, duration = 126, 0.0
    outcome.stage_log.append(StageResult(stage, exit_code, duration))

    if not vcs.is_clean(local):
        log.warning("%s modified tracked files; flagging and restoring", Path(script).name)
        for sample in samples:
            sample.purity_violation = True
        vcs.restore_clean(local)
    return samples


def _write_outcome(path: Path, outcome: BuildOutcome) -> None:
    block = Block(kind="outcome", key=outcome.sha)
    block.fields["sha"] = outcome.sha
    block.fields["status"] = outcome.status
    for i, stage in enumerate(outcome.stage_log, start=1):
        block.fields[f"stage_{i}"] = f"{stage.name} {stage.exit_code} {stage.duration:.3f}"
    path.write_text(block.serialize(), encoding="utf-8")
