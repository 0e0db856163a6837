import os
from pathlib import Path

import pytest

from smf import vcs
from smf.builder import (
    BUILT,
    NOT_COMPILED,
    SKIPPED_BUILD_FAILED,
    SKIPPED_HOOK_FAILED,
    run_lifecycle,
)
from smf.errors import CheckoutFailed, DirtyWorkspace
from smf.registry import ProjectRecord
from smf.runner import RunConfig

from conftest import write_script


@pytest.fixture
def workspace(tmp_path, simple_repo):
    """A cloned project plus a bin dir with a fake mvn and a trace file."""
    base = tmp_path / "repos"
    base.mkdir()
    local = vcs.clone_or_update(str(simple_repo.path), base, "PROJ")
    bin_dir = tmp_path / "bin"
    bin_dir.mkdir()
    trace = tmp_path / "trace"
    # `mvn clean` and hooks append their stage name to the trace file
    write_script(bin_dir / "mvn", f'echo "$1" >> {trace}\n')
    env = dict(os.environ)
    env["PATH"] = f"{bin_dir}:{env['PATH']}"
    return {"repo": simple_repo, "base": base, "local": local, "bin": bin_dir,
            "trace": trace, "env": env, "tmp": tmp_path}


def stage_script(ws, name: str, body: str = "") -> Path:
    return write_script(ws["bin"] / name, f'echo {name} >> {ws["trace"]}\n{body}')


def project(ws, **overrides) -> ProjectRecord:
    fields = dict(
        key="PROJ",
        repo_url=str(ws["repo"].path),
        tracker_kind="jira",
        tracker_base_url="https://issues.example.com",
        tracker_project_key="PROJ",
        build_command=str(stage_script(ws, "build-tool")),
    )
    fields.update(overrides)
    return ProjectRecord(**fields)


def config(ws, **overrides) -> RunConfig:
    fields = dict(repo_base=ws["base"], timeout_seconds=30)
    fields.update(overrides)
    return RunConfig(**fields)


def trace_lines(ws) -> list[str]:
    if not ws["trace"].exists():
        return []
    return ws["trace"].read_text().splitlines()


def test_all_stages_in_order(workspace):
    ws = workspace
    metric1 = write_script(ws["bin"] / "m1.sh",
                           f'echo metric1 >> {ws["trace"]}\necho "#>> M1=1"\n')
    metric2 = write_script(ws["bin"] / "m2.sh",
                           f'echo metric2 >> {ws["trace"]}\necho "#>> M2=2"\n')
    record = project(
        ws,
        prebuild_script=str(stage_script(ws, "prebuild")),
        postbuild_script=str(stage_script(ws, "postbuild")),
        cleanup_script=str(stage_script(ws, "cleanup")),
    )
    outcome, samples = run_lifecycle(record, "main", [metric1, metric2],
                                     config(ws), env=ws["env"])
    assert outcome.status == BUILT
    assert [s.name for s in outcome.stage_log] == [
        "checkout", "prebuild", "build", "postbuild",
        "metric:1", "metric:2", "clean", "cleanup"]
    assert all(s.exit_code == 0 for s in outcome.stage_log)
    assert trace_lines(ws) == [
        "prebuild", "build-tool", "postbuild", "metric1", "metric2", "clean", "cleanup"]
    assert [(s.metric_name, s.value) for s in samples] == [("M1", 1.0), ("M2", 2.0)]


def test_build_failure_skips_metrics(workspace):
    ws = workspace
    metric = write_script(ws["bin"] / "m.sh", 'echo "#>> M=1"\n')
    bad_build = write_script(ws["bin"] / "bad-build", "exit 1\n")
    record = project(ws, build_command=str(bad_build))
    outcome, samples = run_lifecycle(record, "main", [metric], config(ws), env=ws["env"])
    assert outcome.status == SKIPPED_BUILD_FAILED
    assert samples == []
    names = [s.name for s in outcome.stage_log]
    assert "build" in names and not any(n.startswith("metric") for n in names)
    build_stage = next(s for s in outcome.stage_log if s.name == "build")
    assert build_stage.exit_code == 1


def test_prebuild_hook_failure_aborts_but_cleanup_runs(workspace):
    ws = workspace
    metric = write_script(ws["bin"] / "m.sh", 'echo "#>> M=1"\n')
    record = project(
        ws,
        prebuild_script=str(write_script(ws["bin"] / "pre-bad", "exit 3\n")),
        cleanup_script=str(stage_script(ws, "cleanup")),
    )
    outcome, samples = run_lifecycle(record, "main", [metric], config(ws), env=ws["env"])
    assert outcome.status == SKIPPED_HOOK_FAILED
    assert samples == []
    assert [s.name for s in outcome.stage_log] == ["checkout", "prebuild", "cleanup"]
    assert trace_lines(ws) == ["cleanup"]


def test_postbuild_hook_failure_blocks_metrics(workspace):
    ws = workspace
    metric = write_script(ws["bin"] / "m.sh", 'echo "#>> M=1"\n')
    record = project(
        ws,
        postbuild_script=str(write_script(ws["bin"] / "post-bad", "exit 1\n")),
        cleanup_script=str(stage_script(ws, "cleanup")),
    )
    outcome, samples = run_lifecycle(record, "main", [metric], config(ws), env=ws["env"])
    assert outcome.status == SKIPPED_HOOK_FAILED
    assert samples == []
    assert [s.name for s in outcome.stage_log] == [
        "checkout", "build", "postbuild", "clean", "cleanup"]


def test_no_compile_runs_metrics_without_build(workspace):
    ws = workspace
    metric = write_script(ws["bin"] / "m.sh", 'echo "#>> M=1"\n')
    record = project(
        ws,
        prebuild_script=str(stage_script(ws, "prebuild")),
        postbuild_script=str(stage_script(ws, "postbuild")),
    )
    outcome, samples = run_lifecycle(record, "main", [metric],
                                     config(ws, no_compile=True), env=ws["env"])
    assert outcome.status == NOT_COMPILED
    assert [s.name for s in outcome.stage_log] == [
        "checkout", "prebuild", "postbuild", "metric:1"]
    assert [(s.metric_name, s.value) for s in samples] == [("M", 1.0)]


def test_metric_failure_does_not_abort_lifecycle(workspace):
    ws = workspace
    dying = write_script(ws["bin"] / "dies.sh", "exit 9\n")
    fine = write_script(ws["bin"] / "fine.sh", 'echo "#>> OK=1"\n')
    outcome, samples = run_lifecycle(project(ws), "main", [dying, fine],
                                     config(ws), env=ws["env"])
    assert outcome.status == BUILT
    assert [s.status for s in samples] == ["script_error", "ok"]


def test_purity_violation_flagged_and_workspace_restored(workspace):
    ws = workspace
    vandal = write_script(ws["bin"] / "vandal.sh",
                          'echo vandalized >> "$1"/src.txt\necho "#>> V=1"\n')
    witness = write_script(ws["bin"] / "witness.sh", 'echo "#>> W=1"\n')
    outcome, samples = run_lifecycle(project(ws), "main", [vandal, witness],
                                     config(ws), env=ws["env"])
    assert [(s.metric_name, s.purity_violation) for s in samples] == [
        ("V", True), ("W", False)]
    assert vcs.is_clean(ws["local"]) is True


def test_untracked_artifacts_are_not_a_purity_violation(workspace):
    ws = workspace
    artifact = write_script(ws["bin"] / "artifact.sh",
                            'mkdir -p "$1"/target && echo x > "$1"/target/out\n'
                            'echo "#>> A=1"\n')
    _outcome, samples = run_lifecycle(project(ws), "main", [artifact],
                                      config(ws), env=ws["env"])
    assert samples[0].purity_violation is False


def test_dirty_workspace_rejected_before_anything_runs(workspace):
    ws = workspace
    (ws["local"] / "src.txt").write_text("edited\n")
    with pytest.raises(DirtyWorkspace):
        run_lifecycle(project(ws), "main", [], config(ws), env=ws["env"])
    assert trace_lines(ws) == []


def test_unknown_ref_raises_checkout_failed(workspace):
    ws = workspace
    with pytest.raises(CheckoutFailed):
        run_lifecycle(project(ws), "no-such-ref", [], config(ws), env=ws["env"])


def test_metrics_run_strictly_sequentially(workspace):
    ws = workspace
    # each metric fails if it sees another holding the lock
    body = (
        f'lock={ws["tmp"]}/metric.lock\n'
        'if [ -e "$lock" ]; then echo "#>> OVERLAP=1"; exit 1; fi\n'
        'touch "$lock"\nsleep 0.3\nrm "$lock"\n'
        'echo "#>> ALONE=1"\n'
    )
    scripts = [write_script(ws["bin"] / f"seq{i}.sh", body) for i in range(3)]
    _outcome, samples = run_lifecycle(project(ws), "main", scripts,
                                      config(ws), env=ws["env"])
    assert [s.status for s in samples] == ["ok", "ok", "ok"]
    assert all(s.metric_name == "ALONE" for s in samples)


def test_checkout_by_sha_prefix_and_env(workspace):
    ws = workspace
    tip = ws["repo"].head()
    probe = write_script(ws["bin"] / "probe.sh",
                         'p=0; [ "$SMF_PROJECT" = PROJ ] && p=1\n'
                         's=0; [ "$SMF_SHA" = %s ] && s=1\n'
                         'echo "#>> P=$p"\necho "#>> S=$s"\n' % tip)
    outcome, samples = run_lifecycle(project(ws), tip[:8], [probe],
                                     config(ws, no_compile=True), env=ws["env"])
    assert outcome.sha == tip
    assert [(s.metric_name, s.value) for s in samples] == [("P", 1.0), ("S", 1.0)]


def test_run_dir_gets_stage_logs_and_outcome(workspace):
    ws = workspace
    metric = write_script(ws["bin"] / "m.sh", 'echo "#>> M=1"\necho debug >&2\n')
    record = project(ws, cleanup_script=str(stage_script(ws, "cleanup")))
    run_dir = ws["tmp"] / "runs" / "20200101T000000Z"
    outcome, _ = run_lifecycle(record, "main", [metric], config(ws),
                               run_dir=run_dir, env=ws["env"])
    stage_dir = run_dir / "PROJ" / outcome.sha
    assert (stage_dir / "build.log").exists()
    assert (stage_dir / "metric:1.log").read_text() == "debug\n"
    assert (stage_dir / "cleanup.log").exists()
    outcome_text = (stage_dir / "outcome").read_text()
    assert f"[outcome:{outcome.sha}]" in outcome_text
    assert "status = built" in outcome_text
    assert "stage_1 = checkout 0" in outcome_text


def test_hooks_see_pipeline_env_and_project_cwd(workspace):
    ws = workspace
    probe = ws["tmp"] / "hook-probe"
    hook = write_script(
        ws["bin"] / "probing-hook",
        f'echo "$SMF_PROJECT $SMF_SHA $(pwd -P)" > {probe}\n',
    )
    record = project(ws, prebuild_script=str(hook))
    outcome, _ = run_lifecycle(record, "main", [], config(ws), env=ws["env"])
    key, sha, cwd = probe.read_text().split()
    assert key == "PROJ"
    assert sha == outcome.sha
    assert Path(cwd) == ws["local"].resolve()


def test_cleanup_runs_exactly_once_even_after_build_failure(workspace):
    ws = workspace
    record = project(
        ws,
        build_command=str(write_script(ws["bin"] / "bad", "exit 1\n")),
        cleanup_script=str(stage_script(ws, "cleanup")),
    )
    outcome, _ = run_lifecycle(record, "main", [], config(ws), env=ws["env"])
    assert [s.name for s in outcome.stage_log].count("cleanup") == 1
    assert trace_lines(ws).count("cleanup") == 1
