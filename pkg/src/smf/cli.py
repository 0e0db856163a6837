"""Command-line surface.

Subcommands use hyphenated names (``fetch-project``, ``run-metric``) and
accept underscore spellings as aliases. Diagnostics go to stderr; data goes
to stdout or the requested output file. Exit code 0 means no error-class
diagnostic was emitted; metric failures and skipped builds are normal
results, not errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__, analysis, builder, mapper, trackers, vcs
from .errors import (
    AuthRequired,
    CheckoutFailed,
    CloneFailed,
    DirtyWorkspace,
    DuplicateKey,
    InvalidRecord,
    MalformedResponse,
    NotAGitRepo,
    SmfError,
    StorageError,
    TrackerUnreachable,
)
from .registry import ProjectRecord, add_project, load_registry, validate_project
from .runner import DEFAULT_TIMEOUT_SECONDS, RunConfig
from .store import Store

log = logging.getLogger(__name__)

ENV_REPO_BASE = "SMF_REPO_BASE"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_TRACKER = 4


class _ErrorCounter(logging.Handler):
    """Counts error-class diagnostics so the exit code can reflect them."""

    def __init__(self):
        super().__init__(level=logging.ERROR)
        self.count = 0

    def emit(self, record):
        self.count += 1


def _setup_logging(verbosity: int) -> _ErrorCounter:
    logging.basicConfig(
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
        level=logging.DEBUG if verbosity >= 3 else logging.WARNING,
        force=True,
    )
    smf_logger = logging.getLogger("smf")
    smf_logger.setLevel(
        {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}.get(verbosity, logging.DEBUG)
    )
    counter = _ErrorCounter()
    logging.getLogger().addHandler(counter)
    return counter


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--registry", default="./smf.registry",
                        help="path of the project registry file")
    parser.add_argument("--store", default="./smf-store",
                        help="directory holding samples, runs and tracker data")
    parser.add_argument("-v", "--verbosity", type=int, choices=[0, 1, 2, 3], default=1,
                        help="0=minimal output, 1=normal output, 2=verbose output, "
                             "3=very verbose output")


def _add_repo_base(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--git-repo-base", metavar="REPO_BASE",
                        default=os.environ.get(ENV_REPO_BASE, "./smf-repos"),
                        help="where to store the git repos that must be downloaded "
                             f"(env {ENV_REPO_BASE})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smf",
        description="Mine software projects, build their released versions, run "
                    "metric executables against the build trees, and aggregate "
                    "the values for metric-vs-defect analysis.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("add-project", aliases=["add_project"],
                       help="register a project in the registry")
    _add_common(p)
    p.add_argument("key", help="short unique project key, e.g. HTTPCLIENT")
    p.add_argument("--repo-url", required=True, help="git-clonable repository URL")
    p.add_argument("--tracker-kind", required=True, choices=["jira", "bugzilla"])
    p.add_argument("--tracker-base-url", required=True, help="bug tracker base URL")
    p.add_argument("--tracker-project-key", required=True,
                   help="project identifier on the tracker side")
    p.add_argument("--prebuild-script", help="hook run just before the build")
    p.add_argument("--postbuild-script",
                   help="hook run after the build, before the metrics")
    p.add_argument("--cleanup-script",
                   help="hook run after metrics and clean, before the next checkout")
    p.add_argument("--build-command", default=None,
                   help="build command line (default: Maven package)")
    p.set_defaults(func=cmd_add_project)

    p = sub.add_parser("validate-project", aliases=["validate_project"],
                       help="check the corpus admission criteria for a project")
    _add_common(p)
    _add_repo_base(p)
    p.add_argument("key")
    p.add_argument("--tracker-fixture", metavar="DIR",
                   help="directory of recorded tracker responses")
    p.set_defaults(func=cmd_validate_project)

    p = sub.add_parser("fetch-project", aliases=["fetch_project"],
                       help="download a project's source tree, ingest its bugs and "
                            "versions, and map versions to repository refs")
    _add_common(p)
    _add_repo_base(p)
    p.add_argument("key", help="registry key of the project to fetch")
    p.add_argument("--tracker-fixture", metavar="DIR",
                   help="serve tracker responses from this recorded-fixture "
                        "directory instead of the network")
    p.set_defaults(func=cmd_fetch_project)

    p = sub.add_parser("run-metric", aliases=["run_metric"],
                       help="run metric scripts against project build trees")
    _add_common(p)
    _add_repo_base(p)
    p.add_argument("shell_script", nargs="+", help="a script to run")
    p.add_argument("--no-compile", action="store_true",
                   help="do not compile projects before calling the metrics")
    p.add_argument("--project", metavar="PROJECT",
                   help="which project to run on; if omitted, runs on all projects")
    p.add_argument("--sha", metavar="SHA",
                   help="run on a single revision (full sha or >=6-char prefix) "
                        "instead of every mapped version")
    p.add_argument("--timeout", type=int, default=DEFAULT_TIMEOUT_SECONDS,
                   metavar="SECONDS",
                   help="kill a metric script after this many seconds "
                        f"(default {DEFAULT_TIMEOUT_SECONDS})")
    p.set_defaults(func=cmd_run_metric)

    p = sub.add_parser("export", help="export recorded samples as CSV")
    _add_common(p)
    p.add_argument("--project", help="only this project's rows")
    p.add_argument("--metric", help="only this metric's rows")
    p.add_argument("--run", help="only this run's rows")
    p.add_argument("--output", metavar="PATH", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("analyze", help="per-metric rank correlation against bug counts")
    _add_common(p)
    p.add_argument("--project", required=True, help="project key to analyze")
    p.add_argument("--output", metavar="PATH",
                   help="write the CSV report here (human-readable text then "
                        "goes to stdout)")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    counter = _setup_logging(args.verbosity)
    try:
        code = args.func(args)
    except SmfError as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    if code == EXIT_OK and counter.count:
        return EXIT_ERROR
    return code


# -- commands -------------------------------------------------------------------


def cmd_add_project(args) -> int:
    record = ProjectRecord(
        key=args.key,
        repo_url=args.repo_url,
        tracker_kind=args.tracker_kind,
        tracker_base_url=args.tracker_base_url,
        tracker_project_key=args.tracker_project_key,
        prebuild_script=args.prebuild_script,
        postbuild_script=args.postbuild_script,
        cleanup_script=args.cleanup_script,
        **({"build_command": args.build_command} if args.build_command else {}),
    )
    try:
        add_project(record, Path(args.registry))
    except (DuplicateKey, InvalidRecord) as exc:
        log.error("cannot add %s: %s", args.key, exc)
        return EXIT_USAGE
    print(f"added {args.key} to {args.registry}")
    return EXIT_OK


def cmd_validate_project(args) -> int:
    record = _lookup(args)
    if record is None:
        return EXIT_USAGE
    fixture = Path(args.tracker_fixture) if args.tracker_fixture else None
    repo_base = Path(args.git_repo_base)
    repo_base.mkdir(parents=True, exist_ok=True)
    violations = validate_project(record, repo_base, tracker_fixture=fixture)
    if not violations:
        print(f"{args.key}: admissible")
        return EXIT_OK
    for violation in violations:
        print(f"{args.key}: {violation.value}")
    return EXIT_ERROR


def cmd_fetch_project(args) -> int:
    record = _lookup(args)
    if record is None:
        return EXIT_USAGE
    repo_base = Path(args.git_repo_base)
    repo_base.mkdir(parents=True, exist_ok=True)
    try:
        local = vcs.clone_or_update(record.repo_url, repo_base, record.key)
        refs = vcs.list_refs(local)
    except (CloneFailed, NotAGitRepo) as exc:
        log.error("vcs failure for %s: %s", record.key, exc)
        return EXIT_MISSING
    source = Path(args.tracker_fixture) if args.tracker_fixture else trackers.LIVE
    try:
        issues = trackers.fetch_issues(record, source)
        versions = trackers.fetch_versions(record, source)
    except (TrackerUnreachable, MalformedResponse, AuthRequired) as exc:
        log.error("tracker failure for %s: %s", record.key, exc)
        return EXIT_TRACKER
    mappings = mapper.map_versions(versions, refs, record.key)
    store = Store(Path(args.store))
    store.save_project_data(record, issues, versions, mappings)
    mapped = sum(1 for m in mappings if m.ref is not None)
    print(f"{record.key}: {len(issues)} issues, {len(versions)} versions, "
          f"{mapped}/{len(mappings)} versions mapped to refs")
    return EXIT_OK


def cmd_run_metric(args) -> int:
    scripts = []
    for raw in args.shell_script:
        script = Path(raw).resolve()
        if not script.is_file() or not os.access(script, os.X_OK):
            print(f"error: {raw} is not an executable script", file=sys.stderr)
            return EXIT_USAGE
        scripts.append(script)

    registry = load_registry(Path(args.registry))
    if args.project is not None:
        selected = [registry[args.project]] if args.project in registry else []
    else:
        selected = [registry[key] for key in sorted(registry)]
    if not selected:
        log.error("no projects selected (registry %s)", args.registry)
        return EXIT_MISSING

    config = RunConfig(
        repo_base=Path(args.git_repo_base),
        no_compile=args.no_compile,
        project_filter=args.project,
        sha_filter=args.sha,
        timeout_seconds=args.timeout,
        verbosity=args.verbosity,
    )
    config.repo_base.mkdir(parents=True, exist_ok=True)
    store = Store(Path(args.store))
    run = store.open_run(config)
    run_dir = store.path / "runs" / run.run_id

    outcomes: dict[str, int] = {}
    statuses: dict[str, int] = {}
    for record in selected:
        try:
            vcs.clone_or_update(record.repo_url, config.repo_base, record.key)
        except (CloneFailed, NotAGitRepo) as exc:
            log.error("vcs failure for %s: %s", record.key, exc)
            continue
        for target in _targets(store, record, args.sha):
            try:
                outcome, samples = builder.run_lifecycle(
                    record, target, scripts, config, run_dir=run_dir
                )
            except (CheckoutFailed, DirtyWorkspace) as exc:
                log.error("lifecycle for %s at %s failed: %s", record.key, target, exc)
                continue
            outcomes[outcome.status] = outcomes.get(outcome.status, 0) + 1
            for sample in samples:
                store.record(sample, run)
                statuses[sample.status] = statuses.get(sample.status, 0) + 1
    store.close_run(run)

    print(f"run {run.run_id}: {sum(outcomes.values())} lifecycle(s)")
    for status in sorted(outcomes):
        print(f"  {status}: {outcomes[status]}")
    print(f"samples recorded: {len(run.samples)}")
    for status in sorted(statuses):
        print(f"  {status}: {statuses[status]}")
    return EXIT_OK


def _targets(store: Store, record: ProjectRecord, sha: str | None) -> list[str]:
    """Revisions to iterate: the --sha filter names exactly one; otherwise
    every mapped version, deduplicated by target commit."""
    if sha is not None:
        return [sha]
    targets: list[str] = []
    for mapping in store.project_data(record.key)["mappings"]:
        if mapping.ref is not None and mapping.ref.target_sha not in targets:
            targets.append(mapping.ref.target_sha)
    if not targets:
        log.warning("%s has no mapped versions; run fetch-project first", record.key)
    return targets


def cmd_export(args) -> int:
    try:
        store = Store(Path(args.store), create=False)
    except StorageError as exc:
        log.error("%s", exc)
        return EXIT_MISSING
    document = store.export_csv(project=args.project, metric=args.metric,
                                run_id=args.run)
    if args.output:
        Path(args.output).write_text(document, encoding="utf-8")
        log.info("wrote %s", args.output)
    else:
        sys.stdout.write(document)
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        store = Store(Path(args.store), create=False)
    except StorageError as exc:
        log.error("%s", exc)
        return EXIT_MISSING
    report = analysis.correlate_report(store, args.project)
    if args.output:
        Path(args.output).write_text(analysis.report_csv(report), encoding="utf-8")
        sys.stdout.write(analysis.report_text(report))
    else:
        sys.stdout.write(analysis.report_csv(report))
    return EXIT_OK


def _lookup(args) -> ProjectRecord | None:
    registry = load_registry(Path(args.registry))
    record = registry.get(args.key)
    if record is None:
        log.error("unknown project %r in registry %s", args.key, args.registry)
    return record


if __name__ == "__main__":
    sys.exit(main())
