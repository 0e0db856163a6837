"""Shared fixtures: deterministic git repos, hook/metric scripts, recorded
tracker responses."""

from __future__ import annotations

import hashlib
import itertools
import logging
import os
import subprocess
import zlib
from pathlib import Path

import pytest

from smf import trackers


@pytest.fixture(autouse=True)
def _reset_logging():
    """Drop handlers the CLI attached, so streams never outlive their test."""
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    logging.getLogger("smf").setLevel(logging.NOTSET)

# Pinned so fixture repositories hash identically everywhere.
GIT_ENV = {
    "GIT_AUTHOR_NAME": "Fixture Author",
    "GIT_AUTHOR_EMAIL": "fixture@example.com",
    "GIT_COMMITTER_NAME": "Fixture Author",
    "GIT_COMMITTER_EMAIL": "fixture@example.com",
    "GIT_CONFIG_GLOBAL": "/dev/null",
    "GIT_CONFIG_SYSTEM": "/dev/null",
}
EPOCH = 1577836800  # 2020-01-01T00:00:00Z


class RepoFixture:
    """A scripted local git repository."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.clock = EPOCH
        self.git("init", "-q", "-b", "main")

    def git(self, *args: str, check: bool = True) -> subprocess.CompletedProcess:
        env = dict(os.environ)
        env.update(GIT_ENV)
        date = f"{self.clock} +0000"
        env["GIT_AUTHOR_DATE"] = date
        env["GIT_COMMITTER_DATE"] = date
        proc = subprocess.run(
            ["git", *args], cwd=self.path, env=env,
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        if check and proc.returncode != 0:
            raise AssertionError(f"git {args} failed: {proc.stderr}")
        return proc

    def commit(self, files: dict[str, str], message: str = "change") -> str:
        self.clock += 60
        for name, content in files.items():
            target = self.path / name
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content)
        self.git("add", "-A")
        self.git("commit", "-q", "-m", message)
        return self.head()

    def commit_verbatim_message(self, files: dict[str, str], message: str) -> str:
        self.clock += 60
        for name, content in files.items():
            (self.path / name).write_text(content)
        self.git("add", "-A")
        msg_file = self.path.parent / "commit-msg"
        msg_file.write_text(message)
        self.git("commit", "-q", "--cleanup=verbatim", "-F", str(msg_file))
        return self.head()

    def tag(self, name: str, annotated: bool = False) -> None:
        if annotated:
            self.git("tag", "-a", "-m", f"tag {name}", name)
        else:
            self.git("tag", name)

    def branch(self, name: str) -> None:
        self.git("branch", name)

    def head(self) -> str:
        return self.git("rev-parse", "HEAD").stdout.strip()

    def bare_mirror(self, path: Path) -> Path:
        self.git("clone", "-q", "--bare", str(self.path), str(path))
        return Path(path)


@pytest.fixture
def repo_factory(tmp_path):
    counter = itertools.count()

    def make(name: str | None = None) -> RepoFixture:
        name = name or f"repo{next(counter)}"
        return RepoFixture(tmp_path / name)

    return make


@pytest.fixture
def simple_repo(repo_factory) -> RepoFixture:
    repo = repo_factory("simple")
    repo.commit({"pom.xml": "<project/>\n", "src.txt": "one\n"}, "initial")
    return repo


def write_script(path: Path, body: str) -> Path:
    """An executable /bin/sh script."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("#!/bin/sh\n" + body)
    path.chmod(0o755)
    return path


@pytest.fixture
def script_dir(tmp_path) -> Path:
    d = tmp_path / "scripts"
    d.mkdir(exist_ok=True)
    return d


def fabricate_colliding_commits(repo: RepoFixture, prefix_len: int = 6) -> tuple[str, str, str]:
    """Write two valid loose commit objects whose ids share a hex prefix.

    Searching the id space in memory first keeps this fast and deterministic;
    only the colliding pair is written. Returns (sha1, sha2, shared_prefix).
    """
    tree = repo.git("rev-parse", "HEAD^{tree}").stdout.strip()
    seen: dict[str, tuple[str, bytes]] = {}
    for i in itertools.count():
        body = (
            f"tree {tree}\n"
            f"author Fixture Author <fixture@example.com> {EPOCH} +0000\n"
            f"committer Fixture Author <fixture@example.com> {EPOCH} +0000\n"
            f"\ncollision probe {i}\n"
        ).encode()
        data = b"commit %d\x00" % len(body) + body
        sha = hashlib.sha1(data).hexdigest()
        prefix = sha[:prefix_len]
        if prefix in seen and seen[prefix][0] != sha:
            for s, d in (seen[prefix], (sha, data)):
                obj_dir = repo.path / ".git" / "objects" / s[:2]
                obj_dir.mkdir(parents=True, exist_ok=True)
                obj_path = obj_dir / s[2:]
                if not obj_path.exists():
                    obj_path.write_bytes(zlib.compress(d))
            return seen[prefix][0][0:40], sha, prefix
        seen[prefix] = (sha, data)
    raise AssertionError("unreachable")


# -- tracker fixtures -----------------------------------------------------------


def jira_issue(
    key: str,
    created: str = "2016-01-02T10:22:33.000+0000",
    resolved: str | None = None,
    status: str = "Open",
    summary: str = "something is broken",
    versions: tuple[str, ...] = (),
    fix_versions: tuple[str, ...] = (),
) -> dict:
    return {
        "key": key,
        "fields": {
            "summary": summary,
            "created": created,
            "resolutiondate": resolved,
            "status": {"name": status},
            "versions": [{"name": n} for n in versions],
            "fixVersions": [{"name": n} for n in fix_versions],
        },
    }


def jira_version(name: str, released: bool = True, release_date: str | None = None) -> dict:
    doc = {"name": name, "released": released}
    if release_date:
        doc["releaseDate"] = release_date
    return doc


TRACKER_BASE = "https://issues.example.com"


def make_pipeline_fixture(root: Path) -> dict:
    """A complete offline project: git repo with three tagged versions, a
    recorded tracker (63 issues over two pages, three versions), a registry
    entry, and a fake ``mvn`` for the build/clean stages.

    Issue counts per version: 4.5.1 -> 10, 4.5.2 -> 20, 4.6 -> 33.
    """
    root = Path(root)
    repo = RepoFixture(root / "upstream")
    shas = {}
    repo.commit({"pom.xml": "<project/>\n", "src.txt": "one\n"}, "version 4.5.1")
    repo.tag("4.5.1")
    shas["4.5.1"] = repo.head()
    repo.commit({"src.txt": "one\ntwo\n"}, "version 4.5.2")
    repo.tag("4.5.2")
    shas["4.5.2"] = repo.head()
    repo.commit({"src.txt": "one\ntwo\nthree\n"}, "version 4.6")
    repo.tag("4.6")
    shas["4.6"] = repo.head()

    issues = []
    serial = 0
    for version_name, count in (("4.5.1", 10), ("4.5.2", 20), ("4.6", 33)):
        for _ in range(count):
            serial += 1
            issues.append(jira_issue(f"HTTPCLIENT-{serial}", versions=(version_name,)))
    tracker = make_jira_fixture(
        root / "tracker", TRACKER_BASE, "HTTPCLIENT", issues,
        [jira_version("4.5.1", release_date="2016-01-02"),
         jira_version("4.5.2", release_date="2016-06-11"),
         jira_version("4.6", release_date="2017-01-20")],
        page_size=50,
    )

    bin_dir = root / "bin"
    write_script(bin_dir / "mvn", "exit 0\n")
    build_tool = write_script(bin_dir / "build-tool", "exit 0\n")
    metric = write_script(bin_dir / "loc-metric.sh",
                          'echo "#>> LOC=$(wc -l < src.txt)"\n')

    from smf.registry import ProjectRecord, add_project

    registry = root / "smf.registry"
    add_project(
        ProjectRecord(
            key="HTTPCLIENT",
            repo_url=str(repo.path),
            tracker_kind="jira",
            tracker_base_url=TRACKER_BASE,
            tracker_project_key="HTTPCLIENT",
            build_command=str(build_tool),
        ),
        registry,
    )
    return {
        "root": root, "repo": repo, "shas": shas, "tracker": tracker,
        "registry": registry, "bin": bin_dir, "metric": metric,
    }


def make_jira_fixture(
    directory: Path,
    base_url: str,
    project_key: str,
    issues: list[dict],
    versions: list[dict],
    page_size: int = 50,
) -> Path:
    """Record the exact request/response pairs a paginated fetch will make,
    simulating a server that serves ``page_size`` issues per page."""
    directory = Path(directory)
    total = len(issues)
    start = 0
    while True:
        page = issues[start:start + page_size]
        trackers.save_fixture(
            directory,
            trackers.jira_search_url(base_url, project_key, start),
            {"startAt": start, "maxResults": page_size, "total": total, "issues": page},
        )
        if not page:
            break
        start += len(page)
        if start >= total:
            break
    trackers.save_fixture(
        directory, trackers.jira_versions_url(base_url, project_key), versions
    )
    return directory
