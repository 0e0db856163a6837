"""Project registry: a plain-text store of mined-project definitions.

One ``[project:KEY]`` section per project. Chosen over a database so the
corpus definition is diffable and reproducible.
"""

from __future__ import annotations

import enum
import logging
import os
import re
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from . import vcs
from .errors import DuplicateKey, InvalidRecord, StorageError
from .records import Block, parse_blocks, serialize_blocks
from .util import atomic_write, file_lock

log = logging.getLogger(__name__)

KEY_RE = re.compile(r"^[A-Z0-9_]{1,32}$")
TRACKER_KINDS = ("jira", "bugzilla")

DEFAULT_BUILD_COMMAND = "mvn --batch-mode -DskipTests package"
CLEAN_COMMAND = "mvn clean"

_HOOK_FIELDS = ("prebuild_script", "postbuild_script", "cleanup_script")


@dataclass
class ProjectRecord:
    """One mined project: repo URL, tracker coordinates, hook scripts."""

    key: str
    repo_url: str
    tracker_kind: str
    tracker_base_url: str
    tracker_project_key: str
    prebuild_script: str | None = None
    postbuild_script: str | None = None
    cleanup_script: str | None = None
    build_command: str = DEFAULT_BUILD_COMMAND
    # Unknown registry fields, carried through rewrites untouched.
    extra: dict[str, str] = field(default_factory=dict)
    # Directory the record was loaded from; hook paths resolve against it.
    base_dir: Path | None = field(default=None, compare=False, repr=False)

    def hook_path(self, name: str) -> Path | None:
        """Resolve a hook field against the registry directory."""
        value = getattr(self, name)
        if value is None:
            return None
        p = Path(value)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p


class Violation(str, enum.Enum):
    """A failed corpus admission criterion."""

    NotGitReachable = "NotGitReachable"
    NoPomAtRoot = "NoPomAtRoot"
    TrackerUnreachable = "TrackerUnreachable"


def validate_record(record: ProjectRecord, base_dir: Path | None = None) -> None:
    """Check field invariants; raises InvalidRecord listing every problem."""
    problems = []
    if not KEY_RE.match(record.key):
        problems.append(f"key {record.key!r} must match [A-Z0-9_]{{1,32}}")
    if record.tracker_kind not in TRACKER_KINDS:
        problems.append(
            f"tracker_kind {record.tracker_kind!r} not one of {TRACKER_KINDS}"
        )
    if not re.match(r"^https?://", record.tracker_base_url):
        problems.append(f"tracker_base_url {record.tracker_base_url!r} not absolute")
    if not record.repo_url:
        problems.append("repo_url is empty")
    if not record.tracker_project_key:
        problems.append("tracker_project_key is empty")
    if not record.build_command.strip():
        problems.append("build_command is empty")
    resolve_base = base_dir if base_dir is not None else record.base_dir
    for name in _HOOK_FIELDS:
        value = getattr(record, name)
        if value is None:
            continue
        p = Path(value)
        if not p.is_absolute() and resolve_base is not None:
            p = resolve_base / p
        if not p.is_file() or not _is_executable(p):
            problems.append(f"{name} {value!r} is not an executable file")
    if problems:
        raise InvalidRecord("; ".join(problems))


def _is_executable(p: Path) -> bool:
    return os.access(p, os.X_OK)


def _record_to_block(record: ProjectRecord) -> Block:
    b = Block(kind="project", key=record.key)
    b.fields["repo_url"] = record.repo_url
    b.fields["tracker_kind"] = record.tracker_kind
    b.fields["tracker_base_url"] = record.tracker_base_url
    b.fields["tracker_project_key"] = record.tracker_project_key
    for name in _HOOK_FIELDS:
        value = getattr(record, name)
        if value is not None:
            b.fields[name] = value
    b.fields["build_command"] = record.build_command
    b.fields.update(record.extra)
    return b


def _block_to_record(block: Block, base_dir: Path) -> ProjectRecord:
    known = {f.name for f in dc_fields(ProjectRecord)} - {"key", "extra", "base_dir"}
    kwargs = {}
    extra: dict[str, str] = {}
    for name, value in block.fields.items():
        if name in known:
            kwargs[name] = value
        else:
            extra[name] = value
    missing = {"repo_url", "tracker_kind", "tracker_base_url", "tracker_project_key"} - set(kwargs)
    if missing:
        raise InvalidRecord(
            f"project {block.key!r} is missing fields: {', '.join(sorted(missing))}"
        )
    return ProjectRecord(key=block.key, extra=extra, base_dir=base_dir, **kwargs)


def load_registry(path: Path) -> dict[str, ProjectRecord]:
    """Read every project section. The result is a set: file order of the
    sections does not matter, duplicate keys are rejected."""
    path = Path(path)
    if not path.exists():
        return {}
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read registry {path}: {exc}") from exc
    records: dict[str, ProjectRecord] = {}
    for block in parse_blocks(text):
        if block.kind != "project":
            continue
        if block.key in records:
            raise StorageError(f"registry {path} has duplicate key {block.key!r}")
        records[block.key] = _block_to_record(block, base_dir=path.parent)
    return records


def save_registry(path: Path, records: dict[str, ProjectRecord]) -> None:
    path = Path(path)
    blocks = [_record_to_block(records[key]) for key in records]
    atomic_write(path, serialize_blocks(blocks))


def add_project(record: ProjectRecord, registry_path: Path) -> str:
    """Validate and append one project; returns its key.

    Raises DuplicateKey when the key is already registered, InvalidRecord on
    field violations, StorageError when the file cannot be written.
    """
    registry_path = Path(registry_path)
    validate_record(record, base_dir=registry_path.parent)
    with file_lock(registry_path.with_name(registry_path.name + ".lock")):
        records = load_registry(registry_path)
        if record.key in records:
            raise DuplicateKey(record.key)
        records[record.key] = record
        save_registry(registry_path, records)
    log.info("registered project %s", record.key)
    return record.key


def validate_project(
    record: ProjectRecord,
    workdir: Path,
    tracker_fixture: Path | None = None,
) -> list[Violation]:
    """Check the corpus admission criteria; read-only with respect to the
    registry and any existing clone.

    Returns the failed criteria (empty list means admissible). A clone of the
    repository is created under ``workdir`` when none exists yet; ``workdir``
    may already hold one at ``<workdir>/<key>``.
    """
    violations: list[Violation] = []
    workdir = Path(workdir)
    local = workdir / record.key
    try:
        if not (local / ".git").exists():
            local = vcs.clone_or_update(record.repo_url, workdir, record.key)
        if not (local / "pom.xml").is_file():
            violations.append(Violation.NoPomAtRoot)
    except Exception:
        violations.append(Violation.NotGitReachable)
    if not _tracker_reachable(record, tracker_fixture):
        violations.append(Violation.TrackerUnreachable)
    return violations


def _tracker_reachable(record: ProjectRecord, fixture: Path | None) -> bool:
    if fixture is not None:
        return (Path(fixture) / "index.json").is_file()
    try:
        import requests

        resp = requests.get(record.tracker_base_url, timeout=30)
        return resp.status_code < 500
    except Exception:
        return False
