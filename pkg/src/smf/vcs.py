"""Git working-copy operations, implemented by driving the system ``git``.

Parsing plumbing output instead of reimplementing the object store keeps
behavior faithful; every subprocess command line is logged at debug level
(CLI verbosity >= 2).
"""

from __future__ import annotations

import logging
import re
import shlex
import subprocess
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import (
    AmbiguousPrefix,
    CloneFailed,
    DirtyWorkspace,
    NotAGitRepo,
    UnknownRef,
)

_log = logging.getLogger(__name__)

SHA_RE = re.compile(r"^[0-9a-f]{40}$")
# Abbreviated commit ids shorter than this are rejected rather than resolved.
MIN_ABBREV = 6

_FIELD_SEP = "\x1f"


@dataclass(frozen=True)
class Revision:
    sha: str
    author: str
    author_time: datetime
    message: str


@dataclass(frozen=True)
class Ref:
    name: str
    kind: str  # "tag" or "branch"
    target_sha: str


def _git(args: list[str], cwd: Path | None = None, check: bool = True) -> subprocess.CompletedProcess:
    cmd = ["git", *args]
    _log.debug("+ %s", shlex.join(cmd))
    proc = subprocess.run(
        cmd,
        cwd=cwd,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    if check and proc.returncode != 0:
        raise subprocess.CalledProcessError(
            proc.returncode, cmd, output=proc.stdout, stderr=proc.stderr
        )
    return proc


def _require_repo(local: Path) -> None:
    if _git(["rev-parse", "--git-dir"], cwd=local, check=False).returncode != 0:
        raise NotAGitRepo(str(local))


def clone_or_update(repo_url: str, repo_base: Path, key: str) -> Path:
    """Ensure ``<repo_base>/<key>`` is a working copy of repo_url at the
    remote's default branch tip. Second call fetches instead of re-cloning."""
    repo_base = Path(repo_base)
    local = repo_base / key
    if not (local / ".git").exists():
        proc = _git(["clone", repo_url, str(local)], check=False)
        if proc.returncode != 0:
            raise CloneFailed(f"git clone {repo_url} failed: {proc.stderr.strip()}")
        return local

    if _git(["rev-parse", "--git-dir"], cwd=local, check=False).returncode != 0:
        raise NotAGitRepo(f"{local} exists but is not a git repository")
    origin = _git(["remote", "get-url", "origin"], cwd=local, check=False)
    if origin.returncode != 0 or origin.stdout.strip() != repo_url:
        raise NotAGitRepo(
            f"{local} is a clone of {origin.stdout.strip()!r}, not {repo_url!r}"
        )
    fetch = _git(["fetch", "--tags", "--prune", "origin"], cwd=local, check=False)
    if fetch.returncode != 0:
        raise CloneFailed(f"git fetch in {local} failed: {fetch.stderr.strip()}")
    _git(["remote", "set-head", "origin", "--auto"], cwd=local, check=False)
    tip = _git(["rev-parse", "refs/remotes/origin/HEAD"], cwd=local, check=False)
    if tip.returncode == 0:
        _git(["checkout", "--force", "--detach", tip.stdout.strip()], cwd=local)
    return local


def list_refs(local: Path) -> list[Ref]:
    """All tags plus local and remote branches, deduplicated by (kind, name),
    sorted by (kind, name). Annotated tags are peeled to their commit."""
    local = Path(local)
    _require_repo(local)
    fmt = "%(refname)%09%(objectname)%09%(*objectname)"
    proc = _git(
        ["for-each-ref", f"--format={fmt}", "refs/heads", "refs/tags", "refs/remotes"],
        cwd=local,
    )
    seen: dict[tuple[str, str], Ref] = {}
    for line in proc.stdout.splitlines():
        refname, sha, peeled = line.split("\t")
        if refname.startswith("refs/heads/"):
            kind, name = "branch", refname[len("refs/heads/"):]
        elif refname.startswith("refs/tags/"):
            kind, name = "tag", refname[len("refs/tags/"):]
            if peeled:
                sha = peeled
        elif refname.startswith("refs/remotes/"):
            name = refname[len("refs/remotes/"):].split("/", 1)[1]
            if name == "HEAD":
                continue
            kind = "branch"
        else:
            continue
        seen.setdefault((kind, name), Ref(name=name, kind=kind, target_sha=sha))
    return sorted(seen.values(), key=lambda r: (r.kind, r.name))


def checkout(local: Path, ref_or_sha: str) -> str:
    """Detach HEAD at the commit named by a ref, a full sha, or an
    unambiguous hex prefix of at least MIN_ABBREV characters; returns the
    resolved 40-hex sha. Requires a clean workspace."""
    local = Path(local)
    _require_repo(local)
    if not is_clean(local):
        raise DirtyWorkspace(str(local))
    sha = _resolve_commit(local, ref_or_sha)
    _git(["checkout", "--detach", sha], cwd=local)
    return sha


def _resolve_commit(local: Path, ref_or_sha: str) -> str:
    # Ref names win over hex prefixes, mirroring git's own precedence.
    for candidate in (f"refs/tags/{ref_or_sha}", f"refs/heads/{ref_or_sha}",
                      f"refs/remotes/origin/{ref_or_sha}"):
        proc = _git(["rev-parse", "--verify", "--quiet", candidate + "^{commit}"],
                    cwd=local, check=False)
        if proc.returncode == 0:
            return proc.stdout.strip()
    ishex = re.fullmatch(r"[0-9a-f]{1,40}", ref_or_sha)
    if ishex and len(ref_or_sha) < MIN_ABBREV:
        raise UnknownRef(f"{ref_or_sha!r}: hex prefixes shorter than "
                         f"{MIN_ABBREV} characters are not resolved")
    proc = _git(["rev-parse", "--verify", ref_or_sha + "^{commit}"],
                cwd=local, check=False)
    if proc.returncode == 0:
        return proc.stdout.strip()
    if "ambiguous" in proc.stderr.lower():
        raise AmbiguousPrefix(ref_or_sha)
    raise UnknownRef(ref_or_sha)


def log(local: Path) -> list[Revision]:
    """First-parent history of HEAD, newest first, messages byte-for-byte."""
    local = Path(local)
    _require_repo(local)
    fmt = _FIELD_SEP.join(["%H", "%an", "%at"]) + _FIELD_SEP + "%B"
    proc = _git(["log", "--first-parent", "-z", f"--format={fmt}"], cwd=local)
    revisions = []
    for entry in proc.stdout.split("\0"):
        if not entry:
            continue
        sha, author, epoch, message = entry.split(_FIELD_SEP, 3)
        revisions.append(
            Revision(
                sha=sha,
                author=author,
                author_time=datetime.fromtimestamp(int(epoch), tz=timezone.utc),
                message=message,
            )
        )
    return revisions


def is_clean(local: Path) -> bool:
    """True iff no tracked file is modified/deleted and nothing is staged.
    Untracked files (build artifacts) do not count as dirty."""
    local = Path(local)
    _require_repo(local)
    proc = _git(["status", "--porcelain", "--untracked-files=no"], cwd=local)
    return proc.stdout.strip() == ""


def restore_clean(local: Path) -> None:
    """Discard tracked modifications and staged changes, keeping HEAD and
    untracked files; used to contain a metric that dirtied the tree."""
    local = Path(local)
    _require_repo(local)
    _git(["reset", "--hard", "HEAD"], cwd=local)
