"""Small shared helpers: UTC timestamps, ISO rendering, file locking."""

from __future__ import annotations

import fcntl
import os
import re
from contextlib import contextmanager
from datetime import date, datetime, timezone
from pathlib import Path

from .errors import StorageError

# Honored so that repeated runs on identical inputs can produce identical
# exports; falls back to the wall clock when unset.
SOURCE_DATE_EPOCH = "SOURCE_DATE_EPOCH"

_OFFSET_RE = re.compile(r"([+-])(\d{2}):?(\d{2})$")


def now_utc() -> datetime:
    """Current UTC time, overridable via SOURCE_DATE_EPOCH."""
    pinned = os.environ.get(SOURCE_DATE_EPOCH)
    if pinned:
        return datetime.fromtimestamp(int(pinned), tz=timezone.utc)
    return datetime.now(tz=timezone.utc)


def iso_z(dt: datetime) -> str:
    """Render an aware datetime as ISO-8601 UTC with a trailing Z."""
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_timestamp(text: str) -> datetime:
    """Parse ISO-8601-ish timestamps ("Z", "+00:00" and "+0000" offsets).

    Naive inputs are taken as UTC. Raises ValueError on garbage.
    """
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    else:
        # datetime.fromisoformat on 3.10 rejects the +0000 form JIRA emits
        m = _OFFSET_RE.search(s)
        if m and ":" not in s[m.start():]:
            s = s[: m.start()] + f"{m.group(1)}{m.group(2)}:{m.group(3)}"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def parse_date(text: str) -> date:
    return date.fromisoformat(text.strip())


@contextmanager
def file_lock(path: Path):
    """Advisory exclusive lock; serializes writers of a registry/store."""
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd = os.open(path, os.O_CREAT | os.O_RDWR, 0o644)
    except OSError as exc:
        raise StorageError(f"cannot create lock file {path}: {exc}") from exc
    try:
        fcntl.flock(fd, fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


def atomic_write(path: Path, text: str) -> None:
    """Write via a temp file + rename so readers never see partial content."""
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
