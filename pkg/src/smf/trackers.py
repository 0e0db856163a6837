"""Bug-tracker ingestion for JIRA and Bugzilla.

Two sources: ``live`` talks HTTP to the tracker's REST API; a fixture
directory serves recorded JSON responses instead, so runs are reproducible
offline. A fixture directory contains one file per request, named by a
URL-derived slug, plus an ``index.json`` mapping request URL -> file name.
Fixture mode performs no network operations at all.

Only the fields the pipeline consumes are parsed; the rest of the payload is
ignored. Status strings pass through verbatim.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any
from urllib.parse import quote

from .errors import AuthRequired, MalformedResponse, TrackerUnreachable
from .util import parse_date, parse_timestamp

log = logging.getLogger(__name__)

PAGE_SIZE = 50

LIVE = "live"


@dataclass(frozen=True)
class Issue:
    id: str
    summary: str
    created: datetime
    resolved: datetime | None
    status: str
    affected_versions: list[str] = field(default_factory=list)
    fix_versions: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class TrackerVersion:
    name: str
    release_date: date | None
    released: bool


# -- transport ----------------------------------------------------------------


def fixture_slug(url: str) -> str:
    """Stable filesystem name for a request URL."""
    digest = hashlib.sha1(url.encode("utf-8")).hexdigest()[:12]
    tail = re.sub(r"[^A-Za-z0-9._-]+", "_", url.split("/", 3)[-1])[:80]
    return f"{tail}.{digest}.json"


def save_fixture(directory: Path, url: str, payload: Any) -> None:
    """Record one response body under its request URL (used to build and
    refresh fixture directories)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index_path = directory / "index.json"
    index = json.loads(index_path.read_text()) if index_path.exists() else {}
    name = fixture_slug(url)
    (directory / name).write_text(json.dumps(payload, indent=2, sort_keys=True))
    index[url] = name
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True))


def _http_get_json(url: str) -> Any:
    import requests

    try:
        resp = requests.get(url, timeout=60, headers={"Accept": "application/json"})
    except requests.RequestException as exc:
        raise TrackerUnreachable(f"GET {url}: {exc}") from exc
    if resp.status_code in (401, 403):
        raise AuthRequired(f"GET {url}: HTTP {resp.status_code}")
    if resp.status_code >= 400:
        raise TrackerUnreachable(f"GET {url}: HTTP {resp.status_code}")
    try:
        return resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"GET {url}: body is not JSON") from exc


def _get_json(url: str, source: str | Path) -> Any:
    if source == LIVE:
        return _http_get_json(url)
    directory = Path(source)
    index_path = directory / "index.json"
    if not index_path.is_file():
        raise TrackerUnreachable(f"fixture {directory} has no index.json")
    index = json.loads(index_path.read_text())
    name = index.get(url)
    if name is None:
        raise TrackerUnreachable(f"fixture {directory} has no response for {url}")
    log.debug("fixture hit: %s -> %s", url, name)
    try:
        return json.loads((directory / name).read_text())
    except ValueError as exc:
        raise MalformedResponse(f"fixture file {name} is not JSON") from exc


# -- response parsing ---------------------------------------------------------


def _need(obj: dict, key: str, path: str) -> Any:
    if not isinstance(obj, dict) or key not in obj or obj[key] is None:
        raise MalformedResponse(f"missing field {path}.{key}")
    return obj[key]


def _parse_jira_issue(raw: dict, path: str) -> Issue:
    issue_id = _need(raw, "key", path)
    f = _need(raw, "fields", path)
    created = _parse_ts(_need(f, "created", f"{path}.fields"), f"{path}.fields.created")
    resolved_raw = f.get("resolutiondate")
    resolved = _parse_ts(resolved_raw, f"{path}.fields.resolutiondate") if resolved_raw else None
    if resolved is not None and resolved < created:
        raise MalformedResponse(f"{path}.fields.resolutiondate precedes created")
    status = _need(f, "status", f"{path}.fields")
    status_name = _need(status, "name", f"{path}.fields.status")
    return Issue(
        id=str(issue_id),
        summary=str(f.get("summary", "")),
        created=created,
        resolved=resolved,
        status=str(status_name),
        affected_versions=[_need(v, "name", f"{path}.fields.versions") for v in f.get("versions") or []],
        fix_versions=[_need(v, "name", f"{path}.fields.fixVersions") for v in f.get("fixVersions") or []],
    )


def _parse_ts(value: Any, path: str) -> datetime:
    try:
        return parse_timestamp(str(value))
    except ValueError as exc:
        raise MalformedResponse(f"bad timestamp at {path}: {value!r}") from exc


def _issue_sort_key(issue: Issue) -> tuple:
    m = re.fullmatch(r"(.*)-(\d+)", issue.id)
    if m:
        return (m.group(1), int(m.group(2)))
    return (issue.id, -1)


def jira_search_url(base: str, project_key: str, start_at: int) -> str:
    jql = quote(f"project={project_key} AND issuetype=Bug")
    return (f"{base.rstrip('/')}/rest/api/2/search"
            f"?jql={jql}&startAt={start_at}&maxResults={PAGE_SIZE}")


def jira_versions_url(base: str, project_key: str) -> str:
    return f"{base.rstrip('/')}/rest/api/2/project/{project_key}/versions"


def bugzilla_bugs_url(base: str, product: str) -> str:
    return f"{base.rstrip('/')}/rest/bug?product={quote(product)}"


def fetch_issues(project, source: str | Path) -> list[Issue]:
    """All bug issues for the project's tracker key, fully paginated and
    sorted by id. ``source`` is LIVE or a fixture directory."""
    if project.tracker_kind == "jira":
        issues = _fetch_jira_issues(project.tracker_base_url, project.tracker_project_key, source)
    else:
        issues = _fetch_bugzilla_issues(project.tracker_base_url, project.tracker_project_key, source)
    issues.sort(key=_issue_sort_key)
    log.info("fetched %d issues for %s", len(issues), project.key)
    return issues


def _fetch_jira_issues(base: str, project_key: str, source: str | Path) -> list[Issue]:
    issues: list[Issue] = []
    start_at = 0
    while True:
        payload = _get_json(jira_search_url(base, project_key, start_at), source)
        total = _need(payload, "total", "$")
        page = _need(payload, "issues", "$")
        for i, raw in enumerate(page):
            issues.append(_parse_jira_issue(raw, f"$.issues[{start_at + i}]"))
        if not page:
            if len(issues) < total:
                raise MalformedResponse(
                    f"$.issues: empty page at startAt={start_at} before total={total}"
                )
            break
        start_at += len(page)
        if start_at >= total:
            break
    return issues


def _fetch_bugzilla_issues(base: str, product: str, source: str | Path) -> list[Issue]:
    payload = _get_json(bugzilla_bugs_url(base, product), source)
    issues = []
    for i, raw in enumerate(_need(payload, "bugs", "$")):
        path = f"$.bugs[{i}]"
        created = _parse_ts(_need(raw, "creation_time", path), f"{path}.creation_time")
        resolved_raw = raw.get("cf_last_resolved")
        resolved = _parse_ts(resolved_raw, f"{path}.cf_last_resolved") if resolved_raw else None
        if resolved is not None and resolved < created:
            raise MalformedResponse(f"{path}.cf_last_resolved precedes creation_time")
        version = raw.get("version")
        milestone = raw.get("target_milestone")
        issues.append(
            Issue(
                id=str(_need(raw, "id", path)),
                summary=str(raw.get("summary", "")),
                created=created,
                resolved=resolved,
                status=str(_need(raw, "status", path)),
                affected_versions=[version] if version and version != "unspecified" else [],
                fix_versions=[milestone] if milestone and milestone != "---" else [],
            )
        )
    return issues


def fetch_versions(project, source: str | Path) -> list[TrackerVersion]:
    """Version list for the project, sorted by name. Bugzilla products carry
    no version endpoint in the supported subset and yield []."""
    if project.tracker_kind != "jira":
        return []
    payload = _get_json(
        jira_versions_url(project.tracker_base_url, project.tracker_project_key), source
    )
    if not isinstance(payload, list):
        raise MalformedResponse("$: version list is not an array")
    versions = []
    names = set()
    for i, raw in enumerate(payload):
        name = str(_need(raw, "name", f"$[{i}]"))
        if name in names:
            raise MalformedResponse(f"$[{i}].name: duplicate version {name!r}")
        names.add(name)
        release_raw = raw.get("releaseDate")
        try:
            release = parse_date(release_raw) if release_raw else None
        except ValueError as exc:
            raise MalformedResponse(f"$[{i}].releaseDate: {release_raw!r}") from exc
        versions.append(
            TrackerVersion(name=name, release_date=release, released=bool(raw.get("released", False)))
        )
    versions.sort(key=lambda v: v.name)
    log.info("fetched %d versions for %s", len(versions), project.key)
    return versions
