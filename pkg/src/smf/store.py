"""Persistence for samples, tracker data and mappings, plus the exports.

Layout of a store directory:

* ``samples.log``  append-only sample records in the sectioned text format
* ``runs.log``     one record per run, plus a close marker per finished run
* ``meta/KEY.json`` per-project snapshot: project record, issues, versions,
  ref mappings (replaced wholesale by each fetch)

Samples are never mutated or deleted. The portable dump is a versioned JSON
document that round-trips the whole store, so experiments can be archived
and reloaded regardless of how the backing files evolve.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedDump, RunClosed, SchemaVersionMismatch, StorageError
from .mapper import RefMapping
from .records import Block, parse_blocks
from .registry import ProjectRecord
from .runner import MetricSample, RunConfig, render_value
from .trackers import Issue, TrackerVersion
from .util import atomic_write, file_lock, iso_z, now_utc, parse_date, parse_timestamp
from .vcs import Ref

log = logging.getLogger(__name__)

DUMP_SCHEMA = "smf-dump/1"

CSV_HEADER = ["project", "sha", "version", "metric", "value", "status", "recorded_at"]


@dataclass
class RunRecord:
    run_id: str
    config: RunConfig
    samples: list[MetricSample] = field(default_factory=list)
    started_at: str = ""
    closed: bool = False


class Store:
    """Directory-backed store; one writer at a time, any number of readers."""

    def __init__(self, path: Path, create: bool = True):
        self.path = Path(path)
        if create:
            self.path.mkdir(parents=True, exist_ok=True)
            (self.path / "meta").mkdir(exist_ok=True)
        elif not self.path.is_dir():
            raise StorageError(f"store directory {self.path} does not exist")
        self._lock_path = self.path / ".lock"
        self._samples: list[tuple[int, str, MetricSample]] = []
        self._runs: dict[str, RunRecord] = {}
        self._load()

    # -- loading --------------------------------------------------------------

    def _load(self) -> None:
        runs_path = self.path / "runs.log"
        if runs_path.exists():
            for block in parse_blocks(runs_path.read_text(encoding="utf-8")):
                if block.kind == "run":
                    self._runs[block.key] = _run_from_block(block)
                elif block.kind == "run_closed" and block.key in self._runs:
                    self._runs[block.key].closed = True
        samples_path = self.path / "samples.log"
        if samples_path.exists():
            for block in parse_blocks(samples_path.read_text(encoding="utf-8")):
                if block.kind != "sample":
                    continue
                seq = int(block.key)
                run_id = block.fields.get("run", "")
                sample = _sample_from_block(block)
                self._samples.append((seq, run_id, sample))
                if run_id in self._runs:
                    self._runs[run_id].samples.append(sample)
        self._samples.sort(key=lambda t: t[0])

    # -- runs and samples -----------------------------------------------------

    def open_run(self, config: RunConfig) -> RunRecord:
        started = now_utc()
        base = started.strftime("%Y%m%dT%H%M%SZ")
        run_id = base
        n = 1
        while run_id in self._runs:
            n += 1
            run_id = f"{base}-{n}"
        run = RunRecord(run_id=run_id, config=config, started_at=iso_z(started))
        self._runs[run_id] = run
        self._append("runs.log", _run_to_block(run))
        log.info("opened run %s", run_id)
        return run

    def close_run(self, run: RunRecord) -> None:
        if run.closed:
            return
        run.closed = True
        block = Block(kind="run_closed", key=run.run_id)
        block.fields["closed_at"] = iso_z(now_utc())
        self._append("runs.log", block)

    def record(self, sample: MetricSample, run: RunRecord) -> None:
        """Append one sample to an open run."""
        if run.closed:
            raise RunClosed(run.run_id)
        seq = self._samples[-1][0] + 1 if self._samples else 1
        self._append("samples.log", _sample_to_block(sample, seq, run.run_id))
        self._samples.append((seq, run.run_id, sample))
        run.samples.append(sample)

    def _append(self, name: str, block: Block) -> None:
        with file_lock(self._lock_path):
            try:
                with open(self.path / name, "a", encoding="utf-8") as fh:
                    fh.write(block.serialize() + "\n")
                    fh.flush()
            except OSError as exc:
                raise StorageError(f"cannot append to {name}: {exc}") from exc

    # -- per-project tracker data ----------------------------------------------

    def save_project_data(
        self,
        project: ProjectRecord,
        issues: list[Issue],
        versions: list[TrackerVersion],
        mappings: list[RefMapping],
    ) -> None:
        doc = {
            "project": _project_to_json(project),
            "issues": [_issue_to_json(i) for i in issues],
            "versions": [_version_to_json(v) for v in versions],
            "mappings": [_mapping_to_json(m) for m in mappings],
        }
        with file_lock(self._lock_path):
            atomic_write(self.path / "meta" / f"{project.key}.json",
                         json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def project_keys(self) -> list[str]:
        return sorted(p.stem for p in (self.path / "meta").glob("*.json"))

    def project_data(self, key: str) -> dict:
        """Parsed snapshot: project, issues, versions, mappings."""
        path = self.path / "meta" / f"{key}.json"
        if not path.exists():
            return {"project": None, "issues": [], "versions": [], "mappings": []}
        doc = json.loads(path.read_text(encoding="utf-8"))
        return {
            "project": _project_from_json(doc["project"]),
            "issues": [_issue_from_json(i) for i in doc["issues"]],
            "versions": [_version_from_json(v) for v in doc["versions"]],
            "mappings": [_mapping_from_json(m) for m in doc["mappings"]],
        }

    def samples(
        self,
        project: str | None = None,
        metric: str | None = None,
        run_id: str | None = None,
    ) -> list[tuple[int, str, MetricSample]]:
        out = []
        for seq, rid, sample in self._samples:
            if project is not None and sample.project_key != project:
                continue
            if metric is not None and sample.metric_name != metric:
                continue
            if run_id is not None and rid != run_id:
                continue
            out.append((seq, rid, sample))
        return out

    def runs(self) -> list[RunRecord]:
        return [self._runs[k] for k in sorted(self._runs)]

    # -- exports ----------------------------------------------------------------

    def _sha_to_version(self, key: str) -> dict[str, str]:
        table: dict[str, str] = {}
        for mapping in self.project_data(key)["mappings"]:
            if mapping.ref is None:
                continue
            sha = mapping.ref.target_sha
            if sha not in table or mapping.version_name < table[sha]:
                table[sha] = mapping.version_name
        return table

    def export_csv(
        self,
        project: str | None = None,
        metric: str | None = None,
        run_id: str | None = None,
    ) -> str:
        """Deterministic CSV of samples: same contents, same bytes, whatever
        the insertion order. Non-ok samples keep their row with an empty
        value cell so failure rates stay analyzable."""
        version_tables: dict[str, dict[str, str]] = {}
        rows = []
        for seq, _rid, s in self.samples(project, metric, run_id):
            if s.project_key not in version_tables:
                version_tables[s.project_key] = self._sha_to_version(s.project_key)
            version = version_tables[s.project_key].get(s.sha, "")
            rows.append((
                s.project_key, s.sha, version, s.metric_name,
                render_value(s.value) if s.value is not None else "",
                s.status, iso_z(s.recorded_at), s.recorded_at, seq,
            ))
        rows.sort(key=lambda r: (r[0], r[1], r[3], r[7], r[8]))
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([row[0], row[1], row[2], row[3], row[4], row[5], row[6]])
        return buf.getvalue()

    # -- portable dump ------------------------------------------------------------

    def dump_portable(self) -> str:
        projects = []
        for key in self.project_keys():
            doc = json.loads((self.path / "meta" / f"{key}.json").read_text(encoding="utf-8"))
            doc["key"] = key
            projects.append(doc)
        runs = []
        for run in self.runs():
            c = run.config
            runs.append({
                "run_id": run.run_id,
                "started_at": run.started_at,
                "closed": run.closed,
                "config": {
                    "repo_base": str(c.repo_base),
                    "no_compile": c.no_compile,
                    "project_filter": c.project_filter,
                    "sha_filter": c.sha_filter,
                    "timeout_seconds": c.timeout_seconds,
                    "verbosity": c.verbosity,
                },
            })
        samples = []
        for seq, rid, s in self._samples:
            samples.append({
                "seq": seq,
                "run": rid,
                "project": s.project_key,
                "sha": s.sha,
                "metric": s.metric_name,
                "value": s.value,
                "script": s.script_id,
                "status": s.status,
                "purity_violation": s.purity_violation,
                "recorded_at": iso_z(s.recorded_at),
            })
        doc = {
            "schema": DUMP_SCHEMA,
            "projects": projects,
            "runs": runs,
            "samples": samples,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_portable(document: str, path: Path) -> Store:
    """Materialize a dump into a fresh store directory at ``path``."""
    try:
        doc = json.loads(document)
    except ValueError as exc:
        raise MalformedDump(str(exc)) from exc
    if not isinstance(doc, dict) or "schema" not in doc:
        raise MalformedDump("document has no schema id")
    if doc["schema"] != DUMP_SCHEMA:
        raise SchemaVersionMismatch(f"expected {DUMP_SCHEMA}, got {doc['schema']!r}")
    try:
        projects = doc["projects"]
        runs = doc["runs"]
        samples = doc["samples"]
    except KeyError as exc:
        raise MalformedDump(f"missing collection {exc}") from exc

    store = Store(path, create=True)
    if store._samples or store._runs or store.project_keys():
        raise StorageError(f"{path} is not empty")
    try:
        for p in projects:
            meta = {k: p[k] for k in ("project", "issues", "versions", "mappings")}
            atomic_write(store.path / "meta" / f"{p['key']}.json",
                         json.dumps(meta, indent=2, sort_keys=True) + "\n")
        for r in runs:
            c = r["config"]
            config = RunConfig(
                repo_base=Path(c["repo_base"]),
                no_compile=c["no_compile"],
                project_filter=c["project_filter"],
                sha_filter=c["sha_filter"],
                timeout_seconds=c["timeout_seconds"],
                verbosity=c["verbosity"],
            )
            run = RunRecord(run_id=r["run_id"], config=config, started_at=r["started_at"])
            store._runs[run.run_id] = run
            store._append("runs.log", _run_to_block(run))
            if r["closed"]:
                store.close_run(run)
                run.closed = True
        for s in samples:
            sample = MetricSample(
                project_key=s["project"],
                sha=s["sha"],
                metric_name=s["metric"],
                value=s["value"],
                script_id=s["script"],
                status=s["status"],
                purity_violation=s["purity_violation"],
                recorded_at=parse_timestamp(s["recorded_at"]),
            )
            store._append("samples.log", _sample_to_block(sample, s["seq"], s["run"]))
            store._samples.append((s["seq"], s["run"], sample))
            if s["run"] in store._runs:
                store._runs[s["run"]].samples.append(sample)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDump(f"bad dump content: {exc!r}") from exc
    return store


# -- block/json codecs ---------------------------------------------------------


def _sample_to_block(sample: MetricSample, seq: int, run_id: str) -> Block:
    b = Block(kind="sample", key=str(seq))
    b.fields["run"] = run_id
    b.fields["project"] = sample.project_key
    b.fields["sha"] = sample.sha
    b.fields["metric"] = sample.metric_name
    b.fields["value"] = render_value(sample.value) if sample.value is not None else ""
    b.fields["script"] = sample.script_id
    b.fields["status"] = sample.status
    b.fields["purity"] = "true" if sample.purity_violation else "false"
    b.fields["recorded_at"] = iso_z(sample.recorded_at)
    return b


def _sample_from_block(block: Block) -> MetricSample:
    f = block.fields
    return MetricSample(
        project_key=f["project"],
        sha=f["sha"],
        metric_name=f["metric"],
        value=float(f["value"]) if f.get("value") else None,
        script_id=f["script"],
        status=f["status"],
        purity_violation=f.get("purity") == "true",
        recorded_at=parse_timestamp(f["recorded_at"]),
    )


def _run_to_block(run: RunRecord) -> Block:
    c = run.config
    b = Block(kind="run", key=run.run_id)
    b.fields["started_at"] = run.started_at
    b.fields["repo_base"] = str(c.repo_base)
    b.fields["no_compile"] = "true" if c.no_compile else "false"
    if c.project_filter:
        b.fields["project_filter"] = c.project_filter
    if c.sha_filter:
        b.fields["sha_filter"] = c.sha_filter
    b.fields["timeout_seconds"] = str(c.timeout_seconds)
    b.fields["verbosity"] = str(c.verbosity)
    return b


def _run_from_block(block: Block) -> RunRecord:
    f = block.fields
    config = RunConfig(
        repo_base=Path(f.get("repo_base", ".")),
        no_compile=f.get("no_compile") == "true",
        project_filter=f.get("project_filter"),
        sha_filter=f.get("sha_filter"),
        timeout_seconds=int(f.get("timeout_seconds", "300")),
        verbosity=int(f.get("verbosity", "1")),
    )
    return RunRecord(run_id=block.key, config=config, started_at=f.get("started_at", ""))


def _project_to_json(p: ProjectRecord) -> dict:
    return {
        "key": p.key,
        "repo_url": p.repo_url,
        "tracker_kind": p.tracker_kind,
        "tracker_base_url": p.tracker_base_url,
        "tracker_project_key": p.tracker_project_key,
        "prebuild_script": p.prebuild_script,
        "postbuild_script": p.postbuild_script,
        "cleanup_script": p.cleanup_script,
        "build_command": p.build_command,
        "extra": dict(p.extra),
    }


def _project_from_json(doc: dict | None) -> ProjectRecord | None:
    if doc is None:
        return None
    return ProjectRecord(
        key=doc["key"],
        repo_url=doc["repo_url"],
        tracker_kind=doc["tracker_kind"],
        tracker_base_url=doc["tracker_base_url"],
        tracker_project_key=doc["tracker_project_key"],
        prebuild_script=doc.get("prebuild_script"),
        postbuild_script=doc.get("postbuild_script"),
        cleanup_script=doc.get("cleanup_script"),
        build_command=doc["build_command"],
        extra=dict(doc.get("extra", {})),
    )


def _issue_to_json(i: Issue) -> dict:
    return {
        "id": i.id,
        "summary": i.summary,
        "created": iso_z(i.created),
        "resolved": iso_z(i.resolved) if i.resolved else None,
        "status": i.status,
        "affected_versions": list(i.affected_versions),
        "fix_versions": list(i.fix_versions),
    }


def _issue_from_json(doc: dict) -> Issue:
    return Issue(
        id=doc["id"],
        summary=doc["summary"],
        created=parse_timestamp(doc["created"]),
        resolved=parse_timestamp(doc["resolved"]) if doc.get("resolved") else None,
        status=doc["status"],
        affected_versions=list(doc["affected_versions"]),
        fix_versions=list(doc["fix_versions"]),
    )


def _version_to_json(v: TrackerVersion) -> dict:
    return {
        "name": v.name,
        "release_date": v.release_date.isoformat() if v.release_date else None,
        "released": v.released,
    }


def _version_from_json(doc: dict) -> TrackerVersion:
    return TrackerVersion(
        name=doc["name"],
        release_date=parse_date(doc["release_date"]) if doc.get("release_date") else None,
        released=doc["released"],
    )


def _mapping_to_json(m: RefMapping) -> dict:
    ref = None
    if m.ref is not None:
        ref = {"name": m.ref.name, "kind": m.ref.kind, "target_sha": m.ref.target_sha}
    return {"version_name": m.version_name, "ref": ref, "method": m.method, "score": m.score}


def _mapping_from_json(doc: dict) -> RefMapping:
    ref = None
    if doc.get("ref"):
        ref = Ref(name=doc["ref"]["name"], kind=doc["ref"]["kind"],
                  target_sha=doc["ref"]["target_sha"])
    return RefMapping(version_name=doc["version_name"], ref=ref,
                      method=doc["method"], score=doc["score"])
