"""Join per-version defect counts with metric values and rank-correlate.

Spearman (average ranks for ties, computed as the Pearson correlation of the
rank vectors) is used because metric scales are arbitrary; only the ordinal
relationship to defect counts is defensible. Defects are counted against the
versions an issue *affected*, not the versions it was fixed in.
"""

from __future__ import annotations

import io
import csv
import logging
import math
from dataclasses import dataclass

from .errors import ConstantInput, InsufficientData
from .runner import render_value
from .trackers import Issue, TrackerVersion

log = logging.getLogger(__name__)


def bugs_per_version(
    issues: list[Issue], versions: list[TrackerVersion]
) -> dict[str, int]:
    """Count, per version name, the issues whose affected_versions name it.

    An issue affecting k versions counts once in each; versions with no
    issues map to 0. Issues naming versions absent from the tracker's list
    are ignored for counting and logged as warnings.
    """
    counts = {v.name: 0 for v in versions}
    for issue in issues:
        for name in issue.affected_versions:
            if name in counts:
                counts[name] += 1
            else:
                log.warning("issue %s affects unknown version %r", issue.id, name)
    return counts


def _ranks(values: list[float]) -> list[float]:
    """Average ranks (1-based); tied values share the mean of their spots."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def _pearson(xs: list[float], ys: list[float]) -> float:
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    cov = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = math.fsum((x - mx) ** 2 for x in xs)
    vy = math.fsum((y - my) ** 2 for y in ys)
    return cov / math.sqrt(vx * vy)


def spearman(xs: list[float], ys: list[float]) -> float:
    """Rank correlation in [-1, 1].

    Raises InsufficientData for fewer than 3 paired observations or length
    mismatch, ConstantInput when either side has no variation.
    """
    if len(xs) != len(ys) or len(xs) < 3:
        raise InsufficientData(f"need >= 3 paired values, got {len(xs)}/{len(ys)}")
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        raise ConstantInput("correlation is undefined for constant input")
    rho = _pearson(_ranks([float(x) for x in xs]), _ranks([float(y) for y in ys]))
    return max(-1.0, min(1.0, rho))


@dataclass(frozen=True)
class MetricCorrelation:
    metric: str
    n: int
    rho: float | None
    reason: str | None = None


def correlate_report(store, project_key: str) -> list[MetricCorrelation]:
    """Per-metric rank correlation between values and version bug counts.

    Sample values are joined to versions through the stored ref mappings;
    the most recently recorded ok sample wins per (version, metric). Metrics
    that cannot be correlated are still listed, with the reason.
    """
    data = store.project_data(project_key)
    counts = bugs_per_version(data["issues"], data["versions"])
    sha_to_version: dict[str, str] = {}
    for mapping in data["mappings"]:
        if mapping.ref is None:
            continue
        sha = mapping.ref.target_sha
        if sha not in sha_to_version or mapping.version_name < sha_to_version[sha]:
            sha_to_version[sha] = mapping.version_name

    per_metric: dict[str, dict[str, float]] = {}
    for _seq, _rid, sample in store.samples(project=project_key):
        if sample.status != "ok" or sample.value is None:
            continue
        version = sha_to_version.get(sample.sha)
        if version is None or version not in counts:
            continue
        per_metric.setdefault(sample.metric_name, {})[version] = sample.value

    report = []
    for metric in sorted(per_metric):
        values = per_metric[metric]
        joined = sorted(values)
        xs = [values[v] for v in joined]
        ys = [float(counts[v]) for v in joined]
        try:
            rho = spearman(xs, ys)
            report.append(MetricCorrelation(metric=metric, n=len(xs), rho=rho))
        except InsufficientData:
            report.append(MetricCorrelation(metric=metric, n=len(xs), rho=None,
                                            reason="InsufficientData"))
        except ConstantInput:
            report.append(MetricCorrelation(metric=metric, n=len(xs), rho=None,
                                            reason="ConstantInput"))
    return report


def report_csv(report: list[MetricCorrelation]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "n", "rho"])
    for row in report:
        writer.writerow([
            row.metric, row.n,
            render_value(row.rho) if row.rho is not None else row.reason,
        ])
    return buf.getvalue()


def report_text(report: list[MetricCorrelation]) -> str:
    if not report:
        return "no correlatable metrics\n"
    width = max(len(r.metric) for r in report)
    lines = []
    for r in report:
        if r.rho is not None:
            lines.append(f"{r.metric:<{width}}  n={r.n:<4d} rho={r.rho:+.4f}")
        else:
            lines.append(f"{r.metric:<{width}}  n={r.n:<4d} {r.reason}")
    return "\n".join(lines) + "\n"
