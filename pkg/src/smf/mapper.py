"""Match bug-tracker version names to repository refs.

Resolution ladder, strongest first: exact name equality, normalized-token
equality, then a conservative fuzzy match (edit distance 1 on the normalized
strings). Ties prefer tags over branches, then the lexicographically smallest
ref name, so the result never depends on input order.
"""

from __future__ import annotations

from dataclasses import dataclass

from .trackers import TrackerVersion
from .vcs import Ref

SEPARATORS = ".-_"
# Leading noise stripped from names before tokenizing; longest match first.
PREFIXES = ("release", "rel", "v")

EXACT = "exact"
NORMALIZED = "normalized"
FUZZY = "fuzzy"
UNMATCHED = "unmatched"


@dataclass(frozen=True)
class RefMapping:
    version_name: str
    ref: Ref | None
    method: str
    score: float


def normalize(name: str, project_key: str) -> list[str]:
    """Reduce a version or ref name to comparison tokens.

    Lowercases, keeps only the last path segment, strips any leading project
    key / "release" / "rel" / "v" prefixes (and separators between them),
    then splits on ``.``, ``-`` and ``_``.
    """
    s = name.lower()
    s = s.rsplit("/", 1)[-1]
    prefixes = [project_key.lower()] if project_key else []
    prefixes += list(PREFIXES)
    while True:
        s = s.lstrip(SEPARATORS)
        for prefix in prefixes:
            if prefix and s.startswith(prefix):
                s = s[len(prefix):]
                break
        else:
            break
    tokens = [t for t in _split(s) if t]
    return tokens


def _split(s: str) -> list[str]:
    for sep in SEPARATORS[1:]:
        s = s.replace(sep, SEPARATORS[0])
    return s.split(SEPARATORS[0])


def _edit_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def _tiebreak(ref: Ref) -> tuple:
    # target_sha last: distinct refs can share a name (never within one repo,
    # but the choice must be order-free for any input)
    return (ref.kind != "tag", ref.name, ref.target_sha)


def map_versions(
    versions: list[TrackerVersion], refs: list[Ref], project_key: str
) -> list[RefMapping]:
    """One mapping per input version, in input order."""
    normalized_refs = [(ref, normalize(ref.name, project_key)) for ref in refs]
    return [
        _map_one(version.name, refs, normalized_refs, project_key)
        for version in versions
    ]


def _map_one(
    version_name: str,
    refs: list[Ref],
    normalized_refs: list[tuple[Ref, list[str]]],
    project_key: str,
) -> RefMapping:
    exact = [r for r in refs if r.name == version_name]
    if exact:
        return RefMapping(version_name, min(exact, key=_tiebreak), EXACT, 1.0)

    tokens = normalize(version_name, project_key)
    if tokens:
        same = [ref for ref, ref_tokens in normalized_refs if ref_tokens == tokens]
        if same:
            return RefMapping(version_name, min(same, key=_tiebreak), NORMALIZED, 1.0)

        joined = ".".join(tokens)
        best: tuple[float, tuple, Ref] | None = None
        for ref, ref_tokens in normalized_refs:
            if not ref_tokens:
                continue
            ref_joined = ".".join(ref_tokens)
            distance = _edit_distance(joined, ref_joined)
            if distance > 1:
                continue
            score = 1.0 - distance / max(len(joined), len(ref_joined))
            candidate = (-score, _tiebreak(ref), ref)
            if best is None or candidate[:2] < best[:2]:
                best = candidate
        if best is not None:
            return RefMapping(version_name, best[2], FUZZY, -best[0])

    return RefMapping(version_name, None, UNMATCHED, 0.0)
