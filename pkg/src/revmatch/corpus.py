"""Paper, reviewer, judgment and search-log records with JSONL IO."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed input data; the message names the file and line."""


@dataclass(frozen=True)
class FieldTag:
    name: str
    layer: int


@dataclass
class CorpusRecord:
    id: str
    title: str
    abstract: str = ""
    year: int | None = None
    venue: str | None = None
    authors: list[str] = field(default_factory=list)
    fields: list[FieldTag] = field(default_factory=list)
    references: list[str] = field(default_factory=list)

    @property
    def text(self) -> str:
        return f"{self.title} {self.abstract}".strip()

    def fine_fields(self, min_layer: int = 3) -> set[str]:
        return {f.name for f in self.fields if f.layer >= min_layer}

    def to_json(self) -> dict[str, Any]:
        out = asdict(self)
        out["fields"] = [{"name": f.name, "layer": f.layer} for f in self.fields]
        return out


@dataclass(frozen=True)
class Reviewer:
    reviewer_id: str
    paper_ids: tuple[str, ...]


@dataclass(frozen=True)
class Judgment:
    paper_id: str
    reviewer_id: str
    score: int


@dataclass
class SearchQuery:
    query_id: str
    query: str
    results: list[tuple[str, int]]  # (doc_id, click score)


# ---------------------------------------------------------------------------
# JSONL plumbing
# ---------------------------------------------------------------------------

def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise DataError(f"{where}: missing required key '{key}'")
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise DataError(f"{where}: key '{key}' has invalid value {value!r}")
    return value


def _optional(obj: dict, key: str, kind, default, where: str):
    value = obj.get(key, default)
    if value is None:
        return default
    if not isinstance(value, kind) or isinstance(value, bool):
        raise DataError(f"{where}: key '{key}' has invalid value {value!r}")
    return value


_RECORD_KEYS = {"id", "title", "abstract", "year", "venue", "authors", "fields", "references"}


def _parse_record(obj: dict, where: str) -> CorpusRecord:
    unknown = set(obj) - _RECORD_KEYS
    if unknown:
        log.warning("%s: ignoring unknown keys %s", where, sorted(unknown))
    year = _optional(obj, "year", int, None, where)
    if year is not None and not 1000 <= year <= 9999:
        raise DataError(f"{where}: key 'year' must be a 4-digit integer, got {year!r}")
    tags = []
    for raw in _optional(obj, "fields", list, [], where):
        if not isinstance(raw, dict):
            raise DataError(f"{where}: key 'fields' entries must be objects")
        tags.append(FieldTag(_require(raw, "name", str, where), _require(raw, "layer", int, where)))
    authors = _optional(obj, "authors", list, [], where)
    refs = _optional(obj, "references", list, [], where)
    for key, seq in (("authors", authors), ("references", refs)):
        if not all(isinstance(x, str) for x in seq):
            raise DataError(f"{where}: key '{key}' must be a list of strings")
    return CorpusRecord(
        id=_require(obj, "id", str, where),
        title=_require(obj, "title", str, where),
        abstract=_optional(obj, "abstract", str, "", where),
        year=year,
        venue=_optional(obj, "venue", str, None, where),
        authors=list(authors),
        fields=tags,
        references=list(refs),
    )


def load_corpus(path) -> list[CorpusRecord]:
    records, seen = [], set()
    for lineno, obj in iter_jsonl(path):
        where = f"{path}:{lineno}"
        rec = _parse_record(obj, where)
        if rec.id in seen:
            raise DataError(f"{where}: duplicate id {rec.id!r} (key 'id')")
        seen.add(rec.id)
        records.append(rec)
    return records


def save_corpus(path, records: Iterable[CorpusRecord]) -> None:
    write_jsonl(path, (r.to_json() for r in records))


def _load_rows(path, parse: Callable[[dict, str], Any]) -> list:
    return [parse(obj, f"{path}:{lineno}") for lineno, obj in iter_jsonl(path)]


def load_reviewers(path) -> list[Reviewer]:
    def parse(obj, where):
        ids = _require(obj, "paper_ids", list, where)
        if not all(isinstance(x, str) for x in ids):
            raise DataError(f"{where}: key 'paper_ids' must be a list of strings")
        return Reviewer(_require(obj, "reviewer_id", str, where), tuple(ids))

    return _load_rows(path, parse)


def save_reviewers(path, reviewers: Iterable[Reviewer]) -> None:
    write_jsonl(path, ({"reviewer_id": r.reviewer_id, "paper_ids": list(r.paper_ids)}
                       for r in reviewers))


def load_judgments(path) -> list[Judgment]:
    seen = set()

    def parse(obj, where):
        score = _require(obj, "score", int, where)
        if not 0 <= score <= 3:
            raise DataError(f"{where}: key 'score' must be in 0..3, got {score}")
        j = Judgment(_require(obj, "paper_id", str, where),
                     _require(obj, "reviewer_id", str, where), score)
        if (j.paper_id, j.reviewer_id) in seen:
            raise DataError(f"{where}: duplicate (paper_id, reviewer_id) pair")
        seen.add((j.paper_id, j.reviewer_id))
        return j

    return _load_rows(path, parse)


def save_judgments(path, judgments: Iterable[Judgment]) -> None:
    write_jsonl(path, (asdict(j) for j in judgments))


def load_search_log(path) -> list[SearchQuery]:
    def parse(obj, where):
        results = []
        for item in _require(obj, "results", list, where):
            if not isinstance(item, dict):
                raise DataError(f"{where}: key 'results' entries must be objects")
            score = _require(item, "score", int, where)
            if not 0 <= score <= 14:
                raise DataError(f"{where}: key 'score' must be in 0..14, got {score}")
            results.append((_require(item, "doc_id", str, where), score))
        return SearchQuery(_require(obj, "query_id", str, where),
                           _require(obj, "query", str, where), results)

    return _load_rows(path, parse)


def save_search_log(path, queries: Iterable[SearchQuery]) -> None:
    write_jsonl(path, ({"query_id": q.query_id, "query": q.query,
                        "results": [{"doc_id": d, "score": s} for d, s in q.results]}
                       for q in queries))


def citation_graph(records: Iterable[CorpusRecord]) -> dict[str, set[str]]:
    return {r.id: set(r.references) for r in records}
