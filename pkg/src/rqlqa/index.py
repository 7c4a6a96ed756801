"""Typed-entity store: inverted index, boolean retrieval, geo queries, and
embedding-based type resolution."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

EARTH_RADIUS_KM = 6371.0

DEFAULT_TYPE_ALIASES = {
    "hotel": "lodging",
    "hotels": "lodging",
    "place to stay": "lodging",
    "places to stay": "lodging",
    "accommodation": "lodging",
    "hostel": "lodging",
    "attraction": "point_of_interest",
    "attractions": "point_of_interest",
    "things to do": "point_of_interest",
    "sight": "point_of_interest",
    "sights": "point_of_interest",
}

DEFAULT_TYPE = "point_of_interest"


class DuplicateId(Exception):
    pass


class EmptyQuery(Exception):
    pass


def tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def load_stopwords(path=None) -> set[str]:
    if path is None:
        data = resources.files("rqlqa.data").joinpath("stopwords.txt").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            data = fh.read()
    return {line.strip() for line in data.splitlines() if line.strip()}


@dataclass(frozen=True)
class EntityRecord:
    id: str
    name: str
    kb_type: str
    city: str
    lat: float
    lon: float
    text: str
    rating: float | None = None

    def __post_init__(self):
        if not self.kb_type:
            raise ValueError(f"entity {self.id}: empty kb_type")
        if abs(self.lat) > 90 or abs(self.lon) > 180:
            raise ValueError(f"entity {self.id}: coordinates out of range")


def load_entities(path) -> list[EntityRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(
                EntityRecord(
                    id=obj["id"],
                    name=obj["name"],
                    kb_type=obj["kb_type"],
                    city=obj["city"],
                    lat=float(obj["lat"]),
                    lon=float(obj["lon"]),
                    rating=obj.get("rating"),
                    text=obj["text"],
                )
            )
    return records


@dataclass
class BooleanQuery:
    """Term-group query with strict, optional, and excluded groups.

    A group matches a document when at least one of its terms occurs.  MUST
    groups must all match, MUST_NOT groups must not, SHOULD groups only
    contribute to the score.
    """

    must: list[list[str]] = field(default_factory=list)
    should: list[list[str]] = field(default_factory=list)
    must_not: list[list[str]] = field(default_factory=list)
    kb_type: str | None = None
    city: str | None = None


INDEX_FORMAT_VERSION = "rqlqa-index-v1"


class EntityIndex:
    """Immutable inverted index over entity review text."""

    def __init__(self, records, stopwords, lemmas=None):
        self.stopwords = set(stopwords)
        self.records: dict[str, EntityRecord] = {}
        self.postings: dict[str, list[tuple[str, int]]] = {}
        self.doc_lengths: dict[str, int] = {}
        lemmas = lemmas or {}
        for rec in records:
            if rec.id in self.records:
                raise DuplicateId(rec.id)
            self.records[rec.id] = rec
        # Canonical id order makes the build independent of input order.
        for rid in sorted(self.records):
            rec = self.records[rid]
            terms = [
                lemmas.get(t, t)
                for t in tokenize(rec.text)
                if t not in self.stopwords
            ]
            self.doc_lengths[rid] = len(terms)
            counts: dict[str, int] = {}
            for term in terms:
                counts[term] = counts.get(term, 0) + 1
            for term in sorted(counts):
                self.postings.setdefault(term, []).append((rid, counts[term]))
        n = len(self.records)
        self.idf = {
            term: math.log(n / len(plist)) for term, plist in self.postings.items()
        }
        self.kb_types = sorted({r.kb_type for r in self.records.values()})
        self.cities = sorted({r.city.lower() for r in self.records.values() if r.city})

    # -- lookups -------------------------------------------------------------

    def term_freq(self, term: str, rid: str) -> int:
        for doc, tf in self.postings.get(term, ()):
            if doc == rid:
                return tf
        return 0

    def city_record(self, name: str, aliases: dict[str, str] | None = None) -> EntityRecord | None:
        """City entity matching a location phrase, lowercase exact match then
        alias table."""
        low = name.lower().strip()
        if aliases and low in aliases:
            low = aliases[low].lower()
        for rec in self.records.values():
            if rec.kb_type == "city" and rec.name.lower() == low:
                return rec
        return None

    # -- retrieval -----------------------------------------------------------

    def _group_terms(self, group: list[str]) -> list[str]:
        return [t for t in (w.lower() for w in group) if t not in self.stopwords]

    def _matches_group(self, rid: str, terms: list[str]) -> bool:
        return any(self.term_freq(t, rid) > 0 for t in terms)

    def boolean_search(self, query: BooleanQuery, k: int = 10) -> list[tuple[str, float]]:
        if not query.must and not query.should:
            raise EmptyQuery("query needs at least one MUST or SHOULD group")
        must = [self._group_terms(g) for g in query.must]
        should = [self._group_terms(g) for g in query.should]
        must_not = [self._group_terms(g) for g in query.must_not]
        must = [g for g in must if g]

        scored = []
        for rid in sorted(self.records):
            rec = self.records[rid]
            if query.kb_type is not None and rec.kb_type != query.kb_type:
                continue
            if query.city is not None and rec.city.lower() != query.city.lower():
                continue
            if any(not self._matches_group(rid, g) for g in must):
                continue
            if any(self._matches_group(rid, g) for g in must_not):
                continue
            score = 0.0
            matched = False
            for g in must + should:
                for term in g:
                    tf = self.term_freq(term, rid)
                    if tf > 0:
                        matched = True
                        score += math.log1p(tf) * self.idf.get(term, 0.0)
            if not must and not matched:
                continue  # SHOULD-only query: require at least one hit
            scored.append((rid, score))
        scored.sort(key=lambda s: (-s[1], s[0]))
        return scored[:k]

    def geo_within(
        self, lat: float, lon: float, radius_km: float, kb_type: str | None = None
    ) -> list[tuple[str, float]]:
        """Entities within a great-circle radius, nearest first."""
        if radius_km <= 0:
            raise ValueError("radius must be positive")
        hits = []
        for rid in sorted(self.records):
            rec = self.records[rid]
            if kb_type is not None and rec.kb_type != kb_type:
                continue
            d = haversine_km(lat, lon, rec.lat, rec.lon)
            if d <= radius_km:
                hits.append((rid, d))
        hits.sort(key=lambda h: (h[1], h[0]))
        return hits

    # -- persistence ---------------------------------------------------------

    def save(self, path):
        payload = {
            "version": INDEX_FORMAT_VERSION,
            "stopwords": sorted(self.stopwords),
            "records": [
                {
                    "id": r.id,
                    "name": r.name,
                    "kb_type": r.kb_type,
                    "city": r.city,
                    "lat": r.lat,
                    "lon": r.lon,
                    "rating": r.rating,
                    "text": r.text,
                }
                for r in self.records.values()
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @staticmethod
    def load(path) -> "EntityIndex":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != INDEX_FORMAT_VERSION:
            raise ValueError(
                f"unsupported index version {payload.get('version')!r}, "
                f"expected {INDEX_FORMAT_VERSION}"
            )
        records = [EntityRecord(**obj) for obj in payload["records"]]
        return EntityIndex(records, payload["stopwords"])


def build_index(records, stopwords, lemmas=None) -> EntityIndex:
    return EntityIndex(records, stopwords, lemmas=lemmas)


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


# ---------------------------------------------------------------------------
# Embeddings and type resolution


def load_vectors(path) -> dict[str, np.ndarray]:
    """Plain-text vector table; line 1 declares the dimension."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        dim = int(header)
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"line {lineno}: expected {dim} components")
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
    return vectors


def phrase_vector(phrase: str, vectors: dict[str, np.ndarray]) -> np.ndarray | None:
    vecs = [vectors[t] for t in tokenize(phrase) if t in vectors]
    if not vecs:
        return None
    return np.mean(vecs, axis=0)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def resolve_type(
    phrase: str,
    kb_types,
    vectors: dict[str, np.ndarray] | None = None,
    aliases: dict[str, str] | None = None,
) -> str:
    """Best knowledge-base type for a textual type phrase.

    Fallback chain: exact string match, alias table, cosine similarity of
    mean word vectors, then the default type.  Total: always returns a type
    from the known set when that set is non-empty.
    """
    kb_types = sorted(set(kb_types))
    aliases = DEFAULT_TYPE_ALIASES if aliases is None else aliases
    low = phrase.lower().strip()
    if low in kb_types:
        return low
    normalized = low.replace(" ", "_")
    if normalized in kb_types:
        return normalized
    alias = aliases.get(low)
    if alias in kb_types:
        return alias
    if vectors:
        pv = phrase_vector(low, vectors)
        if pv is not None:
            best, best_sim = None, 0.0
            for kb in kb_types:
                kv = phrase_vector(kb.replace("_", " "), vectors)
                if kv is None:
                    continue
                sim = _cosine(pv, kv)
                if sim > best_sim:
                    best, best_sim = kb, sim
            if best is not None:
                return best
    if DEFAULT_TYPE in kb_types or not kb_types:
        return DEFAULT_TYPE
    return kb_types[0]
