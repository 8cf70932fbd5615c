"""Parse tweet and census inputs, resolve locations and apply corpus filters.

Tweets arrive as newline-delimited JSON with the usual public v1.1 field
layout (``coordinates.coordinates``, ``place.bounding_box``, ``source`` and
the reply/quote id fields).  Census population arrives as a GeoJSON
FeatureCollection with a numeric ``population`` property per feature.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import DataError
from .geometry import GeoPoint, LonLatRect, MultiPolygon, geometry_from_geojson

# place_type values too coarse to locate a tweet
_IMPRECISE_PLACE_TYPES = {"admin", "country"}
_KNOWN_PLACE_TYPES = {"poi", "neighborhood", "city", "admin", "country"}


@dataclass(slots=True)
class TweetRecord:
    tweet_id: str
    user_id: str
    geo: Optional[GeoPoint] = None
    place_type: Optional[str] = None
    place_box: Optional[LonLatRect] = None
    source: str = ""
    in_reply_to_status_id: Optional[str] = None
    in_reply_to_user_id: Optional[str] = None
    quoted_status_id: Optional[str] = None


@dataclass(slots=True, frozen=True)
class LocatedRecord:
    """A tweet resolved to a point or a lon/lat box inside the study rect."""

    tweet_id: str
    user_id: str
    point: Optional[tuple] = None   # (lon, lat)
    box: Optional[LonLatRect] = None
    tag_kind: str = "geo"           # "geo" | "place"
    source: str = ""
    is_reply: bool = False
    is_quote: bool = False


@dataclass
class PopulationUnit:
    unit_id: str
    geometry: MultiPolygon
    population: float
    population_18_35: Optional[float] = None


@dataclass
class ParseDiagnostics:
    parsed: int = 0
    skipped: int = 0
    reasons: Counter = field(default_factory=Counter)


@dataclass
class CorpusStats:
    total_records: int = 0
    located_geo: int = 0
    located_place: int = 0
    discarded_admin_country: int = 0
    discarded_outside: int = 0
    unlocatable: int = 0
    per_source: Counter = field(default_factory=Counter)
    reply_count: int = 0
    quote_count: int = 0
    reply_or_quote_count: int = 0

    def to_dict(self) -> dict:
        return {
            "total_records": self.total_records,
            "located_geo": self.located_geo,
            "located_place": self.located_place,
            "discarded_admin_country": self.discarded_admin_country,
            "discarded_outside": self.discarded_outside,
            "unlocatable": self.unlocatable,
            "per_source": dict(self.per_source),
            "reply_count": self.reply_count,
            "quote_count": self.quote_count,
            "reply_or_quote_count": self.reply_or_quote_count,
        }


def _envelope(coords) -> LonLatRect:
    """Envelope of an arbitrarily nested GeoJSON coordinate array."""
    # fast path: the usual Polygon nesting [[[lon, lat], ...]]
    if (isinstance(coords, list) and len(coords) == 1
            and isinstance(coords[0], list) and coords[0]
            and all(isinstance(pt, list) and len(pt) >= 2
                    and isinstance(pt[0], (int, float))
                    and isinstance(pt[1], (int, float)) for pt in coords[0])):
        lons = [float(pt[0]) for pt in coords[0]]
        lats = [float(pt[1]) for pt in coords[0]]
        return LonLatRect(min(lons), min(lats), max(lons), max(lats))

    lons = []
    lats = []

    def walk(node):
        if (isinstance(node, (list, tuple)) and len(node) >= 2
                and all(isinstance(v, (int, float)) for v in node[:2])):
            lons.append(float(node[0]))
            lats.append(float(node[1]))
        elif isinstance(node, (list, tuple)):
            for child in node:
                walk(child)

    walk(coords)
    if not lons:
        raise ValueError("empty bounding box coordinates")
    return LonLatRect(min(lons), min(lats), max(lons), max(lats))


def _record_from_json(obj: dict) -> TweetRecord:
    tweet_id = obj.get("id_str") or str(obj.get("id", ""))
    user = obj.get("user") or {}
    user_id = user.get("id_str") or str(user.get("id", ""))
    if not tweet_id or not user_id:
        raise ValueError("missing id_str or user.id_str")

    geo = None
    coords = obj.get("coordinates")
    if isinstance(coords, dict) and coords.get("coordinates"):
        lon, lat = coords["coordinates"][:2]
        geo = GeoPoint(float(lon), float(lat))

    place_type = None
    place_box = None
    place = obj.get("place")
    if isinstance(place, dict):
        place_type = place.get("place_type")
        bbox = place.get("bounding_box")
        if isinstance(bbox, dict) and bbox.get("coordinates"):
            place_box = _envelope(bbox["coordinates"])

    quoted = obj.get("quoted_status_id_str")
    if not quoted:
        qs = obj.get("quoted_status")
        if isinstance(qs, dict):
            quoted = qs.get("id_str")

    return TweetRecord(
        tweet_id=tweet_id,
        user_id=user_id,
        geo=geo,
        place_type=place_type,
        place_box=place_box,
        source=obj.get("source") or "",
        in_reply_to_status_id=obj.get("in_reply_to_status_id_str") or None,
        in_reply_to_user_id=obj.get("in_reply_to_user_id_str") or None,
        quoted_status_id=quoted or None,
    )


def parse_tweets(source) -> tuple[list[TweetRecord], ParseDiagnostics]:
    """Parse newline-delimited JSON tweets from a path or an iterable of lines.

    Malformed records are skipped and counted in the diagnostics; they never
    abort the stream.
    """
    if isinstance(source, (str, Path)):
        try:
            lines: Iterable[str] = Path(source).read_text().splitlines()
        except OSError as exc:
            raise DataError(f"cannot read tweets from {source}: {exc}") from exc
    else:
        lines = source

    diags = ParseDiagnostics()
    records: list[TweetRecord] = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            records.append(_record_from_json(obj))
            diags.parsed += 1
        except (ValueError, KeyError, TypeError) as exc:
            diags.skipped += 1
            diags.reasons[type(exc).__name__] += 1
    return records, diags


def locate(t: TweetRecord, study: LonLatRect) -> tuple[Optional[LocatedRecord], str]:
    """Resolve a tweet to a location inside the study rect.

    A geo tag inside the study rect wins over any place tag.  Place tags of
    type country/admin are too coarse and discarded; place boxes must be
    fully contained in the study rect.  Zero-extent place boxes become
    points.  Returns (record, reason); record is None when discarded and
    the reason is one of located_geo / located_place /
    insufficient_precision / outside / unlocatable.
    """
    common = dict(tweet_id=t.tweet_id, user_id=t.user_id, source=t.source,
                  is_reply=bool(t.in_reply_to_status_id or t.in_reply_to_user_id),
                  is_quote=bool(t.quoted_status_id))

    if t.geo is not None and study.contains_point(t.geo.lon, t.geo.lat):
        return LocatedRecord(point=(t.geo.lon, t.geo.lat), tag_kind="geo",
                             **common), "located_geo"

    if t.place_box is not None:
        if t.place_type in _IMPRECISE_PLACE_TYPES:
            return None, "insufficient_precision"
        if study.contains_rect(t.place_box):
            box = t.place_box
            if box.is_degenerate():
                return LocatedRecord(point=(box.min_lon, box.min_lat),
                                     tag_kind="place", **common), "located_place"
            return LocatedRecord(box=box, tag_kind="place", **common), "located_place"
        return None, "outside"

    if t.geo is not None:
        return None, "outside"
    return None, "unlocatable"


def corpus_stats(tweets: Iterable[TweetRecord], study: LonLatRect
                 ) -> tuple[CorpusStats, list[LocatedRecord]]:
    """Locate every tweet and tally the partition plus per-source and
    reply/quote counts over the located records."""
    stats = CorpusStats()
    located: list[LocatedRecord] = []
    for t in tweets:
        stats.total_records += 1
        rec, reason = locate(t, study)
        if rec is not None:
            located.append(rec)
            stats.per_source[rec.source] += 1
            if rec.is_reply:
                stats.reply_count += 1
            if rec.is_quote:
                stats.quote_count += 1
            if rec.is_reply or rec.is_quote:
                stats.reply_or_quote_count += 1
            if reason == "located_geo":
                stats.located_geo += 1
            else:
                stats.located_place += 1
        elif reason == "insufficient_precision":
            stats.discarded_admin_country += 1
        elif reason == "outside":
            stats.discarded_outside += 1
        else:
            stats.unlocatable += 1
    return stats, located


def filter_bots(records: list[LocatedRecord], threshold_fraction: float = 0.01
                ) -> tuple[list[LocatedRecord], list[str]]:
    """Drop every record of users whose share of the corpus strictly exceeds
    the threshold.

    The threshold is computed once against the pre-filter total (single
    pass, no re-thresholding), so the filter is idempotent.
    """
    if not 0.0 < threshold_fraction <= 1.0:
        raise ValueError("threshold_fraction must be in (0, 1]")
    counts = Counter(r.user_id for r in records)
    threshold = threshold_fraction * len(records)
    removed = sorted(u for u, c in counts.items() if c > threshold)
    removed_set = set(removed)
    kept = [r for r in records if r.user_id not in removed_set]
    return kept, removed


def filter_min_tweets(records: list[LocatedRecord], min_count: int = 10
                      ) -> list[LocatedRecord]:
    """Keep only records of users with at least ``min_count`` located records."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(r.user_id for r in records)
    return [r for r in records if counts[r.user_id] >= min_count]


def source_ranking(records: list[LocatedRecord], k: int
                   ) -> list[tuple[str, int, float]]:
    """Top-k sources by record count; proportions are of the whole corpus.

    Ties are broken lexicographically by source string.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    total = len(records)
    counts = Counter(r.source for r in records)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(s, c, c / total) for s, c in ranked[:k]]


def reply_quote_stats(records: list[LocatedRecord]
                      ) -> tuple[int, int, Optional[float]]:
    """Counts of replies and quotes plus the fraction of records that are
    either (a record that is both counts once in the union)."""
    replies = sum(1 for r in records if r.is_reply)
    quotes = sum(1 for r in records if r.is_quote)
    if not records:
        return 0, 0, None
    union = sum(1 for r in records if r.is_reply or r.is_quote)
    return replies, quotes, union / len(records)


def parse_population(feature_collection: dict
                     ) -> tuple[list[PopulationUnit], ParseDiagnostics]:
    """Convert a GeoJSON FeatureCollection to population units.

    Features with missing, non-numeric or negative population are skipped
    with a diagnostic.
    """
    diags = ParseDiagnostics()
    units: list[PopulationUnit] = []
    features = feature_collection.get("features")
    if features is None:
        raise DataError("population input is not a FeatureCollection")
    for idx, feat in enumerate(features):
        props = feat.get("properties") or {}
        code = str(props.get("code", idx))
        pop = props.get("population")
        if not isinstance(pop, (int, float)) or isinstance(pop, bool) or pop < 0:
            diags.skipped += 1
            diags.reasons["bad_population"] += 1
            continue
        youth = props.get("population_18_35")
        if youth is not None and (not isinstance(youth, (int, float))
                                  or isinstance(youth, bool) or youth < 0):
            diags.skipped += 1
            diags.reasons["bad_population_18_35"] += 1
            continue
        try:
            geom = geometry_from_geojson(feat["geometry"])
        except (KeyError, ValueError) as exc:
            diags.skipped += 1
            diags.reasons["bad_geometry"] += 1
            continue
        units.append(PopulationUnit(code, geom, float(pop),
                                    None if youth is None else float(youth)))
        diags.parsed += 1
    return units, diags
