"""Synthetic corpora and population layers with known ground-truth exponents.

The generator inverts the analysis: per generation cell it draws a lognormal
population density P, derives user and tweet counts from U = B * P^beta and
T = C * U^gamma with lognormal noise, and emits the exact tweet JSONL and
population GeoJSON formats the ingest module consumes.  Identical configs
produce byte-identical outputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import LonLatRect, spherical_rect_area
from .validation import mix_seed

DEFAULT_STUDY = LonLatRect(-5.8, 49.9, -1.2, 52.2)

# stream tags so population / activity / bots draw independent seeds
_POP_STREAM = 0x506F50
_ACT_STREAM = 0x414354
_BOT_STREAM = 0x424F54

_SOURCES = ("app_alpha", "app_beta", "app_gamma")
_SOURCE_WEIGHTS = (0.6, 0.25, 0.15)


@dataclass(frozen=True)
class SynthConfig:
    study: LonLatRect = DEFAULT_STUDY
    x_gen: int = 40
    beta_true: float = 1.2
    gamma_true: float = 1.35
    b_true: float = 1.0
    c_true: float = 1.0
    noise_dex: float = 0.1
    pop_log10_mean: float = 1.5
    pop_log10_sigma: float = 0.8
    seed: int = 0
    emit_boxes_fraction: float = 0.0
    commuter_fraction: float = 0.0   # share of users whose tweets split across two cells

    def __post_init__(self) -> None:
        if self.beta_true <= 0 or self.gamma_true <= 0:
            raise ValueError("exponents must be > 0")
        if self.b_true <= 0 or self.c_true <= 0:
            raise ValueError("prefactors must be > 0")
        if not 0.0 <= self.emit_boxes_fraction <= 1.0:
            raise ValueError("emit_boxes_fraction must be in [0, 1]")
        if not 0.0 <= self.commuter_fraction <= 1.0:
            raise ValueError("commuter_fraction must be in [0, 1]")


@dataclass
class GroundTruth:
    config: SynthConfig
    cell_area: np.ndarray        # km^2, (X, X)
    p_density: np.ndarray        # persons/km^2
    population: np.ndarray       # int persons per cell
    youth: np.ndarray            # int persons 18-35 per cell
    n_u: Optional[np.ndarray] = None  # int users per cell
    n_t: Optional[np.ndarray] = None  # int tweets landing per cell

    @property
    def total_tweets(self) -> int:
        return int(self.n_t.sum()) if self.n_t is not None else 0

    @property
    def total_users(self) -> int:
        return int(self.n_u.sum()) if self.n_u is not None else 0

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "config": {
                "study": [cfg.study.min_lon, cfg.study.min_lat,
                          cfg.study.max_lon, cfg.study.max_lat],
                "x_gen": cfg.x_gen,
                "beta_true": cfg.beta_true,
                "gamma_true": cfg.gamma_true,
                "b_true": cfg.b_true,
                "c_true": cfg.c_true,
                "noise_dex": cfg.noise_dex,
                "pop_log10_mean": cfg.pop_log10_mean,
                "pop_log10_sigma": cfg.pop_log10_sigma,
                "seed": cfg.seed,
                "emit_boxes_fraction": cfg.emit_boxes_fraction,
                "commuter_fraction": cfg.commuter_fraction,
            },
            "population": self.population.astype(int).tolist(),
            "youth": self.youth.astype(int).tolist(),
            "n_u": None if self.n_u is None else self.n_u.astype(int).tolist(),
            "n_t": None if self.n_t is None else self.n_t.astype(int).tolist(),
        }


def _cell_edges(config: SynthConfig):
    s = config.study
    lon_edges = np.linspace(s.min_lon, s.max_lon, config.x_gen + 1)
    lat_edges = np.linspace(s.min_lat, s.max_lat, config.x_gen + 1)
    return lon_edges, lat_edges


def _cell_rect(config: SynthConfig, i: int, j: int) -> LonLatRect:
    lon_edges, lat_edges = _cell_edges(config)
    return LonLatRect(lon_edges[i], lat_edges[j], lon_edges[i + 1], lat_edges[j + 1])


def youth_share(p_density: float) -> float:
    """Share of residents aged 18-35; rises with log density so the youth
    fit has a recoverable superlinear exponent.  Purely synthetic."""
    return min(max(0.2 + 0.05 * math.log10(1.0 + p_density), 0.0), 0.6)


def gen_population(config: SynthConfig) -> tuple[dict, GroundTruth]:
    """Draw per-cell lognormal population densities and emit one GeoJSON
    feature (the cell rectangle) per cell."""
    x = config.x_gen
    lon_edges, lat_edges = _cell_edges(config)
    rng = np.random.default_rng(mix_seed(config.seed, _POP_STREAM))

    cell_area = np.zeros((x, x))
    p_density = np.zeros((x, x))
    population = np.zeros((x, x), dtype=np.int64)
    youth = np.zeros((x, x), dtype=np.int64)
    features = []
    for i in range(x):
        for j in range(x):
            rect = LonLatRect(lon_edges[i], lat_edges[j],
                              lon_edges[i + 1], lat_edges[j + 1])
            area = spherical_rect_area(rect)
            p = 10.0 ** rng.normal(config.pop_log10_mean, config.pop_log10_sigma)
            pop = round(p * area)
            y = round(youth_share(p) * pop)
            cell_area[i, j] = area
            p_density[i, j] = p
            population[i, j] = pop
            youth[i, j] = y
            ring = [[lon_edges[i], lat_edges[j]], [lon_edges[i + 1], lat_edges[j]],
                    [lon_edges[i + 1], lat_edges[j + 1]],
                    [lon_edges[i], lat_edges[j + 1]], [lon_edges[i], lat_edges[j]]]
            features.append({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "code": f"cell_{i}_{j}",
                    "population": int(pop),
                    "population_18_35": int(y),
                },
            })
    fc = {"type": "FeatureCollection", "features": features}
    return fc, GroundTruth(config, cell_area, p_density, population, youth)


def _point_record(tweet_id: str, user_id: str, lon: float, lat: float,
                  source: str) -> dict:
    # A point place arrives as a zero-area bounding box, like the API emits.
    corner = [round(lon, 7), round(lat, 7)]
    return {
        "id_str": tweet_id,
        "user": {"id_str": user_id},
        "place": {
            "place_type": "city",
            "bounding_box": {"type": "Polygon",
                             "coordinates": [[corner, corner, corner, corner]]},
        },
        "source": source,
    }


def _box_record(tweet_id: str, user_id: str, box: LonLatRect, source: str) -> dict:
    coords = [[round(box.min_lon, 7), round(box.min_lat, 7)],
              [round(box.max_lon, 7), round(box.min_lat, 7)],
              [round(box.max_lon, 7), round(box.max_lat, 7)],
              [round(box.min_lon, 7), round(box.max_lat, 7)]]
    return {
        "id_str": tweet_id,
        "user": {"id_str": user_id},
        "place": {
            "place_type": "city",
            "bounding_box": {"type": "Polygon", "coordinates": [coords]},
        },
        "source": source,
    }


def gen_activity(config: SynthConfig, gt: GroundTruth) -> list[dict]:
    """Generate tweet records cell by cell, completing the ground truth.

    Per cell: N_u = round(A * B * P^beta * 10^eps), N_t = round(A * C *
    (N_u/A)^gamma * 10^eps), each with eps ~ Normal(0, noise_dex).  Tweets
    are spread over users multinomially with every user getting at least
    one; cells where N_t < N_u reduce N_u to N_t.  Users are cell-local
    unless commuter_fraction moves half a user's tweets to the next cell.
    """
    x = config.x_gen
    lon_edges, lat_edges = _cell_edges(config)
    n_u = np.zeros((x, x), dtype=np.int64)
    n_t = np.zeros((x, x), dtype=np.int64)
    records: list[dict] = []
    tweet_seq = 0

    for i in range(x):
        for j in range(x):
            rng = np.random.default_rng(
                mix_seed(mix_seed(config.seed, _ACT_STREAM), i * x + j))
            rect = LonLatRect(lon_edges[i], lat_edges[j],
                              lon_edges[i + 1], lat_edges[j + 1])
            area = gt.cell_area[i, j]
            p = gt.population[i, j] / area
            if p <= 0:
                continue
            eps_u = rng.normal(0.0, config.noise_dex) if config.noise_dex > 0 else 0.0
            eps_t = rng.normal(0.0, config.noise_dex) if config.noise_dex > 0 else 0.0
            users = int(round(area * config.b_true * p ** config.beta_true
                              * 10.0 ** eps_u))
            if users <= 0:
                continue
            u_density = users / area
            tweets = int(round(area * config.c_true
                               * u_density ** config.gamma_true * 10.0 ** eps_t))
            if tweets < users:
                users = tweets
            if users <= 0:
                continue
            # every user gets one tweet, the surplus is multinomial
            counts = np.ones(users, dtype=np.int64)
            if tweets > users:
                counts += rng.multinomial(tweets - users, np.full(users, 1.0 / users))
            total = int(counts.sum())

            neighbor = None
            if config.commuter_fraction > 0 and i + 1 < x:
                neighbor = LonLatRect(lon_edges[i + 1], lat_edges[j],
                                      lon_edges[i + 2], lat_edges[j + 1])

            user_of_tweet = np.repeat(np.arange(users), counts)
            starts = np.cumsum(counts) - counts
            within = np.arange(total) - np.repeat(starts, counts)
            if neighbor is not None:
                commuter = rng.uniform(size=users) < config.commuter_fraction
                # commuters place their odd-indexed tweets in the adjacent cell
                away = commuter[user_of_tweet] & (within % 2 == 1)
            else:
                away = np.zeros(total, dtype=bool)

            # margin keeps coordinates inside the cell after 7-decimal rounding
            m_lon = max(1e-6, rect.width * 1e-6)
            m_lat = max(1e-6, rect.height * 1e-6)
            u_lon = rng.uniform(size=total)
            u_lat = rng.uniform(size=total)
            base_lon = np.where(away, neighbor.min_lon if neighbor else 0.0,
                                rect.min_lon)
            lons = base_lon + m_lon + u_lon * (rect.width - 2 * m_lon)
            lats = rect.min_lat + m_lat + u_lat * (rect.height - 2 * m_lat)
            if config.emit_boxes_fraction > 0:
                as_box = rng.uniform(size=total) < config.emit_boxes_fraction
                half_w = rng.uniform(0.0, rect.width / 8.0, size=total)
                half_h = rng.uniform(0.0, rect.height / 8.0, size=total)
            else:
                as_box = np.zeros(total, dtype=bool)
                half_w = half_h = np.zeros(total)
            sources = rng.choice(len(_SOURCES), size=total, p=_SOURCE_WEIGHTS)

            if not as_box.any() and not away.any():
                # common case: cell-local point records, built in bulk
                r_lons = np.round(lons, 7).tolist()
                r_lats = np.round(lats, 7).tolist()
                for t in range(total):
                    corner = [r_lons[t], r_lats[t]]
                    records.append({
                        "id_str": f"t{tweet_seq + t:09d}",
                        "user": {"id_str": f"u_{i}_{j}_{int(user_of_tweet[t])}"},
                        "place": {
                            "place_type": "city",
                            "bounding_box": {
                                "type": "Polygon",
                                "coordinates": [[corner, corner, corner, corner]],
                            },
                        },
                        "source": _SOURCES[sources[t]],
                    })
                tweet_seq += total
                n_t[i, j] += total
                n_u[i, j] += users
                continue

            for t in range(total):
                user_id = f"u_{i}_{j}_{int(user_of_tweet[t])}"
                tweet_id = f"t{tweet_seq:09d}"
                tweet_seq += 1
                source = _SOURCES[sources[t]]
                target = neighbor if away[t] else rect
                if as_box[t]:
                    hw, hh = float(half_w[t]), float(half_h[t])
                    cx = min(max(lons[t], target.min_lon + hw + m_lon),
                             target.max_lon - hw - m_lon)
                    cy = min(max(lats[t], target.min_lat + hh + m_lat),
                             target.max_lat - hh - m_lat)
                    records.append(_box_record(
                        tweet_id, user_id,
                        LonLatRect(cx - hw, cy - hh, cx + hw, cy + hh), source))
                else:
                    records.append(_point_record(tweet_id, user_id,
                                                 float(lons[t]), float(lats[t]),
                                                 source))
                ti = i + 1 if away[t] else i
                n_t[ti, j] += 1
            n_u[i, j] += users

    gt.n_u = n_u
    gt.n_t = n_t
    return records


def gen_bots(config: SynthConfig, n_bots: int, bot_tweet_fraction: float,
             total_records: int) -> list[dict]:
    """Records for very active automated accounts, each posting
    round(bot_tweet_fraction * total_records) tweets from one fixed point."""
    if bot_tweet_fraction <= 0:
        raise ValueError("bot_tweet_fraction must be > 0")
    rng = np.random.default_rng(mix_seed(config.seed, _BOT_STREAM))
    s = config.study
    per_bot = max(1, round(bot_tweet_fraction * total_records))
    records = []
    for b in range(n_bots):
        lon = rng.uniform(s.min_lon, s.max_lon)
        lat = rng.uniform(s.min_lat, s.max_lat)
        user_id = f"bot_{b}"
        for t in range(per_bot):
            records.append(_point_record(f"bt{b:03d}_{t:09d}", user_id,
                                         lon, lat, "bot_station"))
    return records


def land_geojson(study: LonLatRect) -> dict:
    """A land layer covering the whole study rect (no coastline)."""
    ring = [[study.min_lon, study.min_lat], [study.max_lon, study.min_lat],
            [study.max_lon, study.max_lat], [study.min_lon, study.max_lat],
            [study.min_lon, study.min_lat]]
    return {
        "type": "FeatureCollection",
        "features": [{
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {"name": "study_area"},
        }],
    }


def write_jsonl(records: list[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
