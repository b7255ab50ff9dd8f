"""Points-of-interest validation: radius counts, normalized cluster table,
and TF-IDF / NTF-IDF scores per tower.

Distances are great-circle (haversine) on a sphere of radius 6371.0088 km.
Counting uses a coarse lat/lon grid index so a city-sized registry stays
O(towers + pois).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import TowerRecord

POI_TYPES = ("resident", "transport", "office", "entertain")

EARTH_RADIUS_M = 6_371_008.8
_METERS_PER_DEG_LAT = math.pi * EARTH_RADIUS_M / 180.0

POIS_HEADER = ["poi_id", "type", "lat", "lon"]
DEFAULT_RADIUS_M = 200.0


class PoiError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class PoiRecord:
    poi_id: str
    type: str
    lat: float
    lon: float


@dataclass(slots=True)
class PoiProfile:
    """Per-tower POI counts and their TF-IDF / NTF-IDF scores.

    ``ntfidf`` is None for towers with no POI of any type (all-zero TF-IDF
    cannot be normalized)."""

    tower_id: str
    counts: np.ndarray  # 4 ints in POI_TYPES order
    tfidf: np.ndarray
    ntfidf: np.ndarray | None


def haversine_m(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters; accepts scalars or numpy arrays."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=float)) for x in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return EARTH_RADIUS_M * 2 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def parse_pois(lines: Iterable[str]) -> list[PoiRecord]:
    reader = csv.reader(lines)
    out: list[PoiRecord] = []
    header_seen = False
    for line_no, row in enumerate(reader, start=1):
        if not row:
            continue
        if not header_seen:
            if [c.strip() for c in row] != POIS_HEADER:
                raise PoiError(f"bad pois header on line {line_no}: expected {','.join(POIS_HEADER)}")
            header_seen = True
            continue
        if len(row) != 4:
            raise PoiError(f"pois line {line_no}: expected 4 fields")
        poi_id, poi_type = row[0].strip(), row[1].strip()
        if poi_type not in POI_TYPES:
            raise PoiError(
                f"pois line {line_no}: unknown type {poi_type!r} (expected one of {POI_TYPES})"
            )
        try:
            lat, lon = float(row[2]), float(row[3])
        except ValueError:
            raise PoiError(f"pois line {line_no}: non-numeric coordinate") from None
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise PoiError(f"pois line {line_no}: coordinate out of range")
        out.append(PoiRecord(poi_id, poi_type, lat, lon))
    return out


class PoiGrid:
    """Bucket POIs by ~0.01 degree cells for radius queries."""

    def __init__(self, pois: Sequence[PoiRecord], cell_deg: float = 0.01):
        self.cell_deg = cell_deg
        self.pois = list(pois)
        self.lats = np.array([p.lat for p in self.pois])
        self.lons = np.array([p.lon for p in self.pois])
        self.types = np.array([POI_TYPES.index(p.type) for p in self.pois], dtype=int)
        self.buckets: dict[tuple[int, int], list[int]] = {}
        for idx, p in enumerate(self.pois):
            key = (int(math.floor(p.lat / cell_deg)), int(math.floor(p.lon / cell_deg)))
            self.buckets.setdefault(key, []).append(idx)

    def candidates(self, lat: float, lon: float, radius_m: float) -> np.ndarray:
        dlat = radius_m / _METERS_PER_DEG_LAT
        cos_lat = max(math.cos(math.radians(lat)), 1e-9)
        dlon = radius_m / (_METERS_PER_DEG_LAT * cos_lat)
        lat_cells = range(
            int(math.floor((lat - dlat) / self.cell_deg)),
            int(math.floor((lat + dlat) / self.cell_deg)) + 1,
        )
        lon_cells = range(
            int(math.floor((lon - dlon) / self.cell_deg)),
            int(math.floor((lon + dlon) / self.cell_deg)) + 1,
        )
        hits: list[int] = []
        for i in lat_cells:
            for j in lon_cells:
                hits.extend(self.buckets.get((i, j), ()))
        return np.array(sorted(hits), dtype=int)

    def count_within(self, lat: float, lon: float, radius_m: float) -> np.ndarray:
        counts = np.zeros(len(POI_TYPES), dtype=int)
        idx = self.candidates(lat, lon, radius_m)
        if idx.size == 0:
            return counts
        d = haversine_m(lat, lon, self.lats[idx], self.lons[idx])
        within = idx[d <= radius_m]
        for t in self.types[within]:
            counts[t] += 1
        return counts


def count_poi(
    towers: Mapping[str, TowerRecord] | Sequence[TowerRecord],
    pois: Sequence[PoiRecord],
    radius_m: float = DEFAULT_RADIUS_M,
) -> dict[str, np.ndarray]:
    """POIs of each type within ``radius_m`` of each tower (boundary inclusive)."""
    if radius_m <= 0:
        raise PoiError(f"radius must be positive, got {radius_m}")
    if isinstance(towers, Mapping):
        tower_list = list(towers.values())
    else:
        tower_list = list(towers)
    grid = PoiGrid(pois)
    return {
        t.tower_id: grid.count_within(t.lat, t.lon, radius_m)
        for t in sorted(tower_list, key=lambda x: x.tower_id)
    }


@dataclass(slots=True)
class PoiClusterTable:
    """Cluster x type matrix of averaged min-max-normalized POI counts."""

    clusters: list[int]
    matrix: np.ndarray  # (len(clusters), 4); NaN where a type is undefined
    undefined_types: list[str]
    row_max: dict[int, str]  # cluster -> type name of the row maximum
    col_max: dict[str, int]  # type name -> cluster of the column maximum


def cluster_poi_table(
    counts: Mapping[str, np.ndarray], assignments: Mapping[str, int]
) -> PoiClusterTable:
    """Min-max normalize each type's counts across towers, then average per
    cluster. A type whose counts do not vary is flagged undefined (NaN column)."""
    towers = sorted(set(counts) & set(assignments))
    if not towers:
        raise PoiError("no towers shared between counts and assignments")
    raw = np.array([counts[t] for t in towers], dtype=float)
    labels = np.array([assignments[t] for t in towers])
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    span = hi - lo
    undefined = [POI_TYPES[i] for i in range(len(POI_TYPES)) if span[i] == 0.0]
    normalized = np.full_like(raw, np.nan)
    for i in range(len(POI_TYPES)):
        if span[i] > 0.0:
            normalized[:, i] = (raw[:, i] - lo[i]) / span[i]
    clusters = sorted(set(labels.tolist()))
    matrix = np.vstack([normalized[labels == c].mean(axis=0) for c in clusters])
    row_max: dict[int, str] = {}
    for r, c in enumerate(clusters):
        row = matrix[r]
        if np.all(np.isnan(row)):
            continue
        row_max[c] = POI_TYPES[int(np.nanargmax(row))]
    col_max: dict[str, int] = {}
    for i, name in enumerate(POI_TYPES):
        col = matrix[:, i]
        if np.all(np.isnan(col)):
            continue
        col_max[name] = clusters[int(np.nanargmax(col))]
    return PoiClusterTable(clusters, matrix, undefined, row_max, col_max)


def ntfidf(counts: Mapping[str, np.ndarray]) -> dict[str, PoiProfile]:
    """TF-IDF with natural logarithms: IDF_i = ln(M / M_i) over the registry,
    TF-IDF_i = IDF_i * ln(1 + count_i), NTF-IDF normalizes the four scores to
    sum to 1 (undefined for all-zero towers)."""
    towers = sorted(counts)
    m_total = len(towers)
    if m_total < 1:
        raise PoiError("TF-IDF needs at least one tower")
    raw = np.array([counts[t] for t in towers], dtype=float)
    m_i = (raw > 0).sum(axis=0)
    idf = np.zeros(len(POI_TYPES))
    for i in range(len(POI_TYPES)):
        if m_i[i] > 0:
            idf[i] = math.log(m_total / m_i[i])
        else:
            # no tower sees this type, so every count is zero and the TF
            # factor annihilates the term regardless of IDF
            assert np.all(raw[:, i] == 0), "M_i = 0 with a positive count is impossible"
            idf[i] = 0.0
    out: dict[str, PoiProfile] = {}
    for row, tower_id in zip(raw, towers):
        tfidf = idf * np.log1p(row)
        total = float(tfidf.sum())
        nt = tfidf / total if total > 0.0 else None
        out[tower_id] = PoiProfile(tower_id, row.astype(int), tfidf, nt)
    return out


def write_poi_profiles(path: str | Path, profiles: Mapping[str, PoiProfile]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        header = ["tower_id"]
        header += [f"count_{t}" for t in POI_TYPES]
        header += [f"tfidf_{t}" for t in POI_TYPES]
        header += [f"ntfidf_{t}" for t in POI_TYPES]
        header.append("ntfidf_defined")
        writer.writerow(header)
        for tower_id in sorted(profiles):
            p = profiles[tower_id]
            row = [tower_id]
            row += [int(c) for c in p.counts]
            row += [repr(float(v)) for v in p.tfidf]
            if p.ntfidf is None:
                row += ["", "", "", "", 0]
            else:
                row += [repr(float(v)) for v in p.ntfidf] + [1]
            writer.writerow(row)
    return path


def write_poi_cluster_table(path: str | Path, table: PoiClusterTable) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["cluster"] + list(POI_TYPES) + ["row_max"])
        for r, cluster in enumerate(table.clusters):
            cells = [
                "" if np.isnan(v) else repr(float(v)) for v in table.matrix[r]
            ]
            writer.writerow([cluster] + cells + [table.row_max.get(cluster, "")])
        writer.writerow(
            ["col_max"]
            + [str(table.col_max.get(t, "")) for t in POI_TYPES]
            + [""]
        )
    return path
