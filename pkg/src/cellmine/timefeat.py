"""Time-domain characterization of traffic patterns.

Daily profiles average each 10-minute slot of day separately over weekdays
and weekends. From a profile we extract the weekday/weekend traffic ratio,
peak and valley values, their ratio, and the times of prominent peaks and
valleys; between two profiles we measure the circular lag that best aligns
them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .common import (
    DEFAULT_TZ_OFFSET_MINUTES,
    SLOTS_PER_DAY,
    SLOTS_PER_WEEK,
    local_seconds_of_day,
    local_weekday,
)
from .ingest import BinnedSeries

# Peak detection knobs: moving-average window (slots) and the prominence
# floor as a fraction of the smoothed peak-valley range.
SMOOTH_WINDOW = 5
PROMINENCE_FRACTION = 0.15

MINUTES_PER_SLOT = 10
HALF_DAY_MINUTES = 720


class TimefeatError(ValueError):
    pass


@dataclass(slots=True)
class DailyProfile:
    """Slotwise mean day for weekdays and weekends separately.

    ``units`` records whether the values are raw bytes per slot or normalized
    scores; peak/valley magnitudes are only meaningful for raw bytes.
    """

    source_id: str
    weekday: np.ndarray
    weekend: np.ndarray
    units: str = "bytes"


@dataclass(slots=True)
class TimeFeatures:
    source_id: str
    units: str
    weekday_weekend_ratio: float | None
    weekday_peak: float
    weekday_valley: float
    weekday_peak_valley_ratio: float | None
    weekend_peak: float
    weekend_valley: float
    weekend_peak_valley_ratio: float | None
    weekday_peak_times: list[int]  # slots of day
    weekday_valley_times: list[int]
    weekend_peak_times: list[int]
    weekend_valley_times: list[int]


def slot_to_hhmm(slot: int) -> str:
    minutes = slot * MINUTES_PER_SLOT
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def daily_profile_from_values(
    values: np.ndarray, first_day_weekday: int, source_id: str, units: str = "bytes"
) -> DailyProfile:
    """Build a profile from a flat slot series whose first slot starts a
    civil day with the given weekday (Monday = 0). Requires whole weeks so
    each weekday is represented equally."""
    values = np.asarray(values, dtype=float)
    if values.size == 0 or values.size % SLOTS_PER_WEEK != 0:
        raise TimefeatError(
            f"{source_id}: profile needs whole weeks of slots, got {values.size}"
        )
    days = values.reshape(-1, SLOTS_PER_DAY)
    weekdays = (first_day_weekday + np.arange(days.shape[0])) % 7
    weekday_mask = weekdays < 5
    return DailyProfile(
        source_id,
        days[weekday_mask].mean(axis=0),
        days[~weekday_mask].mean(axis=0),
        units,
    )


def daily_profile(
    series: BinnedSeries,
    tz_offset_minutes: int = DEFAULT_TZ_OFFSET_MINUTES,
    units: str = "bytes",
) -> DailyProfile:
    if local_seconds_of_day(series.origin, tz_offset_minutes) != 0:
        raise TimefeatError(
            f"{series.tower_id}: series origin is not civil midnight; "
            "profiles need day-aligned data"
        )
    return daily_profile_from_values(
        series.slot_bytes,
        local_weekday(series.origin, tz_offset_minutes),
        series.tower_id,
        units,
    )


def weekday_weekend_ratio(profile: DailyProfile) -> float | None:
    """Mean weekday daily total over mean weekend daily total; None when the
    weekend total is zero (undefined, reported as such)."""
    weekend_total = float(profile.weekend.sum())
    if weekend_total == 0.0:
        return None
    return float(profile.weekday.sum()) / weekend_total


def _circular_smooth(curve: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    kernel = np.ones(window) / window
    extended = np.concatenate([curve[-(window // 2):], curve, curve[: window // 2]])
    return np.convolve(extended, kernel, mode="valid")


def _circular_extrema(curve: np.ndarray, prominence_fraction: float = PROMINENCE_FRACTION):
    """Prominent local maxima/minima of a daily curve treated as circular.

    Peaks are found on a tripled copy so wrap-around maxima are not lost;
    only detections in the middle copy are kept.
    """
    smoothed = _circular_smooth(curve)
    span = float(smoothed.max() - smoothed.min())
    if span == 0.0:
        return [], []
    threshold = prominence_fraction * span
    tripled = np.concatenate([smoothed, smoothed, smoothed])
    n = smoothed.size
    peaks, _ = find_peaks(tripled, prominence=threshold)
    valleys, _ = find_peaks(-tripled, prominence=threshold)
    peak_slots = sorted({int(p - n) for p in peaks if n <= p < 2 * n})
    valley_slots = sorted({int(v - n) for v in valleys if n <= v < 2 * n})
    return peak_slots, valley_slots


def peak_valley(curve: np.ndarray, prominence_fraction: float = PROMINENCE_FRACTION):
    """Peak/valley values from the raw curve, detection times from the
    smoothed one. Returns (peak, valley, ratio-or-None, peak_slots, valley_slots)."""
    curve = np.asarray(curve, dtype=float)
    peak = float(curve.max())
    valley = float(curve.min())
    ratio = peak / valley if valley > 0.0 else None
    peak_slots, valley_slots = _circular_extrema(curve, prominence_fraction)
    return peak, valley, ratio, peak_slots, valley_slots


def compute_time_features(
    profile: DailyProfile, prominence_fraction: float = PROMINENCE_FRACTION
) -> TimeFeatures:
    wd_peak, wd_valley, wd_ratio, wd_pt, wd_vt = peak_valley(profile.weekday, prominence_fraction)
    we_peak, we_valley, we_ratio, we_pt, we_vt = peak_valley(profile.weekend, prominence_fraction)
    return TimeFeatures(
        profile.source_id,
        profile.units,
        weekday_weekend_ratio(profile),
        wd_peak,
        wd_valley,
        wd_ratio,
        we_peak,
        we_valley,
        we_ratio,
        wd_pt,
        wd_vt,
        we_pt,
        we_vt,
    )


def peak_offset(a: DailyProfile, b: DailyProfile, day: str = "weekday") -> int:
    """Signed circular lag in minutes by which profile ``a`` trails profile
    ``b``, from the cross-correlation of the smoothed, mean-removed curves.
    Both profiles must contain at least one prominent peak."""
    curve_a = a.weekday if day == "weekday" else a.weekend
    curve_b = b.weekday if day == "weekday" else b.weekend
    for label, curve in (("a", curve_a), ("b", curve_b)):
        peaks, _ = _circular_extrema(curve)
        if not peaks:
            raise TimefeatError(f"profile {label} has no prominent peak; offset undefined")
    sa = _circular_smooth(np.asarray(curve_a, dtype=float))
    sb = _circular_smooth(np.asarray(curve_b, dtype=float))
    sa = sa - sa.mean()
    sb = sb - sb.mean()
    # circular cross-correlation c[tau] = sum_t a[t] * b[t - tau]
    corr = np.fft.ifft(np.fft.fft(sa) * np.conj(np.fft.fft(sb))).real
    lag = int(np.argmax(corr))
    minutes = lag * MINUTES_PER_SLOT
    if minutes > HALF_DAY_MINUTES:
        minutes -= 2 * HALF_DAY_MINUTES
    return minutes


def _times(slots: Sequence[int]) -> str:
    return " ".join(slot_to_hhmm(s) for s in slots)


def write_time_features(path: str | Path, features: Sequence[TimeFeatures]) -> Path:
    path = Path(path)

    def fmt(value):
        return "" if value is None else repr(float(value))

    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            [
                "source_id",
                "units",
                "weekday_weekend_ratio",
                "weekday_peak",
                "weekday_valley",
                "weekday_peak_valley_ratio",
                "weekend_peak",
                "weekend_valley",
                "weekend_peak_valley_ratio",
                "weekday_peak_times",
                "weekday_valley_times",
                "weekend_peak_times",
                "weekend_valley_times",
            ]
        )
        for t in features:
            writer.writerow(
                [
                    t.source_id,
                    t.units,
                    fmt(t.weekday_weekend_ratio),
                    fmt(t.weekday_peak),
                    fmt(t.weekday_valley),
                    fmt(t.weekday_peak_valley_ratio),
                    fmt(t.weekend_peak),
                    fmt(t.weekend_valley),
                    fmt(t.weekend_peak_valley_ratio),
                    _times(t.weekday_peak_times),
                    _times(t.weekday_valley_times),
                    _times(t.weekend_peak_times),
                    _times(t.weekend_valley_times),
                ]
            )
    return path
