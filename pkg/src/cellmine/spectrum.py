"""Frequency-domain analysis of traffic vectors.

For a 4-week series of 10-minute slots the interesting DFT bins are the
week, day and half-day periodicities (k = 4, 28, 56 at N = 4032). Towers are
summarized by amplitude and phase at those three bins, and a 7-bin
reconstruction (DC plus the three bins and their mirrors) captures almost all
of the traffic energy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .common import SLOTS_PER_WEEK

# A component with amplitude below this is treated as null: its phase is
# meaningless and reported as 0 with the null flag set.
NULL_AMPLITUDE = 1e-12

FEATURES_HEADER = ["tower_id", "A4", "P4", "A28", "P28", "A56", "P56"]


class SpectrumError(ValueError):
    pass


@dataclass(slots=True)
class Spectrum:
    """Complex DFT coefficients of one real-valued series."""

    coefficients: np.ndarray
    n: int


@dataclass(frozen=True, slots=True)
class SpectralFeature:
    """Amplitude/phase at the week, day and half-day bins for one tower.

    Phases are principal values in (-pi, pi]. ``null_components`` marks bins
    whose amplitude was below NULL_AMPLITUDE (phase forced to 0).
    """

    tower_id: str
    amp_week: float
    phase_week: float
    amp_day: float
    phase_day: float
    amp_half_day: float
    phase_half_day: float
    null_components: tuple[bool, bool, bool] = (False, False, False)

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.amp_week,
                self.phase_week,
                self.amp_day,
                self.phase_day,
                self.amp_half_day,
                self.phase_half_day,
            ]
        )


def dft(x: Sequence[float] | np.ndarray) -> Spectrum:
    """Unnormalized forward DFT (FFT-backed)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise SpectrumError("dft expects a non-empty 1-D real vector")
    return Spectrum(np.fft.fft(x), int(x.size))


def inverse(s: Spectrum) -> np.ndarray:
    """Inverse transform with the 1/N convention; returns the real part after
    checking the imaginary residue is negligible."""
    x = np.fft.ifft(s.coefficients)
    scale = max(1.0, float(np.max(np.abs(x.real))))
    residue = float(np.max(np.abs(x.imag)))
    if residue > 1e-9 * scale:
        raise SpectrumError(f"imaginary residue {residue:g} too large for a real signal")
    return x.real


def principal_indices(n: int) -> tuple[int, int, int]:
    """Bin indices of the week / day / half-day periodicities for an
    ``n``-slot series of whole weeks (k = weeks, 7*weeks, 14*weeks)."""
    if n % SLOTS_PER_WEEK != 0:
        raise SpectrumError(
            f"series length {n} is not a whole number of weeks; "
            "pass explicit indices for non-canonical lengths"
        )
    weeks = n // SLOTS_PER_WEEK
    return weeks, 7 * weeks, 14 * weeks


def _amp_phase(coef: complex) -> tuple[float, float, bool]:
    amp = float(abs(coef))
    if amp < NULL_AMPLITUDE:
        return amp, 0.0, True
    phase = float(np.angle(coef))
    if phase <= -np.pi:  # principal range is (-pi, pi]
        phase = np.pi
    return amp, phase, False


def principal_components(
    s: Spectrum, tower_id: str = "", indices: tuple[int, int, int] | None = None
) -> SpectralFeature:
    if indices is None:
        indices = principal_indices(s.n)
    k_week, k_day, k_half = indices
    if not all(0 < k < s.n for k in indices):
        raise SpectrumError(f"principal indices {indices} out of range for n={s.n}")
    aw, pw, nw = _amp_phase(s.coefficients[k_week])
    ad, pd, nd = _amp_phase(s.coefficients[k_day])
    ah, ph, nh = _amp_phase(s.coefficients[k_half])
    return SpectralFeature(tower_id, aw, pw, ad, pd, ah, ph, (nw, nd, nh))


def reconstruct(s: Spectrum, indices: tuple[int, int, int] | None = None) -> np.ndarray:
    """Inverse transform keeping only DC, the three principal bins and their
    conjugate mirrors (7 bins total)."""
    if indices is None:
        indices = principal_indices(s.n)
    kept = np.zeros(s.n, dtype=complex)
    keep = {0}
    for k in indices:
        keep.add(k % s.n)
        keep.add((s.n - k) % s.n)
    for k in keep:
        kept[k] = s.coefficients[k]
    return inverse(Spectrum(kept, s.n))


def energy(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * x))


def reconstruction_energy_ratio(x: np.ndarray, indices: tuple[int, int, int] | None = None) -> float:
    """Fraction of the signal's energy retained by the 7-bin reconstruction."""
    total = energy(x)
    if total == 0.0:
        return 1.0
    return energy(reconstruct(dft(x), indices)) / total


def amplitude_variance(
    spectra: Sequence[Spectrum],
) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Population variance of |X[k]| across towers, per bin, plus the three
    bins of largest variance over 1 <= k <= n/2 (mirror bins carry the same
    amplitude for real inputs, DC is excluded)."""
    if len(spectra) < 2:
        raise SpectrumError("amplitude variance needs at least 2 towers")
    n = spectra[0].n
    if any(s.n != n for s in spectra):
        raise SpectrumError("spectra have mixed lengths")
    amps = np.abs(np.stack([s.coefficients for s in spectra]))
    variances = amps.var(axis=0)
    half = variances[1 : n // 2 + 1]
    order = np.argsort(half)[::-1][:3] + 1
    return variances, tuple(int(k) for k in order)


def write_spectral_features(path: str | Path, features: Sequence[SpectralFeature]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(FEATURES_HEADER)
        for feat in sorted(features, key=lambda x: x.tower_id):
            writer.writerow([feat.tower_id] + [repr(float(v)) for v in feat.as_array()])
    return path


def read_spectral_features(path: str | Path) -> list[SpectralFeature]:
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != FEATURES_HEADER:
            raise SpectrumError(f"bad spectral features header: {header}")
        for row in reader:
            vals = [float(x) for x in row[1:]]
            nulls = tuple(vals[2 * i] < NULL_AMPLITUDE for i in range(3))
            out.append(SpectralFeature(row[0], *vals, nulls))
    return out
