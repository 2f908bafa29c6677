"""Emission peak position (CEW) and width (FWHM) of PL spectra."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PhotonStatError
from .fitting import FWHM_PER_SIGMA, gaussian, gaussian_jac, levenberg_marquardt

__all__ = [
    "ShapeError",
    "Spectrum",
    "PeakMetrics",
    "CohortStats",
    "peak_metrics",
    "cohort_stats",
    "read_spectrum_csv",
    "METHODS",
]

METHODS = ("gaussian_fit", "half_max_interpolation")


class ShapeError(PhotonStatError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrum:
    wavelengths_nm: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        if wl.ndim != 1 or wl.shape != c.shape:
            raise ValueError("wavelengths and counts must be 1-D and of equal length")
        if wl.size < 8:
            raise ValueError(f"need at least 8 samples, got {wl.size}")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        if np.any(c < 0):
            raise ValueError("counts must be >= 0")
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "counts", c)


@dataclass(frozen=True)
class PeakMetrics:
    cew_nm: float
    fwhm_nm: float
    method: str
    converged: bool = True

    def to_dict(self) -> dict:
        return {"cew_nm": self.cew_nm, "fwhm_nm": self.fwhm_nm, "method": self.method, "converged": self.converged}


def _check_shape(wl, c):
    peak = float(c.max())
    if peak <= 0 or peak < 3.0 * float(np.median(c)):
        raise ShapeError("no dominant peak (maximum below 3x median)")
    # regions above half maximum count as separate only if a dip below a
    # quarter maximum lies between them (noise hysteresis)
    idx = np.flatnonzero(c >= 0.5 * peak)
    for a, b in zip(idx[:-1], idx[1:]):
        if b > a + 1 and c[a + 1 : b].min() < 0.25 * peak:
            raise ShapeError("more than one region above half maximum")


def _half_max(wl, c):
    k = int(np.argmax(c))
    cew = wl[k]
    if 0 < k < len(c) - 1:
        # vertex of the parabola through the three samples around the maximum
        x = wl[k - 1 : k + 2]
        a, b, _ = np.polyfit(x - x[1], c[k - 1 : k + 2], 2)
        if a < 0:
            cew = x[1] - b / (2 * a)
    half = 0.5 * c[k]
    left = np.flatnonzero(c[:k] < half)
    right = np.flatnonzero(c[k:] < half)
    if left.size == 0 or right.size == 0:
        raise ShapeError("peak does not fall below half maximum on both sides")
    i = left[-1]
    j = k + right[0]
    xl = wl[i] + (half - c[i]) * (wl[i + 1] - wl[i]) / (c[i + 1] - c[i])
    xr = wl[j - 1] + (half - c[j - 1]) * (wl[j] - wl[j - 1]) / (c[j] - c[j - 1])
    return float(cew), float(xr - xl)


def _gaussian_fit(wl, c):
    cew0, fwhm0 = _half_max(wl, c)
    base0 = float(np.median(c))
    p0 = [c.max() - base0, cew0, fwhm0 / FWHM_PER_SIGMA, base0]
    res = levenberg_marquardt(
        lambda q: gaussian(wl, q),
        lambda q: gaussian_jac(wl, q),
        p0,
        c,
        lower=[0.0, wl[0], 1e-6 * (wl[-1] - wl[0]), -np.inf],
        upper=[np.inf, wl[-1], np.inf, np.inf],
        ftol=1e-14,
    )
    return float(res.params[1]), float(FWHM_PER_SIGMA * res.params[2]), res.converged


def peak_metrics(spec: Spectrum, method: str = "gaussian_fit") -> PeakMetrics:
    """Central emission wavelength and FWHM of a single-peaked spectrum.

    Args:
        spec: Spectrum to analyse.
        method: ``gaussian_fit`` fits a Gaussian plus constant baseline;
            ``half_max_interpolation`` refines the maximum with a parabola
            and interpolates the half-maximum crossings linearly.

    Raises:
        ShapeError: flat or multi-peaked spectrum.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    wl, c = spec.wavelengths_nm, spec.counts
    _check_shape(wl, c)
    if method == "half_max_interpolation":
        cew, fwhm = _half_max(wl, c)
        return PeakMetrics(cew, fwhm, method)
    cew, fwhm, ok = _gaussian_fit(wl, c)
    return PeakMetrics(cew, fwhm, method, bool(ok))


@dataclass(frozen=True)
class CohortStats:
    n: int
    mean_cew_nm: float
    std_cew_nm: float
    mean_fwhm_nm: float
    std_fwhm_nm: float
    scatter: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cew_nm": {"mean": self.mean_cew_nm, "std": self.std_cew_nm},
            "fwhm_nm": {"mean": self.mean_fwhm_nm, "std": self.std_fwhm_nm},
            "scatter": [{"cew_nm": a, "fwhm_nm": b} for a, b in self.scatter],
        }


def cohort_stats(metrics) -> CohortStats:
    """Sample mean and standard deviation (n - 1) of CEW and FWHM."""
    metrics = list(metrics)
    if len(metrics) < 2:
        raise ValueError("need at least 2 spectra")
    cew = np.array([m.cew_nm for m in metrics])
    fwhm = np.array([m.fwhm_nm for m in metrics])
    return CohortStats(
        n=len(metrics),
        mean_cew_nm=float(cew.mean()),
        std_cew_nm=float(cew.std(ddof=1)),
        mean_fwhm_nm=float(fwhm.mean()),
        std_fwhm_nm=float(fwhm.std(ddof=1)),
        scatter=tuple(zip(cew.tolist(), fwhm.tolist())),
    )


def read_spectrum_csv(path) -> Spectrum:
    """Two numeric columns (wavelength nm, counts); a header row is skipped."""
    wl, c = [], []
    header_seen = False
    with Path(path).open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                a, b = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if wl or header_seen:
                    raise ValueError(f"{path}: bad row {row!r}") from None
                header_seen = True
                continue
            wl.append(a)
            c.append(b)
    return Spectrum(np.array(wl), np.array(c))
