"""Blinking statistics: ON/OFF thresholding, OFF-time survival fits, FLID maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, optimize

from .core import (
    DEFAULT_BIN_WIDTH_PS,
    IntensityTrace,
    PhotonStatError,
    PhotonStream,
    UnsupportedModeError,
    micro_times,
)

__all__ = [
    "InsufficientStatisticsError",
    "SegmentedTrace",
    "OffCdf",
    "PowerLawFit",
    "FlidMap",
    "segment",
    "off_cdf",
    "fit_off_cdf",
    "flid",
    "intensity_histogram",
    "DEFAULT_THRESHOLD",
]

DEFAULT_THRESHOLD = 15  # counts per 10 ms bin
TAU_C_CAP = 1e3


class InsufficientStatisticsError(PhotonStatError):
    pass


@dataclass(frozen=True, eq=False)
class SegmentedTrace:
    """Maximal runs of ON (counts >= threshold) and OFF bins tiling a trace."""

    threshold_counts_per_bin: float
    on: np.ndarray  # bool per segment
    starts: np.ndarray
    lengths: np.ndarray
    bin_width_ps: int

    @property
    def n_bins(self) -> int:
        return int(self.lengths.sum())

    def __len__(self) -> int:
        return len(self.lengths)

    def segments(self):
        for state, start, length in zip(self.on.tolist(), self.starts.tolist(), self.lengths.tolist()):
            yield ("ON" if state else "OFF", start, length)

    def state_per_bin(self) -> np.ndarray:
        return np.repeat(self.on, self.lengths)


@dataclass(frozen=True, eq=False)
class OffCdf:
    """Empirical P(tau_off >= d) at each distinct OFF duration d (seconds)."""

    durations: np.ndarray
    probabilities: np.ndarray
    n_events: int


@dataclass(frozen=True)
class PowerLawFit:
    C: float
    m_off: float
    tau_c_s: float
    residual_rms: float
    converged: bool
    stderr: tuple[float, float, float] = (np.nan, np.nan, np.nan)

    @property
    def levy(self) -> bool:
        """Exponent below 1: long OFF periods are probable."""
        return self.m_off < 1.0

    def to_dict(self) -> dict:
        return {
            "C": self.C,
            "m_off": self.m_off,
            "tau_c_s": self.tau_c_s,
            "residual_rms": self.residual_rms,
            "converged": self.converged,
            "levy": self.levy,
            "stderr": {"C": self.stderr[0], "m_off": self.stderr[1], "tau_c_s": self.stderr[2]},
        }


def segment(trace: IntensityTrace, threshold: float = DEFAULT_THRESHOLD) -> SegmentedTrace:
    """Split a trace into ON/OFF runs; a bin is OFF iff its count < threshold."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    counts = np.asarray(trace.counts)
    if counts.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return SegmentedTrace(threshold, np.empty(0, dtype=bool), empty, empty, trace.bin_width_ps)
    on = counts >= threshold
    change = np.flatnonzero(on[1:] != on[:-1]) + 1
    starts = np.concatenate([[0], change]).astype(np.int64)
    lengths = np.diff(np.concatenate([starts, [counts.size]])).astype(np.int64)
    return SegmentedTrace(threshold, on[starts], starts, lengths, trace.bin_width_ps)


def off_durations(seg: SegmentedTrace) -> np.ndarray:
    """OFF durations in seconds, dropping runs that touch either end of the trace."""
    off = ~seg.on
    if len(seg):
        off[0] = False
        off[-1] = False
    return seg.lengths[off] * (seg.bin_width_ps * 1e-12)


def off_cdf(seg: SegmentedTrace, min_events: int = 10) -> OffCdf:
    d = np.sort(off_durations(seg))
    n = d.size
    if n < min_events:
        raise InsufficientStatisticsError(f"{n} complete OFF periods, need at least {min_events}")
    durations, first = np.unique(d, return_index=True)
    return OffCdf(durations=durations, probabilities=(n - first) / n, n_events=n)


def _log_survival_weights(p, n):
    # inverse binomial variance of log P, capped where P -> 1
    return n * p / np.maximum(1.0 - p, 1.0 / n)


def fit_off_cdf(cdf: OffCdf, min_points: int = 10) -> PowerLawFit:
    """Fit log P(tau_off >= t) with log(C t^-m exp(-t/tau_c)).

    In terms of (log C, m, 1/tau_c) the log model is linear, so the weighted
    least-squares problem is solved directly with bounds and has a unique
    optimum. A cut-off much longer than the observed durations is not
    identifiable; tau_c is capped at ``TAU_C_CAP`` times the longest duration.
    """
    t = np.asarray(cdf.durations, dtype=float)
    p = np.asarray(cdf.probabilities, dtype=float)
    if t.size < min_points:
        raise InsufficientStatisticsError(f"{t.size} distinct durations, need at least {min_points}")
    logp = np.log(p)
    w = _log_survival_weights(p, cdf.n_events)
    # columns scaled to unit size so the bounded solver is well conditioned
    scale = np.array([1.0, 1.0 / max(abs(np.log(t)).max(), 1.0), 1.0 / t[-1]])
    design = np.column_stack([np.ones_like(t), -np.log(t), -t])
    sw = np.sqrt(w)
    k_min = 1.0 / (TAU_C_CAP * t[-1])
    lower = np.array([-np.inf, -np.inf, k_min]) / scale
    sol = optimize.lsq_linear(design * scale * sw[:, None], logp * sw, bounds=(lower, np.inf), tol=1e-12)
    log_c, m, k = sol.x * scale
    resid = logp - (log_c - m * np.log(t) - k * t)
    dof = max(t.size - 3, 1)
    dw = design * sw[:, None]
    cov = np.linalg.pinv(dw.T @ dw) * float(np.sum(w * resid**2)) / dof
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    C = float(np.exp(log_c))
    return PowerLawFit(
        C=C,
        m_off=float(m),
        tau_c_s=float(1.0 / k),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        converged=bool(sol.success),
        stderr=(C * float(se[0]), float(se[1]), float(se[2] / k**2)),
    )


def intensity_histogram(trace: IntensityTrace) -> dict[int, int]:
    """Number of bins showing each photon count."""
    values, occ = np.unique(np.asarray(trace.counts), return_counts=True)
    return {int(v): int(c) for v, c in zip(values, occ)}


# --- FLID -------------------------------------------------------------------


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def _gauss_kernel(grid, points, h):
    z = (grid[None, :] - points[:, None]) / h
    return np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * h)


@dataclass(frozen=True, eq=False)
class FlidMap:
    """Fluorescence lifetime-intensity density on a regular grid.

    ``density[i, j]`` is the estimate at (``intensity_grid[i]``,
    ``lifetime_grid[j]``), normalised to unit Riemann mass.
    """

    intensities: np.ndarray
    lifetimes_ns: np.ndarray
    intensity_grid: np.ndarray
    lifetime_grid: np.ndarray
    density: np.ndarray
    bandwidths: tuple[float, float]
    t0_ns: float

    @property
    def cell_area(self) -> float:
        return float(np.diff(self.intensity_grid[:2])[0] * np.diff(self.lifetime_grid[:2])[0])

    def mass(self) -> float:
        return float(self.density.sum() * self.cell_area)

    def density_at(self, intensity, lifetime_ns) -> np.ndarray:
        """Direct product-kernel estimate (not grid-normalised) at given points."""
        x = np.atleast_1d(np.asarray(intensity, dtype=float))
        y = np.atleast_1d(np.asarray(lifetime_ns, dtype=float))
        hx, hy = self.bandwidths
        kx = _gauss_kernel(x, self.intensities, hx)
        ky = _gauss_kernel(y, self.lifetimes_ns, hy)
        return np.sum(kx * ky, axis=0) / self.intensities.size

    def modes(self, min_relative_height: float = 0.05) -> list[tuple[float, float, float]]:
        """Local maxima as (intensity, lifetime_ns, density), highest first."""
        d = self.density
        peaks = (d == ndimage.maximum_filter(d, size=3, mode="constant", cval=-1.0)) & (
            d >= min_relative_height * d.max()
        )
        idx = np.argwhere(peaks)
        out = [(float(self.intensity_grid[i]), float(self.lifetime_grid[j]), float(d[i, j])) for i, j in idx]
        return sorted(out, key=lambda m: -m[2])

    def csv_rows(self):
        for i, x in enumerate(self.intensity_grid):
            for j, y in enumerate(self.lifetime_grid):
                yield float(x), float(y), float(self.density[i, j])


def _axis(values, h, n):
    lo, hi = values.min() - 3 * h, values.max() + 3 * h
    return np.linspace(lo, hi, n)


def decay_mode_ps(stream: PhotonStream, bin_width_ps: int = 100) -> int:
    """Left edge of the most populated micro-time bin."""
    mt = micro_times(stream)
    counts = np.bincount(mt // bin_width_ps)
    return int(np.argmax(counts)) * bin_width_ps


def flid(
    stream: PhotonStream,
    bin_width_ps: int = DEFAULT_BIN_WIDTH_PS,
    grid_spec: tuple[int, int] = (128, 128),
    min_photons: int = 2,
    min_bins: int = 50,
) -> FlidMap:
    """Per time bin: photon count and mean delay after the decay onset t0.

    t0 is the mode of the global micro-time histogram. The (count, lifetime)
    points are smoothed with a product Gaussian kernel using Silverman
    bandwidths per axis.
    """
    if not stream.pulsed:
        raise UnsupportedModeError("FLID needs a pulsed stream")
    bin_width_ps = int(bin_width_ps)
    t0 = decay_mode_ps(stream)
    n_bins = stream.duration_ps // bin_width_ps
    inside = stream.times < n_bins * bin_width_ps
    idx = stream.times[inside] // bin_width_ps
    delay = (micro_times(stream)[inside] - t0).astype(float)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=delay, minlength=n_bins)
    ok = counts >= min_photons
    if ok.sum() < min_bins:
        raise InsufficientStatisticsError(
            f"{int(ok.sum())} bins with >= {min_photons} photons, need at least {min_bins}"
        )
    x = counts[ok].astype(float)
    y = sums[ok] / counts[ok] * 1e-3  # ns

    def bandwidth(v):
        h = silverman_bandwidth(v)
        return h if h > 0 else max(1e-3 * abs(float(v[0])), 1e-6)

    hx, hy = bandwidth(x), bandwidth(y)
    gx = _axis(x, hx, int(grid_spec[0]))
    gy = _axis(y, hy, int(grid_spec[1]))
    density = _gauss_kernel(gx, x, hx).T @ _gauss_kernel(gy, y, hy) / x.size
    cell = (gx[1] - gx[0]) * (gy[1] - gy[0])
    density /= density.sum() * cell
    return FlidMap(
        intensities=x,
        lifetimes_ns=y,
        intensity_grid=gx,
        lifetime_grid=gy,
        density=density,
        bandwidths=(hx, hy),
        t0_ns=t0 * 1e-3,
    )
