"""Second-order correlation histograms and g2(0) extraction.

Pipeline: :func:`correlate` (raw coincidences) -> optional
:func:`clean_background` -> :func:`normalize_peaks` -> :func:`g2_zero`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numba
import numpy as np
from numba import njit, prange

from .core import PhotonStatError, PhotonStream, UnsupportedModeError

# the bundled TBB is too old for numba; skip it quietly
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

__all__ = [
    "MissingChannelError",
    "InvalidWindowError",
    "InsufficientRangeError",
    "StageError",
    "CorrelationHistogram",
    "G2Result",
    "correlate",
    "correlate_bruteforce",
    "clean_background",
    "normalize_peaks",
    "peak_areas",
    "normalized_peak_areas",
    "g2_zero",
    "ANTIBUNCHING_THRESHOLD",
]

ANTIBUNCHING_THRESHOLD = 0.5
DEFAULT_BIN_PS = 1000
DEFAULT_PERIODS = 25
DEFAULT_REFERENCE_PERIODS = 10


class MissingChannelError(PhotonStatError):
    pass


class InvalidWindowError(PhotonStatError):
    pass


class InsufficientRangeError(PhotonStatError):
    pass


class StageError(PhotonStatError):
    pass


@dataclass(frozen=True, eq=False)
class CorrelationHistogram:
    """Coincidences binned over delay tau = t_ch1 - t_ch0 in [-max, +max).

    ``counts`` are integers at stage ``raw``, floats afterwards.
    """

    bin_width_ps: int
    max_delay_ps: int
    counts: np.ndarray
    total_starts: int
    stage: str = "raw"
    rep_period_ps: int = 0
    reference_delay_ps: int | None = None
    background_cleaned: bool = False

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def edges_ps(self) -> np.ndarray:
        return -self.max_delay_ps + self.bin_width_ps * np.arange(self.n_bins + 1, dtype=np.int64)

    @property
    def centers_ps(self) -> np.ndarray:
        e = self.edges_ps
        return 0.5 * (e[:-1] + e[1:])

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "bin_width_ps": int(self.bin_width_ps),
            "max_delay_ps": int(self.max_delay_ps),
            "rep_period_ps": int(self.rep_period_ps),
            "total_starts": int(self.total_starts),
            "reference_delay_ps": None if self.reference_delay_ps is None else int(self.reference_delay_ps),
            "background_cleaned": bool(self.background_cleaned),
            "bin_edges_ps": self.edges_ps.tolist(),
            "values": [float(v) for v in self.counts],
        }


@dataclass(frozen=True)
class G2Result:
    g2_zero: float
    center_area: float
    mean_side_area: float
    n_side_peaks_used: int
    background_cleaned: bool

    @property
    def antibunched(self) -> bool:
        return self.g2_zero < ANTIBUNCHING_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "g2_zero": float(self.g2_zero),
            "center_area": float(self.center_area),
            "mean_side_area": float(self.mean_side_area),
            "n_side_peaks_used": int(self.n_side_peaks_used),
            "background_cleaned": bool(self.background_cleaned),
            "antibunched": bool(self.antibunched),
        }


@njit(cache=True)
def _sweep(t0, t1, start, stop, bin_width, max_delay, hist):
    n1 = t1.shape[0]
    lo = 0
    # first ch1 photon that can pair with t0[start]
    if start < stop:
        lo = np.searchsorted(t1, t0[start] - max_delay)
    for i in range(start, stop):
        ta = t0[i]
        while lo < n1 and t1[lo] < ta - max_delay:
            lo += 1
        j = lo
        while j < n1:
            d = t1[j] - ta
            if d >= max_delay:
                break
            hist[(d + max_delay) // bin_width] += 1
            j += 1


@njit(cache=True, parallel=True)
def _correlate_chunks(t0, t1, bin_width, max_delay, n_bins, n_chunks):
    n0 = t0.shape[0]
    partial = np.zeros((n_chunks, n_bins), dtype=np.int64)
    for c in prange(n_chunks):
        start = n0 * c // n_chunks
        stop = n0 * (c + 1) // n_chunks
        _sweep(t0, t1, start, stop, bin_width, max_delay, partial[c])
    out = np.zeros(n_bins, dtype=np.int64)
    for c in range(n_chunks):
        out += partial[c]
    return out


def correlate(
    stream: PhotonStream,
    bin_width_ps: int = DEFAULT_BIN_PS,
    max_delay_ps: int | None = None,
    threads: int | None = None,
) -> CorrelationHistogram:
    """Cross-correlate channel 0 (start) against channel 1.

    Counts every ordered pair (a on ch0, b on ch1) with
    ``-max_delay <= t_b - t_a < max_delay`` using a two-pointer sweep over
    the sorted channel arrays. Work is split over start-photon chunks whose
    partial histograms are summed, so the result is independent of
    ``threads``. ``max_delay_ps`` defaults to 25 excitation periods.
    """
    if max_delay_ps is None:
        if not stream.pulsed:
            raise UnsupportedModeError("max_delay_ps is required for continuous-wave streams")
        max_delay_ps = DEFAULT_PERIODS * stream.rep_period_ps
    bin_width_ps, max_delay_ps = int(bin_width_ps), int(max_delay_ps)
    if bin_width_ps <= 0 or max_delay_ps <= 0:
        raise ValueError("bin_width_ps and max_delay_ps must be positive")
    if (2 * max_delay_ps) % bin_width_ps:
        raise ValueError("2 * max_delay_ps must be a multiple of bin_width_ps")
    t0 = stream.channel_times(0)
    t1 = stream.channel_times(1)
    if len(t0) == 0 or len(t1) == 0:
        raise MissingChannelError("correlation needs photons on both channels 0 and 1")
    n_bins = 2 * max_delay_ps // bin_width_ps
    if threads is None:
        threads = numba.get_num_threads()
    n_chunks = max(1, min(int(threads) * 4, len(t0)))
    counts = _correlate_chunks(t0, t1, np.int64(bin_width_ps), np.int64(max_delay_ps), n_bins, n_chunks)
    return CorrelationHistogram(
        bin_width_ps=bin_width_ps,
        max_delay_ps=max_delay_ps,
        counts=counts,
        total_starts=len(t0),
        stage="raw",
        rep_period_ps=stream.rep_period_ps,
    )


def correlate_bruteforce(stream: PhotonStream, bin_width_ps: int, max_delay_ps: int) -> np.ndarray:
    """All-pairs O(n0 * n1) reference histogram; for small streams only."""
    t0 = stream.channel_times(0)
    t1 = stream.channel_times(1)
    d = (t1[None, :] - t0[:, None]).ravel()
    d = d[(d >= -max_delay_ps) & (d < max_delay_ps)]
    n_bins = 2 * max_delay_ps // bin_width_ps
    return np.bincount((d + max_delay_ps) // bin_width_ps, minlength=n_bins).astype(np.int64)


def _peak_bins(hist: CorrelationHistogram, k: int) -> np.ndarray | None:
    """Boolean mask of bins whose centre lies in the period window of peak k,
    or None when that window is not fully inside the histogram."""
    P = hist.rep_period_ps
    lo, hi = (k - 0.5) * P, (k + 0.5) * P
    if lo < -hist.max_delay_ps or hi > hist.max_delay_ps:
        return None
    c = hist.centers_ps
    return (c >= lo) & (c < hi)


def _require_pulsed(hist: CorrelationHistogram):
    if hist.rep_period_ps <= 0:
        raise UnsupportedModeError("peak analysis needs pulsed data (rep_period_ps > 0)")


def default_background_window(rep_period_ps: int) -> tuple[int, int]:
    """Band of width P/4 centred between the first and second side peaks."""
    c = 3 * rep_period_ps // 2
    return c - rep_period_ps // 8, c + rep_period_ps // 8


def clean_background(
    hist: CorrelationHistogram,
    tau_b_window: tuple[int, int] | None = None,
    check_window: bool = True,
) -> CorrelationHistogram:
    """Remove uncorrelated background with S_clean = (sqrt(S) - sqrt(S_b))**2.

    ``S_b`` is the mean raw count per bin over ``tau_b_window`` (delays in
    ps), a band between correlation peaks. Negative results are clamped to
    zero. The window is rejected when its mean exceeds half of the largest
    bin of the first side peaks while staying below it, i.e. when it sits on
    a peak flank.
    """
    if hist.stage != "raw":
        raise StageError(f"clean_background expects a raw histogram, got stage {hist.stage!r}")
    if tau_b_window is None:
        _require_pulsed(hist)
        tau_b_window = default_background_window(hist.rep_period_ps)
    lo, hi = tau_b_window
    c = hist.centers_ps
    sel = (c >= lo) & (c < hi)
    if not sel.any():
        raise InvalidWindowError(f"background window [{lo}, {hi}) ps contains no bins")
    S = np.asarray(hist.counts, dtype=float)
    s_b = float(S[sel].mean())
    if check_window and hist.rep_period_ps > 0:
        masks = [m for m in (_peak_bins(hist, 1), _peak_bins(hist, -1)) if m is not None]
        if masks:
            side_max = max(float(S[m].max()) for m in masks)
            if side_max > s_b > 0.5 * side_max:
                raise InvalidWindowError(
                    f"background window mean {s_b:.3g} exceeds half the side-peak maximum {side_max:.3g}"
                )
    cleaned = S + s_b - 2.0 * np.sqrt(S) * np.sqrt(s_b)
    cleaned = np.maximum(cleaned, 0.0)
    return replace(hist, counts=cleaned, stage="cleaned", background_cleaned=True)


def peak_areas(hist: CorrelationHistogram) -> dict[int, float]:
    """Sum of bin values in each fully contained period window, keyed by peak index."""
    _require_pulsed(hist)
    S = np.asarray(hist.counts, dtype=float)
    kmax = hist.max_delay_ps // hist.rep_period_ps + 1
    areas = {}
    for k in range(-kmax, kmax + 1):
        m = _peak_bins(hist, k)
        if m is not None and m.any():
            areas[k] = float(S[m].sum())
    return areas


def _reference_peaks(hist, reference_delay_ps):
    P = hist.rep_period_ps
    areas = peak_areas(hist)
    return {k: a for k, a in areas.items() if k != 0 and abs(k) * P >= reference_delay_ps}


def normalize_peaks(
    hist: CorrelationHistogram,
    rep_period_ps: int | None = None,
    reference_delay_ps: int | None = None,
) -> CorrelationHistogram:
    """Scale so that the mean height of the reference peaks is 1.

    Reference peaks are those at |k * P| >= ``reference_delay_ps``
    (default 10 periods), beyond the bunching caused by blinking. All bins
    are divided by (mean reference area / bins per window), so a window's
    mean normalised value is its normalised peak area.
    """
    if hist.stage == "normalized":
        raise StageError("histogram is already normalized")
    if rep_period_ps is not None:
        hist = replace(hist, rep_period_ps=int(rep_period_ps))
    _require_pulsed(hist)
    P = hist.rep_period_ps
    if reference_delay_ps is None:
        reference_delay_ps = DEFAULT_REFERENCE_PERIODS * P
    refs = _reference_peaks(hist, reference_delay_ps)
    if len(refs) < 3:
        raise InsufficientRangeError(
            f"only {len(refs)} reference peaks beyond {reference_delay_ps} ps inside max_delay"
        )
    bins_per_window = P / hist.bin_width_ps
    mean_area = float(np.mean(list(refs.values())))
    if mean_area <= 0:
        raise InsufficientRangeError("reference peaks are empty")
    values = np.asarray(hist.counts, dtype=float) / (mean_area / bins_per_window)
    return replace(hist, counts=values, stage="normalized", reference_delay_ps=int(reference_delay_ps))


def normalized_peak_areas(hist: CorrelationHistogram) -> dict[int, float]:
    """Window mean of normalised values per peak (1 on average for references)."""
    if hist.stage != "normalized":
        raise StageError("normalized_peak_areas needs a normalized histogram")
    bins_per_window = hist.rep_period_ps / hist.bin_width_ps
    return {k: a / bins_per_window for k, a in peak_areas(hist).items()}


def g2_zero(hist: CorrelationHistogram, n_side_peaks: int | None = None) -> G2Result:
    """Ratio of the zero-delay peak area to the mean reference peak area.

    ``n_side_peaks`` limits the reference set to the peaks nearest the
    reference delay on each side.
    """
    if hist.stage != "normalized":
        raise StageError(f"g2_zero needs a normalized histogram, got stage {hist.stage!r}")
    areas = normalized_peak_areas(hist)
    refs = _reference_peaks(hist, hist.reference_delay_ps)
    keys = sorted(refs, key=lambda k: (abs(k), k))
    if n_side_peaks is not None:
        pos = [k for k in keys if k > 0][:n_side_peaks]
        neg = [k for k in keys if k < 0][:n_side_peaks]
        keys = sorted(pos + neg, key=lambda k: (abs(k), k))
    if not keys:
        raise InsufficientRangeError("no reference peaks selected")
    side = float(np.mean([areas[k] for k in keys]))
    center = areas[0]
    return G2Result(
        g2_zero=center / side,
        center_area=center,
        mean_side_area=side,
        n_side_peaks_used=len(keys),
        background_cleaned=hist.background_cleaned,
    )
