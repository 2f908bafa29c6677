"""Decay histograms, tri-exponential and saturation fits, average lifetimes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .core import PhotonStatError, PhotonStream, micro_times
from .fitting import (
    levenberg_marquardt,
    saturation,
    saturation_jac,
    triexp_binned,
    triexp_binned_jac,
)

__all__ = [
    "DegenerateDataError",
    "DecayHistogram",
    "TriExpFit",
    "SaturationFit",
    "decay_histogram",
    "fit_triexp",
    "average_lifetime",
    "fit_saturation",
]

DEFAULT_DECAY_BIN_PS = 100
MAX_REWEIGHT = 8


class DegenerateDataError(PhotonStatError):
    pass


@dataclass(frozen=True, eq=False)
class DecayHistogram:
    """Micro-time histogram covering one excitation period [0, rep_period)."""

    bin_width_ps: int
    counts: np.ndarray
    rep_period_ps: int
    normalization: str = "raw"

    @property
    def edges_ps(self) -> np.ndarray:
        e = np.arange(0, self.rep_period_ps, self.bin_width_ps, dtype=np.int64)
        return np.append(e, self.rep_period_ps)

    @property
    def edges_ns(self) -> np.ndarray:
        return self.edges_ps * 1e-3

    @property
    def centers_ns(self) -> np.ndarray:
        e = self.edges_ns
        return 0.5 * (e[:-1] + e[1:])

    def peak_normalized(self) -> "DecayHistogram":
        counts = np.asarray(self.counts, dtype=float)
        return DecayHistogram(self.bin_width_ps, counts / counts.max(), self.rep_period_ps, "peak")


def decay_histogram(
    stream: PhotonStream, bin_width_ps: int = DEFAULT_DECAY_BIN_PS, normalize: bool = False
) -> DecayHistogram:
    mt = micro_times(stream)
    bin_width_ps = int(bin_width_ps)
    n_bins = -(-stream.rep_period_ps // bin_width_ps)
    counts = np.bincount(mt // bin_width_ps, minlength=n_bins).astype(np.int64)
    hist = DecayHistogram(bin_width_ps, counts, stream.rep_period_ps)
    return hist.peak_normalized() if normalize else hist


@dataclass(frozen=True)
class TriExpFit:
    """Tri-exponential decay parameters; lifetimes (ns) sorted ascending.

    Amplitudes are in histogram units at the decay onset ``t0_ns``.
    """

    amplitudes: tuple[float, float, float]
    lifetimes_ns: tuple[float, float, float]
    t0_ns: float
    baseline: float
    residual_rms: float
    converged: bool
    n_iter: int = 0
    cost: float = float("nan")
    stderr: dict | None = None

    @property
    def params(self) -> np.ndarray:
        return np.array([*self.amplitudes, *self.lifetimes_ns, self.t0_ns, self.baseline])

    @classmethod
    def from_params(cls, p, **kw) -> "TriExpFit":
        order = np.argsort(p[3:6])
        return cls(
            amplitudes=tuple(float(p[i]) for i in order),
            lifetimes_ns=tuple(float(p[3 + i]) for i in order),
            t0_ns=float(p[6]),
            baseline=float(p[7]),
            **kw,
        )

    def to_dict(self) -> dict:
        return {
            "amplitudes": list(self.amplitudes),
            "lifetimes_ns": list(self.lifetimes_ns),
            "t0_ns": self.t0_ns,
            "baseline": self.baseline,
            "residual_rms": self.residual_rms,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "stderr": self.stderr,
            "average_lifetime_ns": {
                "amplitude_weighted": average_lifetime(self, "amplitude_weighted", strict=False),
                "intensity_weighted": average_lifetime(self, "intensity_weighted", strict=False),
            },
        }


def _noise_level(y):
    d = np.diff(y[-max(len(y) // 10, 8) :])
    return 1.4826 * float(np.median(np.abs(d - np.median(d)))) / np.sqrt(2)


def _tertile_lifetimes(t, excess, bw):
    """Log-linear slopes over three equal spans of the decay."""
    taus = []
    for part in np.array_split(np.arange(len(t)), 3):
        good = part[excess[part] > 0]
        tau = np.nan
        if good.size >= 2:
            slope = np.polyfit(t[good], np.log(excess[good]), 1)[0]
            if slope < 0:
                tau = -1.0 / slope
        taus.append(tau)
    taus = np.array(taus)
    fallback = max(t[-1] - t[0], 3 * bw) / np.array([30.0, 6.0, 1.5])
    taus = np.where(np.isfinite(taus), taus, fallback)
    taus = np.sort(np.clip(taus, bw, None))
    for i in (1, 2):
        taus[i] = max(taus[i], 1.5 * taus[i - 1])
    return taus


def _linear_amplitudes(edges, taus, t0):
    cols = [triexp_binned(edges, np.array([*(np.eye(3)[i]), *taus, t0, 0.0])) for i in range(3)]
    return np.column_stack(cols + [np.ones(len(edges) - 1)])


def _initial_triexp(edges, y, peak, bw):
    t = 0.5 * (edges[:-1] + edges[1:])
    if peak >= 5:
        b0 = float(np.median(y[: peak - 1]))
    else:
        b0 = float(np.median(y[-max(len(y) // 20, 5) :]))
    t0 = edges[peak] - 0.5 * bw
    excess = y - b0
    floor = max(1e-3 * excess[peak], 2 * _noise_level(y))
    below = np.flatnonzero(excess[peak:] < floor)
    end = peak + (below[0] if below.size else len(y) - peak)
    end = max(end, peak + 6)
    taus = _tertile_lifetimes(t[peak:end], excess[peak:end], bw)
    X = _linear_amplitudes(edges, taus, t0)
    amps, _ = nnls(X[:, :3], np.maximum(y - b0, 0.0))
    return np.array([*amps, *taus, t0, b0])


def _failed(res, bw):
    """Non-converged, an empty component, or a lifetime below a tenth of a bin."""
    p = res.params
    return not res.converged or np.any(p[0:3] <= 0) or np.any(p[3:6] < 0.1 * bw)


WEIGHTINGS = ("poisson", "neyman", "none")


def fit_triexp(
    hist: DecayHistogram,
    init: TriExpFit | None = None,
    weighting: str = "poisson",
    multistart: bool = True,
) -> TriExpFit:
    """Fit A1 e^{-(t-t0)/tau1} + A2 e^{-(t-t0)/tau2} + A3 e^{-(t-t0)/tau3} + B.

    The model is averaged over each histogram bin and is zero before t0, so
    the onset is resolved below the bin width. Fitting starts one bin before
    the peak bin.

    Args:
        hist: Decay histogram.
        init: Starting parameters; by default lifetimes come from log-slopes
            over three spans of the decay and amplitudes from NNLS.
        weighting: ``neyman`` weights bins by 1/max(count, 1). ``poisson``
            (default) starts from that fit and then reweights by the inverse
            model value until the parameters settle, which removes the
            downward bias 1/count weights give low-count tails. ``none`` is
            ordinary least squares.
        multistart: If the first fit fails to converge or collapses a
            component onto a bound, restart with all lifetimes scaled by 0.3
            and 3. Converged, non-degenerate results are preferred, then
            lower cost.
    """
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")
    y_all = np.asarray(hist.counts, dtype=float)
    if y_all.size == 0 or np.all(y_all == y_all[0]):
        raise DegenerateDataError("decay histogram is flat")
    peak = int(np.argmax(y_all))
    if np.count_nonzero(y_all[peak + 1 :]) < 50:
        raise DegenerateDataError("need at least 50 non-empty bins after the decay peak")
    bw = hist.bin_width_ps * 1e-3
    start = max(peak - 1, 0)
    edges = hist.edges_ns[start:]
    y = y_all[start:]
    w = np.ones_like(y) if weighting == "none" else 1.0 / np.maximum(y, 1.0)
    p0 = init.params if init is not None else _initial_triexp(hist.edges_ns, y_all, peak, bw)

    lower = [0.0, 0.0, 0.0, 1e-3 * bw, 1e-3 * bw, 1e-3 * bw, edges[0], -np.inf]
    upper = [np.inf, np.inf, np.inf, np.inf, np.inf, np.inf, edges[min(3, len(edges) - 1)], np.inf]

    def run(p, w=w):
        return levenberg_marquardt(
            lambda q: triexp_binned(edges, q),
            lambda q: triexp_binned_jac(edges, q),
            p,
            y,
            weights=w,
            lower=lower,
            upper=upper,
        )

    def rank(res):
        return (res.converged, not _failed(res, bw), -res.cost)

    best = run(p0)
    if multistart and _failed(best, bw):
        for factor in (0.3, 3.0):
            p = p0.copy()
            p[3:6] *= factor
            X = _linear_amplitudes(edges, p[3:6], p[6])
            p[0:3] = nnls(X[:, :3], np.maximum(y - p[7], 0.0))[0]
            res = run(p)
            if rank(res) > rank(best):
                best = res
    if weighting == "poisson":
        for _ in range(MAX_REWEIGHT):
            mu = triexp_binned(edges, best.params)
            res = run(best.params, 1.0 / np.maximum(mu, 1e-9 * mu.max()))
            change = np.max(np.abs(res.params - best.params) / np.maximum(np.abs(best.params), 1e-12))
            best = res
            if change < 1e-7:
                break
    se = best.stderr()
    order = np.argsort(best.params[3:6])
    stderr = {
        "amplitudes": [float(se[i]) for i in order],
        "lifetimes_ns": [float(se[3 + i]) for i in order],
        "t0_ns": float(se[6]),
        "baseline": float(se[7]),
    }
    return TriExpFit.from_params(
        best.params,
        residual_rms=float(np.sqrt(np.mean(best.residuals**2))),
        converged=bool(best.converged),
        n_iter=best.n_iter,
        cost=best.cost,
        stderr=stderr,
    )


def average_lifetime(fit: TriExpFit, convention: str = "amplitude_weighted", strict: bool = True) -> float:
    """Average lifetime (ns).

    amplitude_weighted: sum(A tau) / sum(A); intensity_weighted:
    sum(A tau^2) / sum(A tau).
    """
    if strict and not fit.converged:
        raise ValueError("average lifetime of a non-converged fit")
    a = np.asarray(fit.amplitudes, dtype=float)
    tau = np.asarray(fit.lifetimes_ns, dtype=float)
    if convention == "amplitude_weighted":
        return float(np.sum(a * tau) / np.sum(a))
    if convention == "intensity_weighted":
        return float(np.sum(a * tau**2) / np.sum(a * tau))
    raise ValueError(f"unknown convention {convention!r}")


@dataclass(frozen=True)
class SaturationFit:
    A: float
    B: float
    P_sat: float
    residual_rms: float
    converged: bool
    stderr: tuple[float, float, float] = (np.nan, np.nan, np.nan)

    def predict(self, power) -> np.ndarray:
        return saturation(power, np.array([self.A, self.B, self.P_sat]))

    def to_dict(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "P_sat": self.P_sat,
            "residual_rms": self.residual_rms,
            "converged": self.converged,
            "stderr": {"A": self.stderr[0], "B": self.stderr[1], "P_sat": self.stderr[2]},
        }


def fit_saturation(points) -> SaturationFit:
    """Fit I = A (1 - exp(-P/P_sat)) + B P/P_sat to (power, intensity) pairs."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise ValueError("need at least 4 (power, intensity) points")
    pts = pts[np.argsort(pts[:, 0])]
    power, inten = pts[:, 0], pts[:, 1]
    if power[0] <= 0 or power[-1] / power[0] < 10:
        raise ValueError("powers must be positive and span at least one decade")
    target = (1.0 - np.exp(-1.0)) * inten.max()
    k = int(np.argmax(inten >= target))
    if k == 0:
        psat0 = power[0]
    else:
        f = (target - inten[k - 1]) / (inten[k] - inten[k - 1])
        psat0 = power[k - 1] + f * (power[k] - power[k - 1])
    X = saturation_jac(power, np.array([1.0, 1.0, psat0]))[:, :2]
    ab, _ = nnls(X, inten)
    res = levenberg_marquardt(
        lambda q: saturation(power, q),
        lambda q: saturation_jac(power, q),
        [ab[0], ab[1], psat0],
        inten,
        lower=[0.0, 0.0, 1e-12 * power[-1]],
    )
    A, B, psat = res.params
    return SaturationFit(
        A=float(A),
        B=float(B),
        P_sat=float(psat),
        residual_rms=float(np.sqrt(np.mean(res.residuals**2))),
        converged=bool(res.converged),
        stderr=tuple(float(x) for x in res.stderr()),
    )
