"""Decay-curve generators shared by the lifetime and acceptance tests."""

import numpy as np

from photonstat.fitting import triexp_binned
from photonstat.lifetime import DecayHistogram

P = 400_000
BIN_PS = 100

# (A1, A2, A3), (tau1, tau2, tau3) ns, t0 ns, baseline
FULL_FITS = {
    "x0": ((0.46, 0.50, 0.024), (3.0, 1.35, 13.0), 3.17, 0.003),
    "x0.6": ((0.489, 0.336, 0.089), (2.18, 13.1, 79.0), 3.13, 0.01),
    "x0.8": ((0.346, 0.360, 0.195), (5.8, 28.3, 150.0), 3.13, 0.002),
    "x1": ((0.235, 0.304, 0.366), (4.1, 30.0, 337.0), 3.13, 0.001),
}
# published without t0 or baseline; the onset above and a small constant are used
BARE_FITS = {
    "x0": ((0.430, 0.678, 0.013), (3.5, 8.4, 31.6)),
    "x0.8": ((0.259, 0.761, 0.035), (4.5, 13.9, 37.8)),
    "x1": ((0.320, 0.634, 0.100), (3.9, 19.6, 54.9)),
}
BARE_T0 = 3.13
BARE_BASELINE_FRACTION = 0.002


def params(amps, taus, t0, baseline):
    return np.array([*amps, *taus, t0, baseline], dtype=float)


def bare_params(key):
    amps, taus = BARE_FITS[key]
    return params(amps, taus, BARE_T0, BARE_BASELINE_FRACTION * sum(amps))


def all_fit_params():
    out = {f"full {k}": params(*v) for k, v in FULL_FITS.items()}
    out.update({f"bare {k}": bare_params(k) for k in BARE_FITS})
    return out


def edges_ns(bin_ps=BIN_PS, period=P):
    return np.append(np.arange(0, period, bin_ps), period) * 1e-3


def noiseless(p, bin_ps=BIN_PS):
    return DecayHistogram(bin_ps, triexp_binned(edges_ns(bin_ps), p), P)


def scaled(p, n_photons, bin_ps=BIN_PS):
    """Parameters rescaled so the expected histogram total is n_photons."""
    total = triexp_binned(edges_ns(bin_ps), p).sum()
    q = np.array(p, dtype=float)
    q[[0, 1, 2, 7]] *= n_photons / total
    return q


def poisson_hist(p, rng, bin_ps=BIN_PS):
    mu = triexp_binned(edges_ns(bin_ps), p)
    return DecayHistogram(bin_ps, rng.poisson(mu).astype(np.int64), P)


def random_triple(rng, n_photons=100_000, background=0.02):
    """Ground truth with lifetime ratios 3-5 and photon fractions >= 0.15."""
    tau1 = rng.uniform(0.8, 3.0)
    taus = tau1 * np.cumprod([1.0, rng.uniform(3, 5), rng.uniform(3, 5)])
    frac = rng.dirichlet(np.ones(3)) * 0.55 + 0.15
    n_bins = P // BIN_PS
    amps = (1 - background) * n_photons * frac / taus * (BIN_PS * 1e-3)
    return params(amps, taus, 3.13, background * n_photons / n_bins)
