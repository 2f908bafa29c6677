import itertools

import numpy as np
import pytest

from photonstat.core import UnsupportedModeError
from photonstat.fitting import triexp_binned
from photonstat.lifetime import (
    DecayHistogram,
    DegenerateDataError,
    TriExpFit,
    average_lifetime,
    decay_histogram,
    fit_saturation,
    fit_triexp,
)
from photonstat.sim import EmitterModel, simulate

import decay_cases as dc
from conftest import S, make_stream


def _sig(a, b, digits=4):
    return abs(a - b) <= 0.5 * 10 ** (1 - digits) * abs(b)


# --- decay histogram ---------------------------------------------------------


def test_all_at_micro_time_zero():
    s = make_stream([0, 1, 0], [0, 400_000, 800_000])
    h = decay_histogram(s)
    assert h.counts[0] == 3 and h.counts.sum() == 3
    assert len(h.counts) == 4000


def test_counts_conserved(rng):
    times = np.sort(rng.integers(0, 10**10, 5000))
    s = make_stream(rng.integers(0, 2, 5000), times)
    h = decay_histogram(s, bin_width_ps=256)
    assert h.counts.sum() == 5000
    assert h.edges_ps[-1] == 400_000


def test_peak_normalized():
    s = make_stream([0, 0, 0], [0, 100, 400_000])
    h = decay_histogram(s, normalize=True)
    assert h.counts.max() == 1.0 and h.normalization == "peak"


def test_cw_rejected():
    with pytest.raises(UnsupportedModeError):
        decay_histogram(make_stream([0, 1], [1, 2], rep_period_ps=0))


def test_mono_exponential_slope():
    model = EmitterModel(lifetime_bright_ps=10_000, detect_efficiency=0.02, irf_offset_ps=3130, seed=7)
    h = decay_histogram(simulate(model, 5 * S))
    t = h.centers_ns
    sel = (t >= 3.13 + 2) & (t <= 3.13 + 40)
    slope = np.polyfit(t[sel], np.log(h.counts[sel]), 1)[0]
    assert slope == pytest.approx(-0.1, rel=0.02)


# --- tri-exponential fit -----------------------------------------------------


@pytest.mark.parametrize("key", list(dc.all_fit_params()))
def test_noiseless_table_recovery(key):
    p = dc.all_fit_params()[key]
    fit = fit_triexp(dc.noiseless(p))
    assert fit.converged
    truth = TriExpFit.from_params(p, residual_rms=0.0, converged=True)
    for a, b in zip(fit.params, truth.params):
        assert _sig(a, b), (fit.params, truth.params)


def test_noisy_s2_x1():
    rng = np.random.default_rng(0)
    p = dc.scaled(dc.bare_params("x1"), 10**6)
    fit = fit_triexp(dc.poisson_hist(p, rng))
    np.testing.assert_allclose(fit.lifetimes_ns, p[3:6], rtol=0.1)


def test_mono_exponential_input():
    p = dc.params((1000.0, 0.0, 0.0), (10.0, 1.0, 2.0), 3.13, 0.0)
    p[3:6] = [10.0, 10.0, 10.0]
    h = dc.noiseless(p)
    fit = fit_triexp(h)
    amps = np.array(fit.amplitudes)
    taus = np.array(fit.lifetimes_ns)
    dominant = np.argmax(amps)
    assert taus[dominant] == pytest.approx(10.0, rel=1e-3)
    for i in range(3):
        if i != dominant:
            assert amps[i] < 1e-3 * amps[dominant] or taus[i] == pytest.approx(10.0, rel=1e-3)
    # the modelled curve is the mono-exponential regardless of how it is split
    np.testing.assert_allclose(triexp_binned(h.edges_ns, fit.params), h.counts, rtol=1e-6, atol=1e-9)


def test_flat_histogram_degenerate():
    with pytest.raises(DegenerateDataError):
        fit_triexp(DecayHistogram(100, np.full(4000, 5), 400_000))


def test_too_few_bins_degenerate():
    counts = np.zeros(4000)
    counts[10:40] = np.arange(30, 0, -1)
    with pytest.raises(DegenerateDataError):
        fit_triexp(DecayHistogram(100, counts, 400_000))


def test_unknown_weighting():
    with pytest.raises(ValueError):
        fit_triexp(dc.noiseless(dc.bare_params("x1")), weighting="chi")


@pytest.mark.parametrize("weighting", ["poisson", "neyman", "none"])
def test_scale_invariance(weighting):
    rng = np.random.default_rng(3)
    # weights 1/max(count, 1) scale with the counts only where no bin is empty
    p = dc.scaled(dc.bare_params("x0.8"), 3 * 10**5)
    p[7] = 30.0
    h = dc.poisson_hist(p, rng)
    assert h.counts.min() >= 1
    k = 7.0
    a = fit_triexp(h, weighting=weighting)
    b = fit_triexp(DecayHistogram(h.bin_width_ps, h.counts * k, h.rep_period_ps), weighting=weighting)
    np.testing.assert_allclose(b.lifetimes_ns, a.lifetimes_ns, rtol=1e-6)
    assert b.t0_ns == pytest.approx(a.t0_ns, rel=1e-6)
    np.testing.assert_allclose(b.amplitudes, k * np.array(a.amplitudes), rtol=1e-5)


def test_init_is_used():
    p = dc.bare_params("x0")
    h = dc.noiseless(p)
    start = TriExpFit.from_params(p * 1.05, residual_rms=0.0, converged=True)
    fit = fit_triexp(h, init=start)
    np.testing.assert_allclose(fit.lifetimes_ns, p[3:6], rtol=1e-4)


def test_fit_dict_has_averages():
    d = fit_triexp(dc.noiseless(dc.bare_params("x1"))).to_dict()
    assert d["average_lifetime_ns"]["amplitude_weighted"] == pytest.approx(18.18, abs=0.01)
    assert d["average_lifetime_ns"]["intensity_weighted"] == pytest.approx(28.69, abs=0.01)


def test_random_triple_recovery():
    ok = 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        p = dc.random_triple(rng)
        fit = fit_triexp(dc.poisson_hist(p, rng))
        ok += bool(np.all(np.abs(np.array(fit.lifetimes_ns) / p[3:6] - 1) < 0.15))
    assert ok >= 95


# --- average lifetime --------------------------------------------------------


def _fit(amps, taus, converged=True):
    return TriExpFit(tuple(amps), tuple(taus), 0.0, 0.0, 0.0, converged)


def test_average_permutation_invariant():
    amps, taus = (0.3, 0.5, 0.2), (1.0, 4.0, 20.0)
    ref = {c: average_lifetime(_fit(amps, taus), c) for c in ("amplitude_weighted", "intensity_weighted")}
    for perm in itertools.permutations(range(3)):
        f = _fit([amps[i] for i in perm], [taus[i] for i in perm])
        for c, v in ref.items():
            assert average_lifetime(f, c) == pytest.approx(v, rel=1e-14)


def test_average_single_component():
    f = _fit((2.0, 0.0, 0.0), (7.5, 1.0, 3.0))
    assert average_lifetime(f) == pytest.approx(7.5)
    assert average_lifetime(f, "intensity_weighted") == pytest.approx(7.5)


def test_average_table_values():
    amps, taus, _, _ = dc.FULL_FITS["x0"]
    assert average_lifetime(_fit(amps, taus)) == pytest.approx(2.405, abs=5e-4)
    amps, taus = dc.BARE_FITS["x0.8"]
    # 13.0666 / 1.055
    assert average_lifetime(_fit(amps, taus)) == pytest.approx(12.385, abs=5e-4)
    assert average_lifetime(_fit(amps, taus), "intensity_weighted") == pytest.approx(15.48, abs=5e-3)


def test_average_requires_convergence():
    with pytest.raises(ValueError):
        average_lifetime(_fit((1, 1, 1), (1, 2, 3), converged=False))
    assert average_lifetime(_fit((1, 1, 1), (1, 2, 3), converged=False), strict=False) == pytest.approx(2.0)


def test_average_unknown_convention():
    with pytest.raises(ValueError):
        average_lifetime(_fit((1, 1, 1), (1, 2, 3)), "median")


# --- saturation --------------------------------------------------------------


def _sat_points(A, B, psat, powers):
    p = np.asarray(powers, dtype=float)
    return list(zip(p, A * (1 - np.exp(-p / psat)) + B * p / psat))


def test_saturation_exact_recovery():
    fit = fit_saturation(_sat_points(100, 0, 1, np.geomspace(0.05, 8, 12)))
    assert fit.converged
    assert fit.A == pytest.approx(100, rel=1e-6)
    assert fit.P_sat == pytest.approx(1, rel=1e-6)
    assert fit.B < 1e-3 * fit.A


def test_saturation_with_linear_term():
    fit = fit_saturation(_sat_points(80, 12, 0.7, np.geomspace(0.05, 10, 15)))
    assert (fit.A, fit.B, fit.P_sat) == pytest.approx((80, 12, 0.7), rel=1e-6)
    np.testing.assert_allclose(fit.predict([0.7]), 80 * (1 - np.exp(-1)) + 12, rtol=1e-6)


def test_saturation_noisy_b_nonnegative():
    rng = np.random.default_rng(9)
    pts = [(p, i * (1 + 0.01 * rng.standard_normal())) for p, i in _sat_points(50, 0, 2, np.geomspace(0.1, 20, 10))]
    fit = fit_saturation(pts)
    assert fit.B >= 0 and fit.A > 0 and fit.P_sat > 0
    assert fit.P_sat == pytest.approx(2, rel=0.1)


@pytest.mark.parametrize(
    "points",
    [
        [(1, 1), (2, 2), (10, 3)],
        [(0, 1), (1, 2), (5, 3), (10, 4)],
        [(1, 1), (2, 2), (3, 3), (5, 4)],
    ],
)
def test_saturation_preconditions(points):
    with pytest.raises(ValueError):
        fit_saturation(points)
