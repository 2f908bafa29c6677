"""Monte Carlo photon streams from a blinking quantum-dot model.

The emitter alternates between a bright (neutral) and a dim (charged) state
with heavy-tailed dwell times. Each excitation pulse creates a Poisson number
of excitons; the first recombination yields a photon with the state's quantum
yield and, when two or more excitons are present, a second (biexciton) photon
escapes Auger quenching with probability ``biexciton_leak``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from numba import njit

from .core import DEFAULT_REP_PERIOD_PS, PhotonStream

__all__ = [
    "TruncatedPowerLaw",
    "EmitterModel",
    "SimulationTruth",
    "sample_truncated_power_law",
    "truncated_power_law_cdf",
    "simulate",
    "sweep_power",
    "expected_g2_zero",
    "leak_for_g2",
    "load_model",
    "save_model",
]


@dataclass(frozen=True)
class TruncatedPowerLaw:
    """Power law with exponential cut-off on ``[t_min_ps, inf)``.

    ``form="density"`` draws durations whose probability density is
    proportional to ``t**-m * exp(-t/tau_c)``. ``form="survival"`` draws
    durations whose survival function is
    ``(t/t_min)**-m * exp(-(t - t_min)/tau_c)``, the shape fitted to
    measured OFF-time distributions.
    """

    m: float
    tau_c_ps: float
    t_min_ps: float
    form: str = "density"

    def __post_init__(self):
        if self.tau_c_ps is None:
            object.__setattr__(self, "tau_c_ps", math.inf)
        if self.form not in ("density", "survival"):
            raise ValueError(f"form must be 'density' or 'survival', got {self.form!r}")
        if not self.m > 0:
            raise ValueError(f"m must be > 0, got {self.m}")
        if not self.t_min_ps > 0:
            raise ValueError(f"t_min_ps must be > 0, got {self.t_min_ps}")
        if not self.tau_c_ps > self.t_min_ps:
            raise ValueError("tau_c_ps must exceed t_min_ps")
        if self.form == "density" and self.m <= 1 and math.isinf(self.tau_c_ps):
            raise ValueError("density with m <= 1 needs a finite cut-off to be normalisable")

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["tau_c_ps"]):
            d["tau_c_ps"] = None
        return d


def truncated_power_law_cdf(law: TruncatedPowerLaw, t) -> np.ndarray:
    """Exact CDF; the density form is integrated numerically via the
    upper incomplete gamma function (or in closed form without cut-off)."""
    from scipy import special

    t = np.maximum(np.asarray(t, dtype=float), law.t_min_ps)
    if law.form == "survival":
        surv = (t / law.t_min_ps) ** (-law.m) * np.exp(-(t - law.t_min_ps) / law.tau_c_ps)
        return 1.0 - surv
    if math.isinf(law.tau_c_ps):
        return 1.0 - (t / law.t_min_ps) ** (1.0 - law.m)
    a = 1.0 - law.m
    x0 = law.t_min_ps / law.tau_c_ps
    x = t / law.tau_c_ps

    def upper(s, z):
        if s > 0:
            return special.gammaincc(s, z) * special.gamma(s)
        if s == 0:
            return special.exp1(z)
        # Gamma(s, z) = (Gamma(s+1, z) - z**s e**-z) / s for s < 0
        return (upper(s + 1.0, z) - z**s * np.exp(-z)) / s

    return 1.0 - upper(a, x) / upper(a, x0)


def sample_truncated_power_law(law: TruncatedPowerLaw, rng: np.random.Generator, size=None):
    """Draw durations (ps, float) from ``law``.

    The density form uses rejection sampling: a Pareto envelope when m > 1
    (accept with ``exp(-(t - t_min)/tau_c)``) and an exponential envelope
    otherwise (accept with ``(t/t_min)**-m``). The survival form is the
    minimum of a Pareto and a shifted exponential variate, whose survival
    functions multiply.
    """
    n = 1 if size is None else int(size)
    tmin, m, tc = law.t_min_ps, law.m, law.tau_c_ps
    if law.form == "survival":
        pareto = tmin * rng.random(n) ** (-1.0 / m)
        expo = tmin + rng.exponential(tc, n) if not math.isinf(tc) else np.full(n, np.inf)
        out = np.minimum(pareto, expo)
    else:
        out = np.empty(n)
        filled = 0
        while filled < n:
            k = max(2 * (n - filled), 64)
            if m > 1:
                cand = tmin * rng.random(k) ** (-1.0 / (m - 1.0))
                accept = rng.random(k) < np.exp(-(cand - tmin) / tc)
            else:
                cand = tmin + rng.exponential(tc, k)
                accept = rng.random(k) < (cand / tmin) ** (-m)
            got = cand[accept][: n - filled]
            out[filled : filled + len(got)] = got
            filled += len(got)
    return float(out[0]) if size is None else out


def _law_from(value):
    if value is None or isinstance(value, TruncatedPowerLaw):
        return value
    return TruncatedPowerLaw(**value)


@dataclass(frozen=True)
class EmitterModel:
    """Phenomenological emitter and detector parameters.

    Times are in ps. ``dwell_off=None`` disables blinking. ``bleach_tau_ps``
    of ``inf`` disables bleaching. ``irf_offset_ps`` is a constant
    instrument delay added to every emitted photon (the decay onset t0).
    ``biexciton_lifetime_ps`` defaults to half the bright lifetime.
    """

    rep_period_ps: int = DEFAULT_REP_PERIOD_PS
    mean_excitons_per_pulse: float = 1.0
    lifetime_bright_ps: float = 10_000.0
    lifetime_dim_ps: float = 2_000.0
    qy_bright: float = 0.7
    qy_dim: float = 0.05
    biexciton_leak: float = 0.0
    dwell_on: TruncatedPowerLaw | None = None
    dwell_off: TruncatedPowerLaw | None = None
    detect_efficiency: float = 0.005
    dark_rate_hz: float = 0.0
    bleach_tau_ps: float = math.inf
    irf_sigma_ps: float = 0.0
    irf_offset_ps: float = 0.0
    dead_time_ps: int = 0
    biexciton_lifetime_ps: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dwell_on", _law_from(self.dwell_on))
        object.__setattr__(self, "dwell_off", _law_from(self.dwell_off))
        if self.bleach_tau_ps is None:
            object.__setattr__(self, "bleach_tau_ps", math.inf)
        for name in ("qy_bright", "qy_dim", "biexciton_leak", "detect_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.qy_dim > self.qy_bright:
            raise ValueError("qy_dim must not exceed qy_bright")
        if self.rep_period_ps <= 0:
            raise ValueError("simulation needs a pulsed model (rep_period_ps > 0)")
        for name in ("lifetime_bright_ps", "lifetime_dim_ps", "bleach_tau_ps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.mean_excitons_per_pulse < 0 or self.dark_rate_hz < 0:
            raise ValueError("mean_excitons_per_pulse and dark_rate_hz must be >= 0")
        if self.irf_sigma_ps < 0 or self.dead_time_ps < 0:
            raise ValueError("irf_sigma_ps and dead_time_ps must be >= 0")

    @property
    def blinking(self) -> bool:
        return self.dwell_off is not None

    @property
    def tau_xx_ps(self) -> float:
        if self.biexciton_lifetime_ps is not None:
            return self.biexciton_lifetime_ps
        return self.lifetime_bright_ps / 2.0

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, TruncatedPowerLaw):
                v = v.to_dict()
            elif isinstance(v, float) and math.isinf(v):
                v = None
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EmitterModel":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown EmitterModel fields: {sorted(unknown)}")
        return cls(**d)


def load_model(path) -> EmitterModel:
    return EmitterModel.from_dict(json.loads(Path(path).read_text()))


def save_model(model: EmitterModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")


def _poisson_tail(n_mean: float) -> tuple[float, float]:
    """P(n = 1) and P(n >= 2) for Poisson(n_mean) excitons."""
    p0 = math.exp(-n_mean)
    p1 = n_mean * p0
    return p1, max(1.0 - p0 - p1, 0.0)


def expected_g2_zero(model: EmitterModel) -> float:
    """Ground-truth ratio of same-pulse to different-pulse coincidences.

    Independent of quantum yield, bleaching and detection efficiency, since
    both the pair rate and the squared single rate scale as (qy*eta)**2.
    Dark counts are ignored.
    """
    p1, p2 = _poisson_tail(model.mean_excitons_per_pulse)
    single = p1 + p2 + model.biexciton_leak * p2
    if single == 0:
        return 0.0
    return 2.0 * p2 * model.biexciton_leak / single**2


def leak_for_g2(target: float, mean_excitons: float = 1.0) -> float:
    """Biexciton leak that yields ``expected_g2_zero == target``."""
    p1, p2 = _poisson_tail(mean_excitons)
    pge1 = p1 + p2
    if target <= 0:
        return 0.0
    # target * (pge1 + L p2)^2 = 2 p2 L, smaller root
    a = target * p2 * p2
    b = 2.0 * target * pge1 * p2 - 2.0 * p2
    c = target * pge1 * pge1
    disc = b * b - 4 * a * c
    if disc < 0:
        raise ValueError(f"g2 target {target} unreachable at <N>={mean_excitons}")
    leak = 2 * c / (-b + math.sqrt(disc))  # smaller root without cancellation
    if not 0 <= leak <= 1:
        raise ValueError(f"g2 target {target} needs leak {leak:.3f} outside [0, 1]")
    return leak


@dataclass
class SimulationTruth:
    """Generator log kept for verification.

    ``state_edges_ps`` holds segment start times (plus the final end),
    ``state_on`` the state of each segment. The emission log lists every
    pulse that produced at least one detected photon.
    """

    state_edges_ps: np.ndarray
    state_on: np.ndarray
    n_pulses: int
    pulse_index: np.ndarray
    detected_exciton: np.ndarray
    detected_biexciton: np.ndarray
    n_dark: int

    @property
    def pair_pulses(self) -> int:
        return int(np.count_nonzero(self.detected_exciton & self.detected_biexciton))

    def on_fraction(self) -> float:
        lengths = np.diff(self.state_edges_ps)
        return float(lengths[self.state_on].sum() / lengths.sum())

    def state_at(self, t_ps) -> np.ndarray:
        idx = np.searchsorted(self.state_edges_ps, t_ps, side="right") - 1
        idx = np.clip(idx, 0, len(self.state_on) - 1)
        return self.state_on[idx]


def _state_timeline(model: EmitterModel, duration_ps: int, rng: np.random.Generator):
    if not model.blinking:
        return np.array([0.0, float(duration_ps)]), np.array([True])
    on_law = model.dwell_on if model.dwell_on is not None else model.dwell_off
    durations = []
    total = 0.0
    while total < duration_ps:
        on = sample_truncated_power_law(on_law, rng, 1024)
        off = sample_truncated_power_law(model.dwell_off, rng, 1024)
        pair = np.empty(2048)
        pair[0::2] = on
        pair[1::2] = off
        durations.append(pair)
        total += pair.sum()
    d = np.concatenate(durations)
    edges = np.concatenate([[0.0], np.cumsum(d)])
    n_seg = int(np.searchsorted(edges, duration_ps, side="left"))
    edges = edges[: n_seg + 1]
    edges[-1] = float(duration_ps)
    state_on = np.arange(n_seg) % 2 == 0
    return edges, state_on


def _bernoulli_positions(p: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices in [0, n) of successes of n Bernoulli(p) trials, via geometric gaps."""
    if p <= 0 or n <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n, dtype=np.int64)
    chunks = []
    last = -1
    expected = n * p
    batch = int(expected + 6 * math.sqrt(expected) + 16)
    while True:
        gaps = rng.geometric(p, batch).astype(np.int64)
        pos = last + np.cumsum(gaps)
        inside = pos < n
        chunks.append(pos[inside])
        if not inside.all():
            break
        last = int(pos[-1])
        batch = max(1024, batch // 4)
    return np.concatenate(chunks)


@njit(cache=True)
def _dead_time_mask(times, channels, dead_time):
    keep = np.ones(times.shape[0], dtype=np.bool_)
    last = np.full(256, -(2**62), dtype=np.int64)
    for i in range(times.shape[0]):
        c = channels[i]
        if times[i] - last[c] < dead_time:
            keep[i] = False
        else:
            last[c] = times[i]
    return keep


def simulate(model: EmitterModel, duration_ps: int, seed: int | None = None, return_truth: bool = False):
    """Generate a two-channel HBT photon stream.

    Active pulses (at least one detected photon) are drawn as a thinned
    Bernoulli process: candidates at the largest per-pulse activity
    probability, each accepted with the ratio of its actual probability
    (which depends on blinking state and bleaching) to that maximum. The
    photon outcome of an active pulse is then drawn from its conditional
    distribution. Photons are split 50/50 between the two channels.
    """
    duration_ps = int(duration_ps)
    P = int(model.rep_period_ps)
    if duration_ps < P:
        raise ValueError("duration must cover at least one excitation period")
    rng = np.random.default_rng(model.seed if seed is None else seed)

    edges, state_on = _state_timeline(model, duration_ps, rng)
    n_pulses = (duration_ps - 1) // P + 1  # pulses at 0, P, ... < duration
    p1, p2 = _poisson_tail(model.mean_excitons_per_pulse)
    eta = model.detect_efficiency
    leak = model.biexciton_leak

    def outcome_probs(q):
        d1 = q * eta
        d2 = leak * q * eta
        only_x = p1 * d1 + p2 * d1 * (1.0 - d2)
        only_xx = p2 * (1.0 - d1) * d2
        both = p2 * d1 * d2
        return only_x, only_xx, both

    q_max = model.qy_bright if state_on.any() else model.qy_dim
    p_max = sum(outcome_probs(q_max))
    cand = _bernoulli_positions(p_max, n_pulses, rng)
    t_pulse = cand * P
    seg = np.searchsorted(edges, t_pulse, side="right") - 1
    on = state_on[np.clip(seg, 0, len(state_on) - 1)]
    q = np.where(on, model.qy_bright, model.qy_dim)
    if not math.isinf(model.bleach_tau_ps):
        q = q * np.exp(-t_pulse / model.bleach_tau_ps)
    only_x, only_xx, both = outcome_probs(q)
    p_any = only_x + only_xx + both
    accept = rng.random(len(cand)) * p_max < p_any
    cand, t_pulse, on = cand[accept], t_pulse[accept], on[accept]
    only_x, only_xx, p_any = only_x[accept], only_xx[accept], p_any[accept]

    u = rng.random(len(cand)) * p_any
    has_x = (u < only_x) | (u >= only_x + only_xx)
    has_xx = u >= only_x

    tau_x = np.where(on, model.lifetime_bright_ps, model.lifetime_dim_ps)
    n_x = int(has_x.sum())
    n_xx = int(has_xx.sum())
    t_x = t_pulse[has_x] + rng.exponential(1.0, n_x) * tau_x[has_x]
    t_xx = t_pulse[has_xx] + rng.exponential(model.tau_xx_ps, n_xx)
    emitted = np.concatenate([t_x, t_xx]) + model.irf_offset_ps
    if model.irf_sigma_ps > 0:
        emitted = emitted + rng.normal(0.0, model.irf_sigma_ps, len(emitted))
    ch_emit = rng.integers(0, 2, len(emitted)).astype(np.uint8)

    n_dark = rng.poisson(model.dark_rate_hz * duration_ps * 1e-12, 2)
    dark_t = [rng.random(k) * duration_ps for k in n_dark]
    times = np.concatenate([emitted] + dark_t)
    chans = np.concatenate([ch_emit, np.zeros(n_dark[0], np.uint8), np.ones(n_dark[1], np.uint8)])

    times = np.floor(times).astype(np.int64)
    keep = (times >= 0) & (times < duration_ps)
    times, chans = times[keep], chans[keep]
    order = np.argsort(times, kind="stable")
    times, chans = times[order], chans[order]
    if model.dead_time_ps > 0:
        keep = _dead_time_mask(times, chans, int(model.dead_time_ps))
        times, chans = times[keep], chans[keep]

    stream = PhotonStream(
        channels=chans,
        times=times,
        rep_period_ps=P,
        duration_ps=duration_ps,
        meta={"source": "photonstat.sim", "seed": str(model.seed if seed is None else seed)},
        n_channels=2,
    )
    if not return_truth:
        return stream
    truth = SimulationTruth(
        state_edges_ps=edges,
        state_on=state_on,
        n_pulses=n_pulses,
        pulse_index=cand,
        detected_exciton=has_x,
        detected_biexciton=has_xx,
        n_dark=int(n_dark.sum()),
    )
    return stream, truth


def sweep_power(model: EmitterModel, powers, duration_ps: int, seed: int | None = None):
    """Detected count rate (counts/s) at each relative power P/P_sat.

    ``model.mean_excitons_per_pulse`` is taken as the value at P = P_sat.
    """
    out = []
    base_seed = model.seed if seed is None else seed
    for i, power in enumerate(powers):
        if power <= 0:
            raise ValueError(f"powers must be positive, got {power}")
        scaled = replace(model, mean_excitons_per_pulse=model.mean_excitons_per_pulse * power)
        stream = simulate(scaled, duration_ps, seed=base_seed + i)
        out.append((float(power), len(stream) / (duration_ps * 1e-12)))
    return out
