"""Damped Gauss-Newton (Levenberg-Marquardt) least squares and fit models.

Every model is a pair ``f(x, p)`` / ``jac(x, p)`` with an analytic Jacobian
of shape ``(len(x), len(p))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "LMResult",
    "levenberg_marquardt",
    "triexp_binned",
    "triexp_binned_jac",
    "saturation",
    "saturation_jac",
    "gaussian",
    "gaussian_jac",
    "truncated_power_law",
    "truncated_power_law_jac",
    "FWHM_PER_SIGMA",
]

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


@dataclass
class LMResult:
    params: np.ndarray
    cost: float
    initial_cost: float
    n_iter: int
    converged: bool
    jac: np.ndarray
    residuals: np.ndarray
    weights: np.ndarray

    @property
    def gradient(self) -> np.ndarray:
        return self.jac.T @ (self.weights * self.residuals)

    def stderr(self) -> np.ndarray:
        """Standard errors from the inverse weighted normal matrix.

        Scaled by the reduced chi-square so that unweighted fits still get
        meaningful uncertainties.
        """
        n, p = self.jac.shape
        jw = self.jac * np.sqrt(self.weights)[:, None]
        cov = np.linalg.pinv(jw.T @ jw)
        dof = max(n - p, 1)
        return np.sqrt(np.clip(np.diag(cov) * 2.0 * self.cost / dof, 0.0, None))


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    p0,
    y,
    weights=None,
    lower=None,
    upper=None,
    ftol: float = 1e-8,
    max_iter: int = 500,
    lam0: float = 1e-3,
) -> LMResult:
    """Minimise ``0.5 * sum(w * (fun(p) - y)**2)``.

    Marquardt scaling: the damping term is ``lam * diag(J^T W J)``; a
    rejected step multiplies ``lam`` by 10, an accepted one divides it.
    Bounds are enforced by clipping the trial point. Iteration stops when an
    accepted step changes the cost by less than ``ftol`` relative, when the
    cost reaches round-off level, or after ``max_iter`` iterations.
    """
    p = np.array(p0, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    lo = np.full(p.shape, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(p.shape, np.inf) if upper is None else np.asarray(upper, dtype=float)
    p = np.clip(p, lo, hi)

    r = fun(p) - y
    cost = 0.5 * float(np.sum(w * r * r))
    initial_cost = cost
    floor = 1e-28 * max(float(np.sum(w * y * y)), 1e-300)
    lam = lam0
    converged = False
    J = jac(p)
    it = 0
    while it < max_iter:
        it += 1
        Jw = J * w[:, None]
        A = J.T @ Jw
        g = Jw.T @ r
        d = np.diag(A).copy()
        d[d <= 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = np.clip(p + step, lo, hi)
            if not np.all(np.isfinite(trial)):
                lam *= 10.0
                continue
            r_new = fun(trial) - y
            cost_new = 0.5 * float(np.sum(w * r_new * r_new))
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no descent direction left at working precision
            converged = True
            break
        rel = (cost - cost_new) / max(cost, 1e-300)
        p, r, cost = trial, r_new, cost_new
        J = jac(p)
        lam = max(lam / 10.0, 1e-12)
        if cost <= floor or rel < ftol:
            converged = True
            break
    return LMResult(
        params=p,
        cost=cost,
        initial_cost=initial_cost,
        n_iter=it,
        converged=converged,
        jac=J,
        residuals=r,
        weights=w,
    )


# --- tri-exponential decay, averaged over histogram bins ---------------------
#
# Parameter vector: [A1, A2, A3, tau1, tau2, tau3, t0, baseline]. The decay is
# zero before t0 (a step at the pulse arrival), so each bin value is the mean
# of  B + sum_i A_i exp(-(t - t0)/tau_i) H(t - t0)  over [lo, hi).


def _triexp_parts(edges, p):
    lo = edges[:-1][:, None]
    hi = edges[1:][:, None]
    width = hi - lo
    amp = np.asarray(p[0:3])[None, :]
    tau = np.asarray(p[3:6])[None, :]
    t0 = p[6]
    u = np.maximum(lo, t0) - t0
    v = np.maximum(hi, t0) - t0
    eu = np.exp(-u / tau)
    ev = np.exp(-v / tau)
    return lo, hi, width, amp, tau, t0, u, v, eu, ev


def triexp_binned(edges, p) -> np.ndarray:
    _, _, width, amp, tau, _, _, _, eu, ev = _triexp_parts(edges, p)
    return np.sum(amp * tau * (eu - ev) / width, axis=1) + p[7]


def triexp_binned_jac(edges, p) -> np.ndarray:
    lo, hi, width, amp, tau, t0, u, v, eu, ev = _triexp_parts(edges, p)
    J = np.empty((len(edges) - 1, 8))
    J[:, 0:3] = tau * (eu - ev) / width
    J[:, 3:6] = amp * ((1 + u / tau) * eu - (1 + v / tau) * ev) / width
    J[:, 6] = np.sum(amp * (eu * (lo > t0) - ev * (hi > t0)) / width, axis=1)
    J[:, 7] = 1.0
    return J


def triexp_point(t, p) -> np.ndarray:
    """Point-sampled tri-exponential, zero before t0 apart from the baseline."""
    t = np.asarray(t, dtype=float)[:, None]
    dt = t - p[6]
    val = np.where(dt >= 0, np.asarray(p[0:3]) * np.exp(-np.maximum(dt, 0) / np.asarray(p[3:6])), 0.0)
    return val.sum(axis=1) + p[7]


# --- saturation: I = A (1 - exp(-P/Psat)) + B P/Psat, p = [A, B, Psat] --------


def saturation(power, p) -> np.ndarray:
    x = np.asarray(power, dtype=float) / p[2]
    return p[0] * (1.0 - np.exp(-x)) + p[1] * x


def saturation_jac(power, p) -> np.ndarray:
    power = np.asarray(power, dtype=float)
    x = power / p[2]
    e = np.exp(-x)
    J = np.empty((len(power), 3))
    J[:, 0] = 1.0 - e
    J[:, 1] = x
    J[:, 2] = -(power / p[2] ** 2) * (p[0] * e + p[1])
    return J


# --- gaussian with constant baseline, p = [amplitude, center, sigma, baseline]


def gaussian(x, p) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return p[0] * np.exp(-0.5 * ((x - p[1]) / p[2]) ** 2) + p[3]


def gaussian_jac(x, p) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = x - p[1]
    g = np.exp(-0.5 * (d / p[2]) ** 2)
    J = np.empty((len(x), 4))
    J[:, 0] = g
    J[:, 1] = p[0] * g * d / p[2] ** 2
    J[:, 2] = p[0] * g * d**2 / p[2] ** 3
    J[:, 3] = 1.0
    return J


# --- truncated power law: C t^-m exp(-t/tau_c), p = [C, m, tau_c] -----------


def truncated_power_law(t, p) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return p[0] * t ** (-p[1]) * np.exp(-t / p[2])


def truncated_power_law_jac(t, p) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    f = truncated_power_law(t, p)
    J = np.empty((len(t), 3))
    J[:, 0] = f / p[0]
    J[:, 1] = -np.log(t) * f
    J[:, 2] = f * t / p[2] ** 2
    return J


def log_truncated_power_law(t, p) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.log(p[0]) - p[1] * np.log(t) - t / p[2]


def log_truncated_power_law_jac(t, p) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    J = np.empty((len(t), 3))
    J[:, 0] = 1.0 / p[0]
    J[:, 1] = -np.log(t)
    J[:, 2] = t / p[2] ** 2
    return J
