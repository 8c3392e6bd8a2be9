"""Orthogonal resource allocation for fixed antenna positions.

Each device m has an effective SNR coefficient ``gamma_m`` and earns
``q_m log2(1 + gamma_m / q_m)`` bits/s/Hz from a resource fraction ``q_m``.
Three allocators are provided: the stationarity (Lambert W) closed form,
an exact equal-rate max-min solver, and the equal split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pinchopt import _kernels
from pinchopt.channel import Scenario, AntennaLayout, effective_gains, conventional_gains

METHODS = ("closed_form", "bisection", "equal")

Q_TOL = 1e-10
RATE_TOL = 1e-9
LAMBERTW_TOL = 1e-15


def lambert_w_minus1(x):
    """Lower real branch ``W_{-1}`` of the Lambert W function on ``[-1/e, 0)``.

    Halley iteration seeded with ``ln(-x) - ln(-ln(-x))``, or with the
    branch-point series when ``x`` is close to ``-1/e``.  Accepts scalars or
    arrays; returns ``w <= -1`` with ``w * exp(w) == x``.
    """
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    # one ulp of slack at -1/e, where the float nearest -1/e may sit just below it
    if np.any(arr < -_kernels.INV_E * (1 + 2**-52)) or np.any(arr >= 0) or np.any(~np.isfinite(arr)):
        raise ValueError("W_{-1} is real only on [-1/e, 0)")
    w = _kernels.lambertw_m1(np.ascontiguousarray(arr), LAMBERTW_TOL, 100)
    return float(w[0]) if np.ndim(x) == 0 else w


def rates(q, gamma) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.log2(1.0 + np.asarray(gamma) / q)


@dataclass(frozen=True)
class AllocationResult:
    q: np.ndarray
    rates: np.ndarray
    min_rate: float
    method: str
    branch_consistent: bool | None = None

    @classmethod
    def from_shares(cls, q, gamma, method, branch_consistent=None):
        q = np.asarray(q, dtype=float)
        r = rates(q, gamma)
        return cls(q, r, float(r.min()), method, branch_consistent)


def _check_gamma(gamma):
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if gamma.ndim != 1 or np.any(~(gamma > 0)) or np.any(~np.isfinite(gamma)):
        raise ValueError("gain profile must be a vector of positive finite values")
    return gamma


def gain_profile(scenario: Scenario, layout: AntennaLayout) -> np.ndarray:
    """Per-device ``gamma_m = eta E_m g_m / (N sigma^2)`` for a pinching-antenna layout."""
    p = scenario.params
    return p.eta * scenario.energies * effective_gains(scenario, layout) / (layout.n * p.noise_power)


def conventional_profile(scenario: Scenario, layout: AntennaLayout) -> np.ndarray:
    """Per-device ``E_m ||h_m^C||^2 / sigma^2`` for the fixed array."""
    return scenario.energies * conventional_gains(scenario, layout) / scenario.params.noise_power


# -- closed form ---------------------------------------------------------------


def multiplier_ratio_for_scale(s: float) -> float:
    """Multiplier ratio ``lambda1/lambda2`` whose Lambert-W allocation has scale ``s``.

    Only meaningful for ``s > 1``, the range in which ``Wbar = s / (1 - s)``
    lies on the lower branch.
    """
    wbar = s / (1.0 - s)
    return (-1.0 - math.log(-wbar) - wbar) / math.log(2.0)


def lambert_shares(gamma, ratio: float) -> np.ndarray:
    """Stationary shares ``q_m = gamma_m Wbar / (1 + Wbar)`` for a given ``lambda1/lambda2``."""
    wbar = lambert_w_minus1(-math.exp(-1.0 - ratio * math.log(2.0)))
    return np.asarray(gamma) * wbar / (1.0 + wbar)


def closed_form_allocation(gamma) -> AllocationResult:
    """Stationarity-based closed form with the budget constraint active.

    Every share is ``gamma_m * s`` for one common scale ``s``; exhausting the
    budget fixes ``s = 1 / sum(gamma)``.  When ``s > 1`` the scale is also
    reproduced through the Lambert-W route and ``branch_consistent`` is
    ``True``; otherwise no non-negative multiplier ratio produces ``s`` on the
    ``W_{-1}`` branch and the flag is ``False``.
    """
    gamma = _check_gamma(gamma)
    s = 1.0 / gamma.sum()
    q = gamma * s
    consistent = False
    if s > 1.0:
        ratio = multiplier_ratio_for_scale(s)
        consistent = bool(ratio >= 0 and np.allclose(lambert_shares(gamma, ratio), q, rtol=1e-9, atol=0))
    return AllocationResult.from_shares(q, gamma, "closed_form", consistent)


# -- exact max-min -------------------------------------------------------------


def maxmin_bisection(gamma, q_tol: float = Q_TOL, rate_tol: float = RATE_TOL) -> AllocationResult:
    """Largest common rate R with ``sum_m q_m(R) <= 1``.

    ``q_m(R)`` inverts the strictly increasing map ``q -> q log2(1 + gamma_m/q)``
    by bisection on ``(0, 1]``; the outer bisection runs over
    ``[0, min_m log2(1 + gamma_m)]``.  The result sits up to ``rate_tol``
    below the optimum, so the equal split and the proportional split are
    evaluated too and the best of the three is returned; near-symmetric
    profiles would otherwise lose to them by rounding.
    """
    gamma = _check_gamma(gamma)
    if gamma.size == 1:
        return AllocationResult.from_shares(np.ones(1), gamma, "bisection")
    _, q = _kernels.maxmin_levels(np.ascontiguousarray(gamma), q_tol, rate_tol)
    best = AllocationResult.from_shares(q, gamma, "bisection")
    for alt in (np.full(gamma.size, 1.0 / gamma.size), gamma / gamma.sum()):
        cand = AllocationResult.from_shares(alt, gamma, "bisection")
        if cand.min_rate > best.min_rate:
            best = cand
    return best


def equal_allocation(gamma) -> AllocationResult:
    gamma = _check_gamma(gamma)
    return AllocationResult.from_shares(np.full(gamma.size, 1.0 / gamma.size), gamma, "equal")


def allocate(gamma, method: str = "bisection", delta: float = 1e-6) -> AllocationResult:
    """Dispatch to one allocator, then enforce ``q_m >= delta``.

    Clamped shares are raised to ``delta`` and the remaining budget is
    rescaled over the unclamped devices; with every share already above
    ``delta`` the result is returned untouched.
    """
    method = method.replace("-", "_")
    if method == "closed_form":
        res = closed_form_allocation(gamma)
    elif method == "bisection":
        res = maxmin_bisection(gamma)
    elif method == "equal":
        res = equal_allocation(gamma)
    else:
        raise ValueError(f"unknown allocation method {method!r}; expected one of {METHODS}")
    if np.all(res.q >= delta):
        return res
    if delta * res.q.size > 1.0:
        raise ValueError("delta too large for the number of devices")
    q = res.q.copy()
    low = q < delta
    while True:
        q[~low] *= (1.0 - delta * low.sum()) / q[~low].sum()
        q[low] = delta
        more = (q < delta) & ~low
        if not more.any():
            break
        low |= more
    return AllocationResult.from_shares(q, _check_gamma(gamma), res.method, res.branch_consistent)
