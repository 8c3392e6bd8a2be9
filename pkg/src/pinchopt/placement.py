"""Pinching-antenna placement by successive convex approximation.

The placement problem maximizes the worst device's phase-aligned
inverse-distance sum ``min_m sum_n 1/r_mn`` while a weighted phase-error
budget ``sum_n w_mn (f_mn - theta_m)^2 <= eps`` keeps the antennas' phase
exponents aligned for each device. Each SCA step solves one SOCP in which

* ``r_mn <= 1/v_mn`` is replaced by its tangent bound
  ``r_mn <= 2/v0 - v/v0^2`` (one SOC per pair), and
* the phase exponent is linearized in ``x_n`` around the current iterate and
  shifted by a multiple of ``2*pi`` so that it starts within ``pi`` of
  ``theta_m`` (``f^2 <= z`` is then an exact rotated cone).

Internally the subproblem is written in step variables ``dx = x - x0`` and
``dtheta = theta - theta0``; this is a change of variables only and keeps
the phase rows (constants of order 1e4 rad otherwise) well conditioned.

:func:`epsilon_sweep` runs the SCA once per budget and keeps the layout with
the best true min rate.  By default it also tries an unphased warm start and
finishes with a short local search on the exact rate (:func:`refine_layout`),
because the linearized budget cannot see the 2*pi ambiguity of far antennas.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from pinchopt import _kernels
from pinchopt.channel import (
    AntennaLayout,
    PhysicalParams,
    Scenario,
    distances,
    effective_gains,
    ideal_gains,
    pa_rate,
)
from pinchopt.conic import ConeProgram, SOCBlock, Status, solve

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class OverpackedError(ValueError):
    """``N`` antennas at the required spacing do not fit on the waveguide."""


class SubproblemError(RuntimeError):
    def __init__(self, iteration: int, status: Status, eps: float):
        super().__init__(f"SCA subproblem at iteration {iteration} (eps={eps:g}) returned {status.value}")
        self.iteration = iteration
        self.status = status
        self.eps = eps


@dataclass
class SCAConfig:
    """Knobs of the SCA loop and of the epsilon sweep.

    ``taylor_trust`` caps each coordinate's move per iteration (metres);
    ``None`` disables the cap.  ``warm_start`` adds one candidate from an
    unphased run (``eps = inf``, ``k_warm`` steps), and ``refine`` polishes the
    ``refine_candidates`` most promising layouts on the exact rate from
    ``refine_starts`` points in a box of half-width ``refine_radius`` metres.
    Switch both off to get the plain sweep.
    """

    eps_grid: tuple = tuple(np.linspace(0.1, 0.5, 5))
    k_sca: int = 10
    taylor_trust: float | None = None
    tol_improve: float = 1e-5
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iters: int = 200
    warm_start: bool = True
    k_warm: int = 30
    refine: bool = True
    refine_candidates: int = 3
    refine_starts: int = 8
    refine_radius: float = 0.3

    def __post_init__(self):
        self.eps_grid = tuple(float(e) for e in self.eps_grid)
        if not self.eps_grid or any(not e > 0 for e in self.eps_grid):
            raise ValueError("eps_grid must hold positive values")
        if self.k_sca < 1 or self.k_warm < 1:
            raise ValueError("k_sca and k_warm must be >= 1")
        if self.refine_candidates < 1 or self.refine_starts < 0 or not self.refine_radius > 0:
            raise ValueError("refinement needs >= 1 candidate, >= 0 extra starts and a positive radius")


@dataclass
class PlacementState:
    x: np.ndarray
    theta: np.ndarray
    v0: np.ndarray
    t: float = -np.inf


@dataclass
class PlacementSolution:
    """Outcome of :func:`epsilon_sweep`.

    ``best_eps`` is the budget whose SCA run seeded the returned layout
    (``inf`` for the unphased warm start); ``refined`` says whether the exact
    rate polish moved it.  ``eps_rates`` holds each run's own min rate.
    """

    layout: AntennaLayout
    theta: np.ndarray
    best_eps: float | None
    t_trace: dict
    min_rate: float
    status: str = "ok"
    failures: dict = field(default_factory=dict)
    eps_rates: dict = field(default_factory=dict)
    refined: bool = False


# -- geometry helpers --------------------------------------------------------


def project_layout(x, spacing: float, length: float) -> np.ndarray:
    """Euclidean projection of ``x`` onto ordered, ``spacing``-separated points in ``[0, length]``.

    With ``y_n = x_n - n*spacing`` the feasible set becomes ``y`` non-decreasing
    inside ``[0, length - (N-1)*spacing]``; the projection is the isotonic
    regression of ``y`` clipped to that interval.
    """
    x = np.sort(np.atleast_1d(np.asarray(x, dtype=float)))
    n = x.size
    if n * spacing > length:
        raise OverpackedError(f"{n} antennas x {spacing:g} m spacing exceed waveguide length {length:g} m")
    offs = np.arange(n) * spacing
    y = _kernels.isotonic_project(np.ascontiguousarray(x - offs))
    y = np.clip(y, 0.0, length - (n - 1) * spacing)
    return y + offs


def initial_layout(scenario: Scenario) -> AntennaLayout:
    """One antenna above each device when ``M == N``, device-x quantiles otherwise."""
    xs = np.sort(scenario.x)
    n = scenario.n_antennas
    if n == scenario.m:
        target = xs
    else:
        target = np.quantile(xs, (np.arange(n) + 0.5) / n)
    x = project_layout(target, scenario.params.spacing, scenario.length)
    return AntennaLayout(x, scenario.height)


def weights(scenario: Scenario, initial: AntennaLayout) -> np.ndarray:
    """``w_mn = 1 / r_mn^3`` against the starting layout."""
    return distances(scenario.x, scenario.y, initial.x_coords, scenario.height) ** -3


# -- phase exponent --------------------------------------------------------------


def phase_residual(x_n, theta_m, device, params: PhysicalParams, height: float):
    """``k0 * sqrt((x_m - x_n)^2 + y_m^2 + d^2) - kg * x_n - theta_m`` (feed at x = 0)."""
    xm, ym = device[0], device[1]
    dist = np.sqrt((xm - np.asarray(x_n)) ** 2 + ym**2 + height**2)
    return params.k0 * dist - params.kg * np.asarray(x_n) - np.asarray(theta_m)


def linearized_phase_residual(x0, device, params: PhysicalParams, height: float):
    """Coefficients ``(a, b, c0)`` of the tangent ``a*x_n + b*theta_m + c0`` at ``x_n = x0``."""
    xm, ym = device[0], device[1]
    x0 = np.asarray(x0, dtype=float)
    dist0 = np.sqrt((x0 - xm) ** 2 + ym**2 + height**2)
    slope = (x0 - xm) / dist0
    a = params.k0 * slope - params.kg
    c0 = params.k0 * (dist0 - x0 * slope)
    return a, -1.0, c0


def _phase_matrix(scenario: Scenario, x: np.ndarray) -> np.ndarray:
    """Raw exponents ``f_mn`` at ``theta = 0``."""
    return np.stack([phase_residual(x, 0.0, dev, scenario.params, scenario.height) for dev in scenario.devices])


def _wrap_to(phi, ref):
    """Shift ``phi`` by multiples of 2*pi into ``(ref - pi, ref + pi]``; returns (wrapped, turns)."""
    turns = np.round((phi - ref) / TWO_PI)
    return phi - TWO_PI * turns, turns


def initial_theta(scenario: Scenario, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted mean phase per device, after wrapping around its heaviest antenna."""
    phi = _phase_matrix(scenario, x)
    ref = phi[np.arange(scenario.m), np.argmax(w, axis=1)]
    wrapped, _ = _wrap_to(phi, ref[:, None])
    return np.sum(w * wrapped, axis=1) / np.sum(w, axis=1)


def phase_budget_usage(scenario: Scenario, x, theta, w) -> np.ndarray:
    """``sum_n w_mn f_mn^2`` per device with the true exponent, modulo 2*pi against ``theta_m``."""
    phi = _phase_matrix(scenario, np.asarray(x, dtype=float))
    res, _ = _wrap_to(phi, np.asarray(theta)[:, None])
    res = res - np.asarray(theta)[:, None]
    return np.sum(w * res**2, axis=1)


# -- subproblem --------------------------------------------------------------------


@dataclass(frozen=True)
class VariableMap:
    """Slices of the subproblem's decision vector ``(dx, dtheta, z, v, t)``."""

    m: int
    n: int
    phased: bool

    @property
    def dx(self):
        return slice(0, self.n)

    @property
    def dtheta(self):
        return slice(self.n, self.n + (self.m if self.phased else 0))

    @property
    def z(self):
        start = self.dtheta.stop
        return slice(start, start + (self.m * self.n if self.phased else 0))

    @property
    def v(self):
        start = self.z.stop
        return slice(start, start + self.m * self.n)

    @property
    def t(self):
        return self.v.stop

    @property
    def size(self):
        return self.t + 1

    def z_at(self, m, n):
        return self.z.start + m * self.n + n

    def v_at(self, m, n):
        return self.v.start + m * self.n + n


def build_subproblem(state: PlacementState, scenario: Scenario, w: np.ndarray, eps: float,
                     trust: float | None = None) -> tuple[ConeProgram, VariableMap]:
    """Convex SCA subproblem around ``state``; ``eps = inf`` drops the phase budget.

    The program minimizes ``-t``.  Decode a primal vector with
    :func:`decode_subproblem`.
    """
    if np.any(state.v0 <= 0):
        raise ValueError("linearization points v0 must be strictly positive")
    m, n = scenario.m, scenario.n_antennas
    p = scenario.params
    phased = bool(np.isfinite(eps))
    vm = VariableMap(m, n, phased)
    nv = vm.size
    x0 = np.asarray(state.x, dtype=float)

    c = np.zeros(nv)
    c[vm.t] = -1.0

    lb = np.full(nv, -np.inf)
    ub = np.full(nv, np.inf)
    lb[vm.dx] = -x0
    ub[vm.dx] = scenario.length - x0
    if trust is not None:
        lb[vm.dx] = np.maximum(lb[vm.dx], -trust)
        ub[vm.dx] = np.minimum(ub[vm.dx], trust)
    lb[vm.v] = 0.0
    if phased:
        lb[vm.z] = 0.0

    rows, rhs = [], []
    # ordering / spacing: x_{k-1} - x_k <= -spacing
    for k in range(1, n):
        r = np.zeros(nv)
        r[k - 1], r[k] = 1.0, -1.0
        rows.append(r)
        rhs.append(-p.spacing - (x0[k - 1] - x0[k]))
    # t <= sum_n v_mn
    for i in range(m):
        r = np.zeros(nv)
        r[vm.t] = 1.0
        r[[vm.v_at(i, j) for j in range(n)]] = -1.0
        rows.append(r)
        rhs.append(0.0)
    blocks = []
    if phased:
        # phase budget sum_n w_mn z_mn <= eps
        for i in range(m):
            r = np.zeros(nv)
            r[[vm.z_at(i, j) for j in range(n)]] = w[i]
            rows.append(r)
            rhs.append(eps)
        phi0 = _phase_matrix(scenario, x0)
        resid0, _ = _wrap_to(phi0, state.theta[:, None])
        resid0 = resid0 - state.theta[:, None]
        for i, dev in enumerate(scenario.devices):
            a, _, _ = linearized_phase_residual(x0, dev, p, scenario.height)
            for j in range(n):
                # f~ = a*dx_j - dtheta_i + resid0;  f~^2 <= z  <=>  ||(f~, (z-1)/2)|| <= (z+1)/2
                U = np.zeros((2, nv))
                U[0, j] = a[j]
                U[0, vm.dtheta.start + i] = -1.0
                U[1, vm.z_at(i, j)] = 0.5
                s = np.zeros(nv)
                s[vm.z_at(i, j)] = 0.5
                blocks.append(SOCBlock(U, [resid0[i, j], -0.5], s, 0.5))
    # tangent path-loss bound ||(x_m - x0_n - dx_n, rho_m)|| <= 2/v0 - v/v0^2
    rho = np.sqrt(scenario.y**2 + scenario.height**2)
    for i in range(m):
        for j in range(n):
            U = np.zeros((2, nv))
            U[0, j] = -1.0
            s = np.zeros(nv)
            v0 = state.v0[i, j]
            s[vm.v_at(i, j)] = -1.0 / v0**2
            blocks.append(SOCBlock(U, [scenario.x[i] - x0[j], rho[i]], s, 2.0 / v0))
    prog = ConeProgram(c, A_in=np.array(rows) if rows else None, b_in=np.array(rhs) if rows else None,
                       soc_blocks=blocks, lb=lb, ub=ub)
    return prog, vm


def decode_subproblem(primal: np.ndarray, state: PlacementState, vm: VariableMap) -> dict:
    """Map a subproblem primal vector back to ``x, theta, z, v, t``."""
    out = {
        "x": state.x + primal[vm.dx],
        "v": primal[vm.v].reshape(vm.m, vm.n),
        "t": float(primal[vm.t]),
    }
    if vm.phased:
        out["theta"] = state.theta + primal[vm.dtheta]
        out["z"] = primal[vm.z].reshape(vm.m, vm.n)
    else:
        out["theta"] = state.theta.copy()
        out["z"] = np.zeros((vm.m, vm.n))
    return out


def encode_subproblem(values: dict, state: PlacementState, vm: VariableMap) -> np.ndarray:
    """Inverse of :func:`decode_subproblem`."""
    vec = np.zeros(vm.size)
    vec[vm.dx] = np.asarray(values["x"]) - state.x
    vec[vm.v] = np.asarray(values["v"]).ravel()
    vec[vm.t] = values["t"]
    if vm.phased:
        vec[vm.dtheta] = np.asarray(values["theta"]) - state.theta
        vec[vm.z] = np.asarray(values["z"]).ravel()
    return vec


# -- SCA driver ----------------------------------------------------------------------


@dataclass
class SCAResult:
    layout: AntennaLayout
    theta: np.ndarray
    t_trace: list
    records: list


def start_state(scenario: Scenario, layout: AntennaLayout, w: np.ndarray) -> PlacementState:
    x = layout.x_coords.copy()
    v0 = 1.0 / distances(scenario.x, scenario.y, x, scenario.height)
    return PlacementState(x, initial_theta(scenario, x, w), v0)


def sca_optimize(scenario: Scenario, eps: float, config: SCAConfig | None = None,
                 initial: AntennaLayout | None = None, w: np.ndarray | None = None) -> SCAResult:
    """Run up to ``k_sca`` SCA steps at phase budget ``eps``.

    Each accepted step re-centres both the tangent points ``v0`` and the
    phase linearization on the new iterate.  A step whose objective falls
    more than 1e-6 below the previous one is rejected and ends the loop, so
    ``t_trace`` never decreases; a gain below ``tol_improve`` ends it too.
    Raises :class:`SubproblemError` if a subproblem is not solved to
    optimality.
    """
    config = config or SCAConfig()
    initial = initial if initial is not None else initial_layout(scenario)
    w = weights(scenario, initial) if w is None else w
    state = start_state(scenario, initial, w)
    trace, records = [], []
    for k in range(config.k_sca):
        prog, vm = build_subproblem(state, scenario, w, eps, config.taylor_trust)
        out = solve(prog, config.tol_feas, config.tol_gap, config.max_iters)
        if not out.ok:
            raise SubproblemError(k, out.status, eps)
        sol = decode_subproblem(out.primal, state, vm)
        if trace and sol["t"] < trace[-1] - 1e-6:
            log.debug("eps=%g: step %d lowers t (%.6g < %.6g); keeping previous iterate", eps, k, sol["t"], trace[-1])
            break
        x_new = sol["x"]
        v_new = np.maximum(sol["v"], 1e-12)
        records.append({
            "eps": eps, "k": k, "t": sol["t"],
            "max_phase_residual": float(np.max(phase_budget_usage(scenario, x_new, sol["theta"], w))) if vm.phased else 0.0,
            "min_spacing": float(np.min(np.diff(x_new))) if x_new.size > 1 else math.inf,
        })
        improved = sol["t"] - (trace[-1] if trace else -np.inf)
        trace.append(sol["t"])
        state = PlacementState(x_new, sol["theta"], v_new, sol["t"])
        if improved < config.tol_improve:
            break
    x = project_layout(state.x, scenario.params.spacing, scenario.length)
    return SCAResult(AntennaLayout(x, scenario.height), state.theta, trace, records)


def equal_split_min_rate(scenario: Scenario, layout: AntennaLayout) -> float:
    """Worst device rate with ``q_m = 1/M`` and the true (complex-sum) gain."""
    p = scenario.params
    q = 1.0 / scenario.m
    r = pa_rate(np.full(scenario.m, q), scenario.energies, effective_gains(scenario, layout),
                layout.n, p.noise_power, p.eta)
    return float(np.min(r))


def gains_and_jacobian(scenario: Scenario, x) -> tuple[np.ndarray, np.ndarray]:
    """True effective gains ``|S_m|^2`` and their ``(M, N)`` Jacobian in ``x``."""
    p = scenario.params
    x = np.asarray(x, dtype=float)
    dx = x[None, :] - scenario.x[:, None]
    r = np.sqrt(dx**2 + (scenario.y**2 + scenario.height**2)[:, None])
    slope = dx / r
    terms = np.exp(1j * (p.k0 * r - p.kg * x[None, :]))
    total = np.sum(terms / r, axis=1)
    d_terms = terms * (1j * (p.k0 * slope - p.kg) / r - slope / r**2)
    return np.abs(total) ** 2, 2.0 * np.real(np.conj(total)[:, None] * d_terms)


def refine_layout(scenario: Scenario, x, radius: float = 0.3, starts: int = 8) -> np.ndarray:
    """Local max-min polish of the true gains around ``x``.

    Solves ``max t s.t. |S_m(x)|^2 >= t`` with the spacing constraints and
    ``|x - x_c| <= radius`` by SLSQP, from ``x`` itself and ``starts`` Halton
    points of the box.  The phase landscape repeats on a centimetre scale,
    so one local run alone often stalls next to a well-aligned point.
    Returns the best projected layout found (never worse than ``x``).
    """
    spacing, length = scenario.params.spacing, scenario.length
    xc = project_layout(x, spacing, length)
    n = xc.size
    lo = np.maximum(xc - radius, 0.0)
    hi = np.minimum(xc + radius, length)
    scale = max(float(np.min(gains_and_jacobian(scenario, xc)[0])), 1e-300)

    def gain_rows(z):
        return gains_and_jacobian(scenario, z[:n])[0] / scale - z[n]

    def gain_jac(z):
        return np.c_[gains_and_jacobian(scenario, z[:n])[1] / scale, -np.ones(scenario.m)]

    cons = [{"type": "ineq", "fun": gain_rows, "jac": gain_jac}]
    if n > 1:
        gaps = np.zeros((n - 1, n + 1))
        gaps[np.arange(n - 1), np.arange(n - 1)] = -1.0
        gaps[np.arange(n - 1), np.arange(1, n)] = 1.0
        cons.append({"type": "ineq", "fun": lambda z: gaps @ z - spacing, "jac": lambda z: gaps})
    bounds = list(zip(lo, hi)) + [(None, None)]
    objective_grad = np.r_[np.zeros(n), -1.0]

    offsets = [np.zeros(n)]
    if starts:
        offsets += list(2.0 * qmc.Halton(n, scramble=False).random(starts + 1)[1:] - 1.0)
    best_x = xc
    best = float(np.min(gains_and_jacobian(scenario, xc)[0]))
    for u in offsets:
        x0 = project_layout(np.clip(xc + radius * u, lo, hi), spacing, length)
        z0 = np.r_[x0, np.min(gains_and_jacobian(scenario, x0)[0]) / scale]
        with warnings.catch_warnings():
            # SLSQP may step a hair outside the box and clips silently otherwise
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(lambda z: -z[n], z0, jac=lambda z: objective_grad, bounds=bounds,
                           constraints=cons, method="SLSQP", options={"maxiter": 100, "ftol": 1e-10})
        cand = project_layout(res.x[:n], spacing, length)
        val = float(np.min(gains_and_jacobian(scenario, cand)[0]))
        if val > best:
            best, best_x = val, cand
    return best_x


def epsilon_sweep(scenario: Scenario, config: SCAConfig | None = None, trace_sink: list | None = None) -> PlacementSolution:
    """SCA for every ``eps`` in the grid; keep the layout with the best true min rate.

    Rates are evaluated with the scenario's energies under equal allocation.
    With ``config.warm_start`` an unphased run joins the candidates; with
    ``config.refine`` the candidates with the largest phase-free gain
    ``min_m (sum_n 1/r_mn)^2`` are polished by :func:`refine_layout` and
    compete with the unpolished ones.  If no run succeeds, the starting
    layout (refined, when enabled) comes back with ``status="warning"``.
    """
    config = config or SCAConfig()
    initial = initial_layout(scenario)
    w = weights(scenario, initial)
    traces, failures, eps_rates = {}, {}, {}
    candidates = []  # (eps, layout, theta)
    runs = list(config.eps_grid) + ([math.inf] if config.warm_start else [])
    for eps in runs:
        cfg = config if np.isfinite(eps) else _replace(config, k_sca=config.k_warm)
        try:
            res = sca_optimize(scenario, eps, cfg, initial=initial, w=w)
        except SubproblemError as exc:
            failures[eps] = str(exc)
            log.info("%s", exc)
            continue
        traces[eps] = res.t_trace
        if trace_sink is not None:
            trace_sink.extend(res.records)
        eps_rates[eps] = equal_split_min_rate(scenario, res.layout)
        candidates.append((eps, res.layout, res.theta))

    status = "ok" if candidates else "warning"
    if not candidates:
        candidates.append((None, initial, initial_theta(scenario, initial.x_coords, w)))
    scored = [(equal_split_min_rate(scenario, lay), eps, lay, theta, False) for eps, lay, theta in candidates]
    if config.refine:
        ranked = sorted(candidates, key=lambda c: -float(np.min(ideal_gains(scenario, c[1]))))
        for eps, lay, _ in ranked[:config.refine_candidates]:
            x = refine_layout(scenario, lay.x_coords, config.refine_radius, config.refine_starts)
            polished = AntennaLayout(x, scenario.height)
            scored.append((equal_split_min_rate(scenario, polished), eps, polished,
                           initial_theta(scenario, x, w), True))
    # first maximum wins, so ties keep the unpolished, earlier candidate
    best = max(range(len(scored)), key=lambda k: (scored[k][0], -k))
    rate, eps, layout, theta, refined = scored[best]
    return PlacementSolution(layout, theta, eps, traces, rate, status, failures, eps_rates, refined)


def _replace(config: SCAConfig, **changes) -> SCAConfig:
    return dataclasses.replace(config, **changes)
