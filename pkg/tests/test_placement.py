import math

import numpy as np
import pytest

from conftest import random_scenario
from oracles import grid_best_pair
from pinchopt.channel import AntennaLayout, PhysicalParams, Scenario, distances, effective_gains, ideal_gains
from pinchopt.conic import solve
from pinchopt.placement import (
    OverpackedError,
    PlacementState,
    SCAConfig,
    build_subproblem,
    decode_subproblem,
    encode_subproblem,
    epsilon_sweep,
    equal_split_min_rate,
    gains_and_jacobian,
    initial_layout,
    initial_theta,
    linearized_phase_residual,
    phase_budget_usage,
    phase_residual,
    project_layout,
    refine_layout,
    sca_optimize,
    start_state,
    SubproblemError,
    weights,
)

P = PhysicalParams.from_carrier()
PLAIN = SCAConfig(warm_start=False, refine=False)


def scenario(devices, n=None, length=30.0):
    devices = np.asarray(devices, dtype=float)
    return Scenario(devices, n or len(devices), length, 10.0, 3.0).with_power(10.0)


# -- initial layout / projection -------------------------------------------------


def test_initial_layout_examples():
    np.testing.assert_allclose(initial_layout(scenario([[5, 0], [20, 1]])).x_coords, [5, 20])
    x = initial_layout(scenario([[10, 0], [10, 2]])).x_coords
    np.testing.assert_allclose(x, [10 - P.spacing / 2, 10 + P.spacing / 2], atol=1e-12)


def test_packed_layout_at_box_end():
    n = 50
    length = n * P.spacing * 1.001
    sc = Scenario(np.column_stack([np.full(n, length), np.zeros(n)]), n, length, 10.0, 3.0)
    x = initial_layout(sc).x_coords
    assert np.all(np.diff(x) >= P.spacing - 1e-12)
    assert x.min() >= 0 and x.max() <= length + 1e-12


def test_quantile_layout_for_fewer_antennas():
    sc = scenario([[2, 0], [4, 0], [6, 0], [8, 0]], n=2)
    np.testing.assert_allclose(initial_layout(sc).x_coords, np.quantile([2, 4, 6, 8], [0.25, 0.75]))


def test_overpacked():
    with pytest.raises(OverpackedError):
        project_layout(np.zeros(10), 1.0, 5.0)


def test_projection_is_euclidean(rng):
    # compare against brute force over a fine grid for two points
    x = np.array([3.0, 3.002])
    out = project_layout(x, 0.01, 30.0)
    np.testing.assert_allclose(out, [3.001 - 0.005, 3.001 + 0.005])
    y = rng.uniform(0, 1, 8)
    p = project_layout(y, 0.05, 1.0)
    assert np.all(np.diff(p) >= 0.05 - 1e-12)


# -- weights and phase -----------------------------------------------------------


def test_weights():
    sc = scenario([[5, 0], [20, 0]])
    w = weights(sc, AntennaLayout([5.0, 20.0], 3.0))
    assert w[0, 0] == pytest.approx(1 / 27)
    sym = scenario([[10, 1], [20, 1]])
    ws = weights(sym, AntennaLayout([10.0, 20.0], 3.0))
    np.testing.assert_allclose(ws, ws[::-1, ::-1])
    sc = random_scenario(np.random.default_rng(1), 3, 3)
    lay = AntennaLayout([4.0, 12.0, 25.0], 3.0)
    ref = np.array([[((d[0] - a) ** 2 + d[1] ** 2 + 9) ** -1.5 for a in lay.x_coords] for d in sc.devices])
    np.testing.assert_allclose(weights(sc, lay), ref, rtol=1e-14)


def test_phase_residual_examples():
    assert phase_residual(0.0, 0.0, (0.0, 0.0), P, 3.0) == pytest.approx(2 * math.pi * 3 / P.wavelength)
    f = phase_residual(7.0, 0.0, (3.0, 1.0), P, 3.0)
    assert phase_residual(7.0, f, (3.0, 1.0), P, 3.0) == 0.0


def test_linearization_anchors_and_slope():
    dev, x0, theta = (10.0, 2.0), 7.3, 1.2
    a, b, c0 = linearized_phase_residual(x0, dev, P, 3.0)
    assert a * x0 + b * theta + c0 == pytest.approx(phase_residual(x0, theta, dev, P, 3.0), rel=1e-12)
    h = 1e-6
    fd = (phase_residual(x0 + h, theta, dev, P, 3.0) - phase_residual(x0 - h, theta, dev, P, 3.0)) / (2 * h)
    assert a == pytest.approx(fd, rel=1e-6)
    # tangent of the convex distance term lies below it
    for x in np.linspace(0, 30, 31):
        assert a * x + b * theta + c0 <= phase_residual(x, theta, dev, P, 3.0) + 1e-9


# -- subproblem ------------------------------------------------------------------


def test_encode_decode_round_trip(two_device_scenario):
    sc = two_device_scenario
    init = initial_layout(sc)
    w = weights(sc, init)
    state = start_state(sc, init, w)
    prog, vm = build_subproblem(state, sc, w, 0.3)
    v0 = 1 / distances(sc.x, sc.y, init.x_coords, sc.height)
    f = phase_budget_usage(sc, init.x_coords, state.theta, w)
    phi = np.stack([phase_residual(init.x_coords, 0.0, d, P, 3.0) for d in sc.devices])
    resid = (phi - state.theta[:, None] + np.pi) % (2 * np.pi) - np.pi
    values = {"x": init.x_coords, "theta": state.theta, "z": resid**2, "v": v0, "t": v0.sum(1).min()}
    vec = encode_subproblem(values, state, vm)
    back = decode_subproblem(vec, state, vm)
    for key in values:
        np.testing.assert_allclose(back[key], values[key], atol=1e-12)
    # the starting point is feasible whenever the budget covers the initial usage
    prog_loose, _ = build_subproblem(state, sc, w, float(f.max()) * 1.01)
    assert prog_loose.max_violation(vec) <= 1e-9


def test_unphased_subproblem_maximizes_inverse_distance():
    sc = scenario([[6.0, 1.0], [9.0, -2.0]])
    init = initial_layout(sc)
    w = weights(sc, init)
    res = sca_optimize(sc, math.inf, SCAConfig(k_sca=40), initial=init, w=w)
    g = np.arange(0, 30.0001, 0.01)
    i, j = np.triu_indices(g.size, 1)
    ok = g[j] - g[i] >= P.spacing
    x1, x2 = g[i][ok], g[j][ok]
    val = np.full(x1.size, np.inf)
    for xm, ym in sc.devices:
        val = np.minimum(val, sum(1 / np.sqrt((xm - a) ** 2 + ym**2 + 9) for a in (x1, x2)))
    best = val.max()
    got = np.min(np.sqrt(ideal_gains(sc, res.layout)))
    assert got >= best - 1e-4


def test_single_device_huge_budget():
    sc = scenario([[10.0, 2.0]])
    res = sca_optimize(sc, 1e6)
    assert res.layout.x_coords[0] == pytest.approx(10.0, abs=0.1)
    assert np.all(np.diff(res.t_trace) >= -1e-6)


def test_sca_invariants(rng):
    for _ in range(5):
        sc = random_scenario(rng, 3, 3)
        init = initial_layout(sc)
        w = weights(sc, init)
        res = sca_optimize(sc, 0.2, initial=init, w=w)
        x = res.layout.x_coords
        assert np.all(np.diff(x) >= P.spacing - 1e-9)
        assert np.all(np.diff(res.t_trace) >= -1e-6)
        assert res.t_trace[-1] <= (1 / distances(sc.x, sc.y, x, 3.0)).sum(1).min() + 1e-8
        assert np.all(phase_budget_usage(sc, x, res.theta, w) <= 0.2 * (1 + 1e-3))
        assert len(res.records) == len(res.t_trace)


def test_mirrored_devices_give_mirrored_layout():
    sc = scenario([[9.0, 2.0], [21.0, 2.0]])
    res = sca_optimize(sc, 0.3)
    x = res.layout.x_coords
    assert x[0] + x[1] == pytest.approx(30.0, abs=0.1)


def test_infeasible_budget_raises():
    sc = scenario([[8.0, 1.0], [21.0, -2.0]])
    # a budget far below the first linearized residual cannot be met near the start
    with pytest.raises(SubproblemError) as info:
        sca_optimize(sc, 1e-14, SCAConfig(taylor_trust=1e-9))
    assert info.value.iteration == 0


# -- sweep -----------------------------------------------------------------------


def test_single_eps_sweep_equals_sca(two_device_scenario):
    sc = two_device_scenario
    cfg = SCAConfig(eps_grid=(0.3,), warm_start=False, refine=False)
    sol = epsilon_sweep(sc, cfg)
    res = sca_optimize(sc, 0.3, cfg)
    np.testing.assert_array_equal(sol.layout.x_coords, res.layout.x_coords)
    assert sol.min_rate == equal_split_min_rate(sc, res.layout)
    assert sol.best_eps == 0.3 and not sol.refined


def test_plain_sweep_selection(rng):
    sc = random_scenario(rng, 2, 2)
    sol = epsilon_sweep(sc, PLAIN)
    assert sol.min_rate == max(sol.eps_rates.values())
    assert sol.min_rate >= equal_split_min_rate(sc, initial_layout(sc)) - 1e-12
    assert sol.min_rate == pytest.approx(equal_split_min_rate(sc, sol.layout), rel=1e-14)
    assert set(sol.t_trace) == set(PLAIN.eps_grid)


def test_default_sweep_dominates_plain(rng):
    for _ in range(3):
        sc = random_scenario(rng, 2, 2)
        full = epsilon_sweep(sc)
        assert full.min_rate >= epsilon_sweep(sc, PLAIN).min_rate
        assert full.min_rate == pytest.approx(equal_split_min_rate(sc, full.layout), rel=1e-14)
        full.layout.check(P.spacing, sc.length, tol=1e-9)


def test_sweep_near_grid_optimum():
    sc = scenario([[11.69, -4.33], [5.62, 0.12]])
    best, _ = grid_best_pair(sc)
    p = sc.params
    grid_rate = 0.5 * math.log2(1 + p.eta * sc.energies[0] * best / p.noise_power)
    assert epsilon_sweep(sc).min_rate >= 0.95 * grid_rate


def test_all_failures_fall_back():
    sc = scenario([[8.0, 1.0], [21.0, -2.0]])
    cfg = SCAConfig(eps_grid=(1e-14,), taylor_trust=1e-9, warm_start=False, refine=False)
    sol = epsilon_sweep(sc, cfg)
    assert sol.status == "warning" and sol.best_eps is None
    np.testing.assert_array_equal(sol.layout.x_coords, initial_layout(sc).x_coords)
    assert sol.failures


def test_config_validation():
    with pytest.raises(ValueError):
        SCAConfig(eps_grid=())
    with pytest.raises(ValueError):
        SCAConfig(k_sca=0)


# -- refinement ------------------------------------------------------------------


def test_gain_jacobian_matches_finite_differences(rng):
    sc = random_scenario(rng, 3, 3)
    x = np.array([4.0, 11.0, 19.0])
    g, jac = gains_and_jacobian(sc, x)
    np.testing.assert_allclose(g, effective_gains(sc, AntennaLayout(x, 3.0)), rtol=1e-12)
    h = 1e-7
    for n in range(3):
        e = np.zeros(3)
        e[n] = h
        fd = (gains_and_jacobian(sc, x + e)[0] - gains_and_jacobian(sc, x - e)[0]) / (2 * h)
        np.testing.assert_allclose(jac[:, n], fd, rtol=1e-4, atol=1e-9)


def test_refinement_never_worse(rng):
    for _ in range(3):
        sc = random_scenario(rng, 2, 2)
        x0 = initial_layout(sc).x_coords
        x = refine_layout(sc, x0, starts=4)
        before = gains_and_jacobian(sc, x0)[0].min()
        assert gains_and_jacobian(sc, x)[0].min() >= before
        assert np.all(np.abs(x - x0) <= 0.3 + 1e-9)


def test_initial_theta_is_weighted_mean():
    sc = scenario([[10.0, 0.0]])
    lay = AntennaLayout([10.0], 3.0)
    w = weights(sc, lay)
    theta = initial_theta(sc, lay.x_coords, w)
    assert phase_budget_usage(sc, lay.x_coords, theta, w)[0] == pytest.approx(0.0, abs=1e-20)
