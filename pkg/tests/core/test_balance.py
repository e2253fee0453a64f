from unittest.mock import patch

import numpy as np
import pytest

from entryexit.config import EntryExitConfig
from entryexit.core.balance import (
    build_series,
    estimate_span,
    nile_point,
    series_fastslow,
    series_ftle,
    series_gated,
    series_instant_eig,
    series_nile,
    series_velocity,
    track_branches,
)
from entryexit.core.dynsys import integrate
from entryexit.core.exits import find_exit, predict_exit
from entryexit.core.flows.kuhlmann_muldoon import KuhlmannMuldoonModel
from entryexit.core.flows.solid_body import SolidBodyModel
from entryexit.core.models import BalanceKind, FlatManifold, FlowSystem, GraphManifold, NeighbourhoodSpec
from entryexit.core.smallalg import Spectrum, singular_values
from entryexit.exceptions import DegradedQualityException, InvalidInputException, NoSignalException
from entryexit.utils.constant import BalanceMethod, FtleMode, Linearization, NileForm
from ..helpers import assert_exit_time, km_exit, rk4_fundamental, solid_body_generator


def _wall_trajectory(model: SolidBodyModel, span: float):
    return integrate(model.reduced, model.entry, 0.0, span)


def test_eig_balance_matches_symmetric_exit_for_weak_shear():
    # |alpha z1| < 2 along the whole grid, complex pair with real part alpha z1 / 2
    model = SolidBodyModel(alpha=1, beta=1, b=1)
    grid = np.linspace(0, 2.5, 2001)
    series = series_instant_eig(model.flow, model.manifold, _wall_trajectory(model, 2.5), 0, grid)
    assert np.allclose(series.values, (grid**2 / 2 - grid) / 2, rtol=0, atol=1e-12)
    assert_exit_time(series, 2.0, tol=1e-9)


def test_eig_balance_misses_symmetric_exit_for_strong_shear():
    model = SolidBodyModel(alpha=2, beta=1, b=3)
    series, _, _ = build_series(model, BalanceKind(BalanceMethod.EIG), span=6.0)
    assert abs(series(6.0)) > 1e-3
    prediction = find_exit(series)
    assert prediction.found
    assert prediction.T < 6 - 1e-3


def test_eig_balance_of_pure_rotation_is_flat():
    rotation = np.array([[0.0, -1.0], [1.0, 0.0]])
    flow = FlowSystem("rotation", 2, lambda z, t: rotation @ z, lambda z, t: rotation)
    gamma = integrate(flow, [0.0, 0.0], 0.0, 3.0)
    series = series_instant_eig(flow, FlatManifold([0, 0], [0, 1]), gamma, 0, np.linspace(0, 3, 301))
    assert np.allclose(series.values, 0, rtol=0, atol=1e-15)
    assert not find_exit(series).found


def test_eig_balance_degraded_quality():
    model = SolidBodyModel()
    failed = Spectrum(np.full(2, np.nan, dtype=complex), False)
    with patch("entryexit.core.balance.eigenvalues", return_value=failed):
        with pytest.raises(DegradedQualityException):
            series_instant_eig(model.flow, model.manifold, _wall_trajectory(model, 2.0), 0, np.linspace(0, 2, 101))


def test_eig_balance_rejects_off_manifold_reference():
    model = SolidBodyModel(linearization=Linearization.EXACT)
    gamma = integrate(model.flow, [-1.0, 0.2], 0.0, 1.0)
    with pytest.raises(InvalidInputException):
        series_instant_eig(model.flow, model.manifold, gamma, 0, np.linspace(0, 1, 11))


def test_fastslow_balance():
    alpha, beta, b = 2.0, 1.0, 1.0
    model = SolidBodyModel(alpha=alpha, beta=beta, b=b)
    series, reduced, start = build_series(model, BalanceKind(BalanceMethod.FASTSLOW), span=4.0, eps=0.1)
    times = series.times
    assert np.allclose(series.values, alpha * (beta * times**2 / 2 - b * times), rtol=0, atol=1e-12)
    assert np.array_equal(start, [0.0, -b])
    assert_exit_time(series, 2 * b / beta, tol=1e-9)


def test_fastslow_balance_without_exit():
    model = SolidBodyModel(b=0.0)
    series, _, _ = build_series(model, BalanceKind(BalanceMethod.FASTSLOW), span=4.0, eps=0.1)
    assert not find_exit(series).found


def test_fastslow_balance_rejects_reference_off_critical_manifold():
    model = SolidBodyModel()
    flow_fs = model.fastslow(0.1)
    gamma = integrate(model.slow_reduced, [0.5, -1.0], 0.0, 1.0)
    with pytest.raises(InvalidInputException):
        series_fastslow(flow_fs, gamma, 0, np.linspace(0, 1, 11))


def test_ftle_commuting_mode_at_symmetric_exit():
    # int A over [0, 2b/beta] is a pure rotation generator
    model = SolidBodyModel(alpha=2, beta=1, b=1)
    gamma = _wall_trajectory(model, 2.0)
    grid = np.linspace(0, 2, 201)[1:]
    series = series_ftle(model.flow, gamma, 0, FtleMode.COMMUTING, grid, t0=0.0)
    assert series.values[-1] == pytest.approx(0, abs=1e-9)
    assert series(2.0) == pytest.approx(0, abs=1e-9)
    assert not series.kind.starts_at_zero


def test_ftle_exact_mode_against_fixed_step_oracle():
    model = SolidBodyModel(alpha=2, beta=1, b=1)
    gamma = _wall_trajectory(model, 2.0)
    series = series_ftle(model.flow, gamma, 0, FtleMode.EXACT, np.linspace(0.5, 2.0, 4))
    oracle = rk4_fundamental(solid_body_generator(2, 1, 1), 0.0, 2.0)
    assert series.values[-1] == pytest.approx(np.log(singular_values(oracle)[0]) / 2, abs=1e-6)
    # the smaller exponent shares the volume change with the larger one
    smaller = series_ftle(model.flow, gamma, 1, FtleMode.EXACT, np.linspace(0.5, 2.0, 4))
    assert series.values[-1] + smaller.values[-1] == pytest.approx(0, abs=1e-6)


def test_ftle_tends_to_the_symmetric_growth_rate():
    generator = np.array([[1.0, 2.0], [0.0, -1.0]])
    flow = FlowSystem("linear", 2, lambda z, t: generator @ z, lambda z, t: generator)
    target = np.sqrt(2)
    offsets = [0.005, 0.01, 0.02, 0.04]
    with EntryExitConfig(ODE_TOL=1e-12):
        gamma = integrate(flow, [0.0, 0.0], 0.0, 0.04)
        series = series_ftle(flow, gamma, 0, FtleMode.EXACT, offsets)
    errors = np.abs(series.values - target)
    assert np.all(np.diff(errors) > 0)
    assert errors[0] < 1e-3


def test_ftle_grid_must_start_after_t0():
    model = SolidBodyModel()
    with pytest.raises(InvalidInputException):
        series_ftle(model.flow, _wall_trajectory(model, 1.0), 0, FtleMode.EXACT, np.linspace(0, 1, 11))


def test_nile_point_flat_and_graph_agree():
    model = SolidBodyModel(linearization=Linearization.EXACT, alpha=1.5)
    graph = GraphManifold([1], [0], lambda y, t: np.zeros(1), lambda y, t: np.zeros((1, 1)))
    for z1 in np.linspace(-3, 3, 100):
        p = np.array([z1, 0.0])
        flat = nile_point(model.flow, model.manifold, p, 0.0)
        assert flat == pytest.approx(1.5 * z1, abs=1e-12)
        assert nile_point(model.flow, graph, p, 0.0) == pytest.approx(flat, abs=1e-12)


def test_nile_point_on_a_higher_codimension_manifold():
    rng = np.random.default_rng(2)
    mat = rng.uniform(-1, 1, (3, 3))
    flow = FlowSystem("linear", 3, lambda z, t: mat @ z, lambda z, t: mat)
    line = FlatManifold([0, 0, 0], [[0, 1, 0], [0, 0, 1]])
    block = mat[1:, 1:]
    expected = np.max(np.linalg.eigvalsh(0.5 * (block + block.T)))
    assert nile_point(flow, line, [0.0, 0.0, 0.0], 0.0) == pytest.approx(expected, abs=1e-12)


def test_nile_point_rejects_off_manifold_point():
    model = SolidBodyModel()
    with pytest.raises(InvalidInputException):
        nile_point(model.flow, model.manifold, [0.0, 0.1], 0.0)


def test_nile_series_across_parameters():
    rng = np.random.default_rng(17)
    for alpha, beta, b in zip(rng.uniform(0.5, 3, 30), rng.uniform(0.5, 2, 30), rng.uniform(0.5, 2, 30)):
        model = SolidBodyModel(alpha=alpha, beta=beta, b=b)
        series, _, _ = build_series(model, BalanceKind.nile(), span=3 * b / beta, grid_points=401)
        times = series.times
        assert series.values[0] == 0
        assert np.allclose(series.values, alpha * (beta * times**2 / 2 - b * times), rtol=0, atol=1e-10)
        bound = (times - times[0]) * np.max(np.abs(series.rates))
        assert np.all(np.abs(series.values) <= bound + 1e-12)
        assert_exit_time(series, 2 * b / beta, tol=1e-8)


def test_fastslow_and_nile_exits_across_parameters():
    rng = np.random.default_rng(5)
    for alpha, beta, b in rng.uniform(0.5, 3, (20, 3)):
        model = SolidBodyModel(alpha=alpha, beta=beta, b=b)
        for kind, exit_state in (
            (BalanceKind(BalanceMethod.FASTSLOW), [0, b]),
            (BalanceKind.nile(), [b, 0]),
        ):
            _, prediction = predict_exit(model, kind, span=3 * b / beta, grid_points=401)
            assert prediction.T == pytest.approx(2 * b / beta, abs=1e-8)
            assert np.allclose(prediction.exit_state, exit_state, rtol=0, atol=1e-8)


def test_eig_balance_below_the_shear_threshold():
    # alpha b < 2 keeps the pair complex up to the exit, real part alpha z1 / 2
    rng = np.random.default_rng(11)
    for _ in range(10):
        alpha, beta = rng.uniform(0.5, 3), rng.uniform(0.5, 2)
        b = rng.uniform(0.3, 1.9) / alpha
        model = SolidBodyModel(alpha=alpha, beta=beta, b=b)
        series, _, _ = build_series(model, BalanceKind(BalanceMethod.EIG), span=3 * b / beta, grid_points=401)
        assert_exit_time(series, 2 * b / beta, tol=1e-8)


def test_eig_balance_above_the_shear_threshold():
    rng = np.random.default_rng(13)
    cases = [(2.0, 1.0, 3.0)]
    while len(cases) < 10:
        alpha, beta = rng.uniform(1, 3), rng.uniform(0.5, 2)
        cases.append((alpha, beta, rng.uniform(2.5, 6) / alpha))
    for alpha, beta, b in cases:
        model = SolidBodyModel(alpha=alpha, beta=beta, b=b)
        series, _, _ = build_series(model, BalanceKind(BalanceMethod.EIG), span=2 * b / beta, grid_points=401)
        assert abs(series.values[-1]) > 1e-3, (alpha, beta, b)


def test_ftle_commuting_mode_exits_across_parameters():
    rng = np.random.default_rng(19)
    for alpha, beta, b in rng.uniform(0.5, 3, (10, 3)):
        model = SolidBodyModel(alpha=alpha, beta=beta, b=b)
        _, prediction = predict_exit(
            model, BalanceKind.ftle(0, FtleMode.COMMUTING), span=3 * b / beta, grid_points=401
        )
        assert prediction.found
        assert prediction.T == pytest.approx(2 * b / beta, abs=1e-6)


def _random_case(rng, i: int):
    if i < 60:
        alpha, beta, b = rng.uniform(0.5, 3), rng.uniform(0.5, 2), rng.uniform(0.5, 2)
        kind = (BalanceKind(BalanceMethod.EIG), BalanceKind(BalanceMethod.FASTSLOW), BalanceKind.nile())[i % 3]
        return SolidBodyModel(alpha=alpha, beta=beta, b=b), kind, 3 * b / beta
    model = KuhlmannMuldoonModel(alpha=rng.uniform(0.05, 0.5), eta=rng.uniform(4, 5), z2=rng.uniform(0.2, 0.45))
    kind = BalanceKind(BalanceMethod.EIG) if i % 2 else BalanceKind.nile()
    return model, kind, 1.0


def test_integral_balances_start_at_zero_and_stay_bounded():
    rng = np.random.default_rng(23)
    for i in range(100):
        model, kind, span = _random_case(rng, i)
        series, _, _ = build_series(model, kind, span=span, grid_points=201)
        assert series.values[0] == 0, (model, kind)
        assert np.all(np.isfinite(series.values))
        bound = (series.times - series.times[0]) * np.max(np.abs(series.rates))
        assert np.all(np.abs(series.values) <= bound * (1 + 1e-6) + 1e-9), (model, kind)


def test_nile_series_literal_and_geometric_share_their_zero():
    model = KuhlmannMuldoonModel(alpha=0.1, eta=4.74, z2=0.4)
    geometric, _, _ = build_series(model, BalanceKind.nile(), span=1.0)
    literal, _, _ = build_series(model, BalanceKind.nile(NileForm.LITERAL), span=1.0)
    assert np.allclose(literal.values, -geometric.values, rtol=1e-10, atol=1e-12)
    expected, _ = km_exit(0.1, 4.74, 0.4)
    assert find_exit(geometric).T == pytest.approx(expected, rel=1e-6)
    assert find_exit(literal).T == pytest.approx(find_exit(geometric).T, abs=1e-9)


def test_nile_series_needs_covering_reference():
    model = SolidBodyModel()
    with pytest.raises(InvalidInputException):
        series_nile(model.flow, model.manifold, _wall_trajectory(model, 1.0), np.linspace(0, 2, 11))


def test_velocity_series_of_outward_drift_has_no_exit():
    times = np.linspace(0, 3, 301)
    series = series_velocity(times, np.ones_like(times))
    assert np.allclose(series.values, times)
    assert not find_exit(series).found


def test_velocity_series_of_reversing_drift():
    times = np.linspace(0, 3, 301)
    series = series_velocity(times, 1 - times)
    assert_exit_time(series, 2.0, tol=1e-10)


def test_velocity_series_gate_equals_prefiltering():
    times = np.linspace(0, 4, 401)
    distance = 0.1 * np.abs(times - 2)
    positions = np.column_stack([times, distance])
    velocity = np.cos(times)
    gate = NeighbourhoodSpec(1, 0.0, 0.05)
    gated = series_velocity(times, velocity, positions, gate)
    prefiltered = series_velocity(times, np.where(distance <= 0.05, velocity, 0.0))
    assert np.allclose(gated.values, prefiltered.values, rtol=0, atol=1e-15)
    assert np.array_equal(gated.in_gate, distance <= 0.05)


def test_velocity_series_trapezoid_convergence():
    def error(points: int) -> float:
        times = np.linspace(0, 1, points)
        return abs(series_velocity(times, np.exp(times)).values[-1] - (np.e - 1))

    assert error(101) / error(201) >= 3.5


def test_velocity_series_rejects_bad_input():
    times = np.linspace(0, 1, 11)
    with pytest.raises(InvalidInputException):
        series_velocity(times, np.ones(10))
    with pytest.raises(InvalidInputException):
        series_velocity(times, np.ones(11), gate=NeighbourhoodSpec(1, 0.0, 0.05))
    with pytest.raises(NoSignalException):
        series_gated(times, np.ones(11), np.zeros(11, dtype=bool), BalanceKind(BalanceMethod.VELOCITY), [0.0])


def test_velocity_balance_converges_with_offset():
    model = SolidBodyModel(alpha=2, beta=1, b=1)
    errors = []
    for chi in (1e-2, 1e-3):
        series, _, _ = build_series(model, BalanceKind(BalanceMethod.VELOCITY), span=4.0, chi=chi)
        errors.append(abs(find_exit(series).T - 2.0))
    assert errors[1] < errors[0]
    assert errors[1] < 1e-2


def test_track_branches_follows_complex_branches():
    times = np.array([-0.2, -0.1, 0.1, 0.2])
    rising, falling = times + 1j, -times - 1j
    # rows sorted by real part, so the columns swap between -0.1 and 0.1
    spectra = np.where(times[:, None] < 0, np.column_stack([falling, rising]), np.column_stack([rising, falling]))
    tracked, ambiguous = track_branches(spectra)
    assert ambiguous == 0
    assert np.allclose(tracked[:, 0], falling)
    assert np.allclose(tracked[:, 1], rising)


def test_track_branches_keeps_sorted_order_on_ties():
    spectra = np.array([[0.1, -0.4], [0.1, 0.0], [0.2, 0.1]], dtype=complex)
    tracked, _ = track_branches(spectra)
    assert np.array_equal(tracked, spectra)


def test_estimate_span():
    assert estimate_span(lambda times: times - 1.5) == pytest.approx(4 * 2 * 1.51, rel=1e-12)
    assert estimate_span(lambda times: times - 1.5, factor=1.0) == pytest.approx(2 * 1.51, rel=1e-12)


def test_estimate_span_falls_back_without_sign_change():
    assert estimate_span(lambda times: np.ones_like(times), max_doublings=2) == 4.0


def test_build_series_rejects_bad_grid_and_span():
    model = SolidBodyModel()
    with pytest.raises(InvalidInputException):
        build_series(model, BalanceKind.nile(), span=2.0, grid_points=2)
    with pytest.raises(InvalidInputException):
        build_series(model, BalanceKind.nile(), span=-1.0)
