"""
Balance functions F(t) along a reference trajectory on the invariant manifold.

The integral kinds accumulate a growth rate with :func:`entryexit.core.dynsys.cumulative_quadrature` and keep the
sampled rate on the series, so the series interpolates as a cubic Hermite spline whose slopes are the rates
themselves. The FTLE kind is not an integral and carries a pointwise evaluator instead.
"""

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import linear_sum_assignment

from entryexit import DEFAULT_CHI, DEFAULT_GATE_WIDTH
from entryexit.config import EntryExitConfig
from entryexit.core.dynsys import cumulative_quadrature, integrate, integrate_variational
from entryexit.core.flow_model import FlowModel
from entryexit.core.models import (
    BalanceKind,
    BalanceSeries,
    FastSlowSystem,
    FlatManifold,
    FlowSystem,
    GraphManifold,
    ManifoldSpec,
    NeighbourhoodSpec,
    Trajectory,
)
from entryexit.core.smallalg import eigenvalues, expm, singular_values, sym_eigen_max
from entryexit.exceptions import (
    DegradedQualityException,
    InvalidInputException,
    NoSignalException,
    UnsupportedKindException,
)
from entryexit.utils.constant import BalanceMethod, FtleMode, NileForm, QuadratureRule

logger = logging.getLogger(__name__)

# fraction of non-converged eigenvalue samples a series tolerates
MAX_FAILED_FRACTION = 0.01
ON_MANIFOLD_TOL = 1e-10

PointIntegrand = Callable[[np.ndarray, float], float]


def _as_grid(grid) -> np.ndarray:
    times = np.asarray(grid, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2:
        raise InvalidInputException("A grid of at least 2 times is required")
    if np.any(np.diff(times) <= 0):
        raise InvalidInputException("Grid times must be strictly increasing")
    return times


def _check_covered(gamma: Trajectory, times: np.ndarray) -> None:
    if not gamma.covers(float(times[0]), float(times[-1])):
        raise InvalidInputException(
            f"Grid [{times[0]}, {times[-1]}] is not covered by {gamma}"
        )


def _check_on_manifold(manifold: ManifoldSpec, points: np.ndarray, times: np.ndarray) -> None:
    for p, t in zip(points, times):
        if not manifold.contains(p, t, tol=ON_MANIFOLD_TOL):
            raise InvalidInputException(f"Reference state {p.tolist()} at t={t} is off the manifold")


def _series(
    times: np.ndarray,
    integrand: np.ndarray,
    kind: BalanceKind,
    z0: np.ndarray,
    rule: str = QuadratureRule.AUTO,
    in_gate: Optional[np.ndarray] = None,
) -> BalanceSeries:
    values = cumulative_quadrature(times, integrand, rule)
    series = BalanceSeries(
        times, values, kind, times[0], z0, rates=integrand, in_gate=in_gate
    )
    series.diagnostics["quadrature"] = rule
    return series


def track_branches(spectra: np.ndarray) -> Tuple[np.ndarray, int]:
    """
    reorder each row of spectra so column j follows one eigenvalue branch by continuity.

    Consecutive samples are matched by minimal total distance. When a value is equally close to two
    candidates (a crossing or a coalescence) the row keeps its sorted order and counts as ambiguous.
    Rows with NaN entries are left untouched and skipped for matching.

    :return: the tracked spectra and the number of ambiguous matches
    """
    tracked = np.array(spectra, dtype=complex)
    ambiguous = 0
    last = None
    for k in range(tracked.shape[0]):
        current = tracked[k]
        if not np.all(np.isfinite(current)):
            continue
        if last is not None:
            cost = np.abs(last[:, None] - current[None, :])
            _, cols = linear_sum_assignment(cost)
            scale = 1e-9 * (1 + np.max(np.abs(current)))
            best = cost[np.arange(len(cols)), cols]
            runner_up = np.sort(cost, axis=1)[:, 1] if cost.shape[1] > 1 else np.full(len(cols), np.inf)
            if np.any(np.abs(runner_up - best) <= scale) and not np.all(cols == np.arange(len(cols))):
                ambiguous += 1
            else:
                tracked[k] = current[cols]
        last = tracked[k]
    return tracked, ambiguous


def _spectral_integrand(
    mats: Sequence[np.ndarray], j: int, times: np.ndarray
) -> Tuple[np.ndarray, int, int]:
    spectra, failed = [], 0
    for mat in mats:
        spectrum = eigenvalues(mat)
        if j >= len(spectrum.values):
            raise InvalidInputException(f"Index {j} exceeds dimension {len(spectrum.values)}")
        failed += 0 if spectrum.converged else 1
        spectra.append(spectrum.values)
    if failed > MAX_FAILED_FRACTION * len(spectra):
        raise DegradedQualityException(
            f"Eigenvalue iteration failed at {failed} of {len(spectra)} samples"
        )
    tracked, ambiguous = track_branches(np.array(spectra))
    integrand = tracked[:, j].real
    if failed:
        logger.warning("Interpolating %d non-converged eigenvalue sample(s)", failed)
        ok = np.isfinite(integrand)
        integrand = np.interp(times, times[ok], integrand[ok])
    if ambiguous:
        logger.warning(
            "Eigenvalue branch %d is ambiguous at %d sample(s), sorted order kept there", j, ambiguous
        )
    return integrand, failed, ambiguous


def series_instant_eig(
    flow: FlowSystem, manifold: ManifoldSpec, gamma: Trajectory, j: int, grid
) -> BalanceSeries:
    """
    F(t) = int Re lambda_j(s) ds, lambda_j the j-th eigenvalue branch of A(s) = D_z h(gamma(s), s).
    """
    times = _as_grid(grid)
    _check_covered(gamma, times)
    points = gamma(times)
    _check_on_manifold(manifold, points, times)
    mats = [flow.jacobian(p, t) for p, t in zip(points, times)]
    integrand, failed, ambiguous = _spectral_integrand(mats, j, times)
    series = _series(times, integrand, BalanceKind(BalanceMethod.EIG, index=j), points[0])
    series.diagnostics.update(failed_samples=failed, ambiguous_samples=ambiguous)
    return series


def series_fastslow(flow_fs: FastSlowSystem, gamma_slow: Trajectory, j: int, grid) -> BalanceSeries:
    """
    F(t) = int Re rho_j(s) ds, rho_j the eigenvalues of the fast Jacobian D_x f along the slow trajectory.
    """
    times = _as_grid(grid)
    _check_covered(gamma_slow, times)
    points = gamma_slow(times)
    fast_field = np.array(
        [flow_fs.eps * flow_fs.velocity(p, t)[flow_fs.fast_indices] for p, t in zip(points, times)]
    )
    if np.any(np.abs(fast_field) > ON_MANIFOLD_TOL):
        raise InvalidInputException("Slow reference trajectory is off the critical manifold")
    mats = [flow_fs.fast_jacobian(p, t) for p, t in zip(points, times)]
    integrand, failed, ambiguous = _spectral_integrand(mats, j, times)
    series = _series(times, integrand, BalanceKind(BalanceMethod.FASTSLOW, index=j), points[0])
    series.diagnostics.update(failed_samples=failed, ambiguous_samples=ambiguous)
    return series


def ftle_value(phi: np.ndarray, t: float, t0: float, j: int) -> float:
    """
    l_j = ln(delta_j) / (t - t0), -inf when delta_j underflows.
    """
    delta = singular_values(phi)
    if j >= len(delta):
        raise InvalidInputException(f"Index {j} exceeds dimension {len(delta)}")
    if delta[j] <= np.finfo(float).tiny:
        return -np.inf
    return float(np.log(delta[j]) / (t - t0))


def series_ftle(
    flow: FlowSystem,
    gamma: Trajectory,
    j: int,
    mode: str,
    grid,
    t0: Optional[float] = None,
) -> BalanceSeries:
    """
    finite-time Lyapunov exponents l_j(t) along gamma, sampled on a grid that excludes t0.

    ``exact`` integrates the variational equation along gamma. ``commuting`` exponentiates the integrated
    linearization, Phi = expm(int A), which only equals the fundamental matrix for commuting families.
    """
    times = _as_grid(grid)
    t0 = gamma.t_start if t0 is None else float(t0)
    if not times[0] > t0:
        raise InvalidInputException(f"FTLE grid must start after t0={t0}")
    _check_covered(gamma, np.concatenate([[t0], times]))
    kind = BalanceKind.ftle(j, mode)
    z0 = gamma(t0)

    if mode == FtleMode.EXACT:
        solution = integrate_variational(flow, gamma, t0, float(times[-1]))

        def fundamental(t: float) -> np.ndarray:
            return solution(t)

    elif mode == FtleMode.COMMUTING:
        knots = np.concatenate([[t0], times])
        generators = np.array([flow.jacobian(gamma(t), t) for t in knots])
        integrated = cumulative_quadrature(knots, generators)
        # A(t) as Hermite slope reproduces polynomial integrals exactly
        spline = CubicHermiteSpline(knots, integrated, generators, axis=0)

        def fundamental(t: float) -> np.ndarray:
            idx = int(np.searchsorted(knots, t))
            if idx < len(knots) and knots[idx] == t:
                return expm(integrated[idx])
            return expm(spline(t))

    else:
        raise UnsupportedKindException(f"Unknown FTLE mode {mode!r}")

    values = np.array([ftle_value(fundamental(t), t, t0, j) for t in times])
    underflow = int(np.sum(np.isneginf(values)))
    if underflow:
        logger.warning("Singular value %d underflowed at %d sample(s)", j, underflow)
    series = BalanceSeries(
        times,
        values,
        kind,
        t0,
        z0,
        evaluator=lambda t: ftle_value(fundamental(t), t, t0, j),
    )
    series.diagnostics["underflow_samples"] = underflow
    return series


def nile_point(flow: FlowSystem, manifold: ManifoldSpec, p, t: float) -> float:
    """
    normal infinitesimal Lyapunov exponent sigma(p; t), the largest growth rate normal to the manifold.

    Codimension one flat manifolds give n^T A n. Several normals give the largest eigenvalue of the symmetric
    part of N A N^T. Graph manifolds x = m(y, t) give the largest eigenvalue of the symmetric part of
    D_x f - D_y m D_x g.
    """
    p = np.asarray(p, dtype=float)
    if not manifold.contains(p, t, tol=ON_MANIFOLD_TOL):
        raise InvalidInputException(f"Point {p.tolist()} is not on the manifold at t={t}")
    jac = flow.jacobian(p, t)
    if isinstance(manifold, FlatManifold):
        if manifold.codim == 1:
            n = manifold.unit_normal
            return float(n @ jac @ n)
        return sym_eigen_max(manifold.normals @ jac @ manifold.normals.T)
    elif isinstance(manifold, GraphManifold):
        x_idx, y_idx = manifold.x_indices, manifold.y_indices
        _, y = manifold.split(p)
        dm = np.atleast_2d(manifold.dm_dy(y, t))
        gamma_mat = jac[np.ix_(x_idx, x_idx)] - dm @ jac[np.ix_(y_idx, x_idx)]
        return sym_eigen_max(gamma_mat)
    raise UnsupportedKindException(f"Unsupported manifold kind {manifold.kind!r}")


def series_nile(
    flow: FlowSystem,
    manifold: ManifoldSpec,
    gamma: Trajectory,
    grid,
    integrand: Optional[PointIntegrand] = None,
) -> BalanceSeries:
    """
    F_sigma(t) = int sigma(gamma(s), s) ds.

    :param integrand: replaces sigma by a closed-form integrand of the same sign structure
    """
    times = _as_grid(grid)
    _check_covered(gamma, times)
    points = gamma(times)
    _check_on_manifold(manifold, points, times)
    if integrand is None:
        rates = np.array([nile_point(flow, manifold, p, t) for p, t in zip(points, times)])
        kind = BalanceKind.nile(NileForm.GEOMETRIC)
    else:
        rates = np.array([integrand(p, t) for p, t in zip(points, times)], dtype=float)
        kind = BalanceKind.nile(NileForm.LITERAL)
    return _series(times, rates, kind, points[0])


def series_velocity(
    times,
    normal_velocity,
    positions=None,
    gate: Optional[NeighbourhoodSpec] = None,
    rule: str = QuadratureRule.TRAPEZOID,
) -> BalanceSeries:
    """
    F_v(t) = int v(s) ds over measured normal velocities, with no contribution outside the region gate.
    """
    times = _as_grid(times)
    velocity = np.asarray(normal_velocity, dtype=float)
    if velocity.shape != times.shape:
        raise InvalidInputException("One normal velocity per sample time is required")
    if gate is not None:
        if positions is None:
            raise InvalidInputException("Positions are required to apply a region gate")
        in_gate = gate.contains(positions)
    else:
        in_gate = np.ones(times.shape, dtype=bool)
    z0 = np.atleast_2d(positions)[0] if positions is not None else np.zeros(1)
    return series_gated(times, velocity, in_gate, BalanceKind(BalanceMethod.VELOCITY), z0, rule)


def series_gated(
    times,
    integrand,
    in_gate,
    kind: BalanceKind,
    z0,
    rule: str = QuadratureRule.TRAPEZOID,
) -> BalanceSeries:
    """
    cumulative integral of a sampled integrand that contributes nothing outside the region gate.
    """
    times = _as_grid(times)
    in_gate = np.asarray(in_gate, dtype=bool)
    if not np.any(in_gate):
        raise NoSignalException("No sample lies inside the region gate")
    rates = np.where(in_gate, np.asarray(integrand, dtype=float), 0.0)
    return _series(times, rates, kind, np.asarray(z0, dtype=float), rule=rule, in_gate=in_gate)


def estimate_span(
    sample: Callable[[np.ndarray], np.ndarray],
    t0: float = 0.0,
    probe: Optional[float] = None,
    max_doublings: Optional[int] = None,
    factor: Optional[float] = None,
    points: int = 201,
) -> float:
    """
    crude a-priori search span: twice the first sign change of the integrand, times SPAN_FACTOR.

    :param sample: integrand values at an array of times starting at t0
    """
    probe = EntryExitConfig.PROBE_SPAN if probe is None else probe
    max_doublings = EntryExitConfig.MAX_DOUBLINGS if max_doublings is None else max_doublings
    factor = EntryExitConfig.SPAN_FACTOR if factor is None else factor
    length = probe
    for _ in range(max_doublings + 1):
        times = np.linspace(t0, t0 + length, points)
        values = np.asarray(sample(times), dtype=float)
        nonzero = np.abs(values) > 1e-12 * (1 + np.max(np.abs(values)))
        signs = np.sign(values[nonzero])
        flips = np.nonzero(signs[1:] != signs[:-1])[0]
        if len(flips):
            t_change = times[nonzero][flips[0] + 1] - t0
            return float(factor * 2 * t_change)
        length *= 2
    logger.warning(
        "No sign change of the integrand within %g, falling back to span %g",
        length / 2,
        factor * probe,
    )
    return float(factor * probe)


def _rates_along(
    reduced: FlowSystem, start: np.ndarray, rate: PointIntegrand, times: np.ndarray
) -> np.ndarray:
    gamma = integrate(reduced, start, float(times[0]), float(times[-1]))
    clipped = np.minimum(times, gamma.t_end)
    return np.array([rate(p, t) for p, t in zip(gamma(clipped), clipped)])


def build_series(
    model: FlowModel,
    kind: BalanceKind,
    z0=None,
    t0: float = 0.0,
    span: Optional[float] = None,
    grid_points: Optional[int] = None,
    chi: float = DEFAULT_CHI,
    gate_width: float = DEFAULT_GATE_WIDTH,
    eps: float = 1.0,
) -> Tuple[BalanceSeries, FlowSystem, np.ndarray]:
    """
    the balance series of a registered flow along the reference trajectory from z0.

    The fast-slow kind runs on the slow subsystem in slow time, the measured-velocity kind integrates a
    particle released a distance chi off the manifold and gates it with a band of width gate_width.

    :return: the series, the flow whose trajectories realize the exit and the reference initial state
    """
    grid_points = EntryExitConfig.GRID_POINTS if grid_points is None else grid_points
    if grid_points < 3:
        raise InvalidInputException(f"At least 3 grid points are required, got {grid_points}")
    if kind.method == BalanceMethod.FASTSLOW:
        flow_fs = model.fastslow(eps)
        reduced = model.slow_reduced
        start = np.asarray(model.slow_entry if z0 is None else z0, dtype=float)

        def probe(p: np.ndarray, t: float) -> float:
            return float(eigenvalues(flow_fs.fast_jacobian(p, t)).values[kind.index].real)

    else:
        reduced = model.reduced
        start = np.asarray(model.entry if z0 is None else z0, dtype=float)

        def probe(p: np.ndarray, t: float) -> float:
            return nile_point(model.flow, model.manifold, p, t)

    if span is None:
        span = estimate_span(lambda times: _rates_along(reduced, start, probe, times), t0)
        logger.info("Estimated search span %.6g for %s", span, kind)
    if not span > 0:
        raise InvalidInputException(f"Span must be positive, got {span}")

    gamma = integrate(reduced, start, t0, t0 + span)
    if gamma.domain_exit is not None:
        logger.warning("Reference trajectory ends at t=%.6g, grid truncated", gamma.t_end)
    grid = np.linspace(t0, gamma.t_end, grid_points)

    if kind.method == BalanceMethod.EIG:
        series = series_instant_eig(model.flow, model.manifold, gamma, kind.index, grid)
    elif kind.method == BalanceMethod.FASTSLOW:
        series = series_fastslow(flow_fs, gamma, kind.index, grid)
    elif kind.method == BalanceMethod.FTLE:
        series = series_ftle(model.flow, gamma, kind.index, kind.mode, grid[1:], t0)
    elif kind.method == BalanceMethod.NILE:
        literal = None
        if kind.form == NileForm.LITERAL:
            if model.nile_literal(start, t0) is None:
                raise UnsupportedKindException(f"Flow {model.NAME} has no literal NILE integrand")
            literal = model.nile_literal
        series = series_nile(model.flow, model.manifold, gamma, grid, literal)
    else:
        particle = integrate(model.flow, model.offset_entry(start, chi), t0, gamma.t_end)
        grid = np.linspace(t0, particle.t_end, grid_points)
        positions = particle(grid)
        normal = model.manifold.unit_normal
        normal_velocity = [normal @ model.flow.velocity(p, t) for p, t in zip(positions, grid)]
        series = series_velocity(grid, normal_velocity, positions, model.gate(gate_width))
    series.diagnostics["span"] = float(span)
    return series, reduced, start
