import logging
from typing import Optional

import numpy as np
from scipy.integrate import RK45, cumulative_simpson, cumulative_trapezoid

from entryexit.config import EntryExitConfig
from entryexit.core.models import (
    FlatManifold,
    FlowSystem,
    FundamentalSolution,
    ManifoldSpec,
    Trajectory,
    as_state,
)
from entryexit.exceptions import (
    DomainException,
    InvalidInputException,
    StiffnessException,
    UnsupportedKindException,
)
from entryexit.utils.constant import QuadratureRule
from entryexit.utils.entities import DomainExit

logger = logging.getLogger(__name__)


def integrate(
    flow: FlowSystem,
    z0,
    t0: float,
    t_end: float,
    tol: Optional[float] = None,
    atol: Optional[float] = None,
    max_step: float = np.inf,
) -> Trajectory:
    """
    integrate z' = h(z, t) from (t0, z0) to t_end with the Dormand-Prince 4(5) pair.

    Every accepted step becomes a trajectory node together with its velocity, so the dense output is the
    cubic Hermite interpolant through the nodes. Leaving the domain box ends the integration early and is
    reported through :attr:`Trajectory.domain_exit`, not raised.

    :param tol: relative local error per step, defaults to ``EntryExitConfig.ODE_TOL``
    :param atol: absolute local error per step, defaults to tol
    :param max_step: upper bound on the step size
    """
    if not t_end > t0:
        raise InvalidInputException(f"t_end must exceed t0, got [{t0}, {t_end}]")
    z0 = as_state(z0, flow.dim)
    if not flow.domain.contains(z0):
        raise InvalidInputException(f"Initial state {z0.tolist()} is outside {flow.domain}")
    rtol = tol if tol is not None else EntryExitConfig.ODE_TOL
    atol = atol if atol is not None else rtol

    solver = RK45(
        lambda t, z: flow.velocity(z, t),
        t0,
        z0,
        t_end,
        max_step=max_step,
        rtol=rtol,
        atol=atol,
    )
    times, states, velocities = [t0], [z0], [flow.velocity(z0, t0)]
    domain_exit = None
    while solver.status == "running":
        try:
            message = solver.step()
        except DomainException as e:
            domain_exit = DomainExit(times[-1], states[-1].copy(), str(e))
            break
        if solver.status == "failed":
            raise StiffnessException(
                f"Step size underflow at t={solver.t:.17g} for {flow.name}: {message}"
            )
        if not flow.domain.contains(solver.y):
            domain_exit = DomainExit(times[-1], states[-1].copy(), "left domain box")
            break
        times.append(solver.t)
        states.append(solver.y.copy())
        velocities.append(flow.velocity(solver.y, solver.t))
    if domain_exit is not None:
        logger.info(
            "%s left its domain after t=%.6g: %s", flow.name, domain_exit.time, domain_exit.reason
        )
    return Trajectory(times, states, velocities, domain_exit=domain_exit)


def integrate_variational(
    flow: FlowSystem,
    gamma: Trajectory,
    t0: float,
    t_end: float,
    tol: Optional[float] = None,
    atol: Optional[float] = None,
    max_step: float = np.inf,
) -> FundamentalSolution:
    """
    solve Z' = A(t) Z with A(t) = D_z h(gamma(t), t) and Z(t0) = I.
    """
    if not t_end > t0:
        raise InvalidInputException(f"t_end must exceed t0, got [{t0}, {t_end}]")
    if not gamma.covers(t0, t_end):
        raise InvalidInputException(
            f"Reference trajectory on [{gamma.t_start}, {gamma.t_end}] doesn't cover [{t0}, {t_end}]"
        )
    dim = flow.dim
    rtol = tol if tol is not None else EntryExitConfig.ODE_TOL
    atol = atol if atol is not None else rtol

    def linearization(t: float) -> np.ndarray:
        return flow.jacobian(gamma(min(t, gamma.t_end)), t)

    def rhs(t: float, flat: np.ndarray) -> np.ndarray:
        return (linearization(t) @ flat.reshape(dim, dim)).reshape(-1)

    identity = np.eye(dim)
    solver = RK45(rhs, t0, identity.reshape(-1), t_end, max_step=max_step, rtol=rtol, atol=atol)
    times, mats, derivatives = [t0], [identity], [linearization(t0)]
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise StiffnessException(
                f"Step size underflow at t={solver.t:.17g} in variational equation: {message}"
            )
        phi = solver.y.reshape(dim, dim).copy()
        times.append(solver.t)
        mats.append(phi)
        derivatives.append(linearization(solver.t) @ phi)
    return FundamentalSolution(times, mats, derivatives)


def is_uniform(times: np.ndarray, rtol: float = 1e-9) -> bool:
    steps = np.diff(times)
    return bool(np.allclose(steps, steps[0], rtol=rtol, atol=0))


def cumulative_quadrature(times, values, rule: str = QuadratureRule.AUTO) -> np.ndarray:
    """
    cumulative integral of sampled values at every sample time, the first entry is exactly 0.

    Composite Simpson on uniform grids, trapezoid on nonuniform ones. values may carry extra trailing
    axes (e.g. matrix-valued integrands), time runs along axis 0.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2:
        raise InvalidInputException("At least 2 samples are required for quadrature")
    if values.shape[0] != times.shape[0]:
        raise InvalidInputException("One value per sample time is required")
    if np.any(np.diff(times) <= 0):
        raise InvalidInputException("Sample times must be strictly increasing")
    if not np.all(np.isfinite(values)):
        raise InvalidInputException("Integrand samples must be finite")
    if rule == QuadratureRule.AUTO:
        rule = (
            QuadratureRule.SIMPSON
            if times.shape[0] >= 3 and is_uniform(times)
            else QuadratureRule.TRAPEZOID
        )
    if rule == QuadratureRule.SIMPSON:
        return cumulative_simpson(values, x=times, axis=0, initial=0)
    return cumulative_trapezoid(values, x=times, axis=0, initial=0)


def project_to_manifold(manifold: ManifoldSpec, p) -> np.ndarray:
    """
    orthogonal projection of p onto a flat manifold.
    """
    if not isinstance(manifold, FlatManifold):
        raise UnsupportedKindException(
            f"Projection is only supported for flat manifolds, got {manifold.kind}"
        )
    p = as_state(p, manifold.base_point.shape[0])
    return p - manifold.normals.T @ manifold.normal_offset(p)
