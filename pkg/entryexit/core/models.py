from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.optimize import brentq

from entryexit.core.smallalg import as_mat
from entryexit.exceptions import InvalidInputException, UnsupportedKindException
from entryexit.utils.constant import BalanceMethod, FtleMode, ManifoldKind, NileForm
from entryexit.utils.entities import DomainExit

VectorField = Callable[[np.ndarray, float], np.ndarray]
MatrixField = Callable[[np.ndarray, float], np.ndarray]


def as_state(z, dim: Optional[int] = None) -> np.ndarray:
    state = np.array(z, dtype=float).reshape(-1)
    if dim is not None and state.shape[0] != dim:
        raise InvalidInputException(f"Expect a state of dimension {dim}, got {state.shape[0]}")
    if not np.all(np.isfinite(state)):
        raise InvalidInputException(f"State {state} has non-finite entries")
    return state


class DomainBox:
    """
    Data Class for the coordinate box a vector field is declared on
    """

    def __init__(
        self,
        lower: Sequence[float],
        upper: Sequence[float],
        open_lower: Optional[Sequence[bool]] = None,
        open_upper: Optional[Sequence[bool]] = None,
    ):
        """
        :param lower: lower bound per coordinate, -inf for unbounded
        :param upper: upper bound per coordinate, inf for unbounded
        :param open_lower: whether the lower bound itself is excluded, per coordinate
        :param open_upper: whether the upper bound itself is excluded, per coordinate
        """
        self.lower = np.array(lower, dtype=float)
        self.upper = np.array(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise InvalidInputException("Domain box bounds must be ordered per coordinate")
        dim = self.lower.shape[0]
        self.open_lower = np.array(open_lower if open_lower is not None else [False] * dim)
        self.open_upper = np.array(open_upper if open_upper is not None else [False] * dim)

    def contains(self, z: np.ndarray) -> bool:
        above = np.where(self.open_lower, z > self.lower, z >= self.lower)
        below = np.where(self.open_upper, z < self.upper, z <= self.upper)
        return bool(np.all(above & below))

    @staticmethod
    def unbounded(dim: int) -> "DomainBox":
        return DomainBox([-np.inf] * dim, [np.inf] * dim)

    def __repr__(self):
        return f"DomainBox: {self.lower.tolist()} .. {self.upper.tolist()}"


class FlowSystem:
    """
    Data Class for a parameterized vector field z' = h(z, t)
    """

    def __init__(
        self,
        name: str,
        dim: int,
        rhs: VectorField,
        jac: Optional[MatrixField] = None,
        params: Optional[Dict[str, float]] = None,
        domain: Optional[DomainBox] = None,
    ):
        """
        :param name: registry id or a descriptive name
        :param dim: state dimension, at least 2
        :param rhs: velocity evaluator (z, t) -> z'
        :param jac: analytic Jacobian evaluator (z, t) -> D_z h, central differences are used when absent
        :param params: named real parameters the evaluators close over, kept for reporting
        :param domain: box on which rhs is finite
        """
        if dim < 2:
            raise InvalidInputException(f"Flow dimension must be at least 2, got {dim}")
        self.name = name
        self.dim = dim
        self._rhs = rhs
        self._jac = jac
        self.params = dict(params) if params else {}
        self.domain = domain if domain is not None else DomainBox.unbounded(dim)

    def __repr__(self):
        return f"FlowSystem: {self.name}{self.params}"

    @property
    def has_analytic_jacobian(self) -> bool:
        return self._jac is not None

    def velocity(self, z, t: float) -> np.ndarray:
        return np.asarray(self._rhs(np.asarray(z, dtype=float), t), dtype=float)

    def jacobian(self, z, t: float) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self._jac is not None:
            return as_mat(self._jac(z, t))
        return self.finite_difference_jacobian(z, t)

    def finite_difference_jacobian(self, z, t: float) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        step = 1e-6 * (1.0 + np.linalg.norm(z))
        columns = []
        for i in range(self.dim):
            dz = np.zeros(self.dim)
            dz[i] = step
            columns.append(
                (self.velocity(z + dz, t) - self.velocity(z - dz, t)) / (2 * step)
            )
        return np.column_stack(columns)


class FastSlowSystem(FlowSystem):
    """
    Flow in fast-slow form eps * x' = f(x, y), y' = g(x, y)
    """

    def __init__(
        self,
        name: str,
        dim: int,
        rhs: VectorField,
        eps: float,
        fast_indices: Sequence[int],
        jac: Optional[MatrixField] = None,
        params: Optional[Dict[str, float]] = None,
        domain: Optional[DomainBox] = None,
    ):
        """
        :param rhs: velocity of the scaled system, fast components already divided by eps
        :param eps: time-scale separation, 0 < eps <= 1
        :param fast_indices: coordinates of the fast variable x
        """
        super().__init__(name, dim, rhs, jac, params, domain)
        if not 0 < eps <= 1:
            raise InvalidInputException(f"eps must be in (0, 1], got {eps}")
        self.eps = eps
        self.fast_indices = list(fast_indices)

    def fast_jacobian(self, z, t: float) -> np.ndarray:
        """
        D_x f, the Jacobian of the unscaled fast field with respect to the fast variables.
        """
        jac = self.jacobian(z, t)
        idx = np.ix_(self.fast_indices, self.fast_indices)
        return self.eps * jac[idx]


class ManifoldSpec:
    """
    Base class for invariant manifold descriptions
    """

    kind: str = ""

    def contains(self, p, t: float = 0.0, tol: float = 1e-10) -> bool:
        raise NotImplementedError


class FlatManifold(ManifoldSpec):
    """
    Data Class for a flat manifold through a base point, described by its unit normal(s)
    """

    kind = ManifoldKind.FLAT

    def __init__(self, base_point, normals):
        """
        :param base_point: any point on the manifold
        :param normals: a unit normal vector for codimension one, or orthonormal normals as rows
        """
        self.base_point = as_state(base_point)
        normals = np.atleast_2d(np.array(normals, dtype=float))
        if normals.shape[1] != self.base_point.shape[0]:
            raise InvalidInputException("Normal and base point dimensions differ")
        gram = normals @ normals.T
        if not np.allclose(gram, np.eye(normals.shape[0]), rtol=0, atol=1e-12):
            raise InvalidInputException("Manifold normals must be orthonormal")
        self.normals = normals

    def __repr__(self):
        return f"FlatManifold: base={self.base_point.tolist()} normals={self.normals.tolist()}"

    @property
    def codim(self) -> int:
        return self.normals.shape[0]

    @property
    def unit_normal(self) -> np.ndarray:
        return self.normals[0]

    def normal_offset(self, p) -> np.ndarray:
        return self.normals @ (np.asarray(p, dtype=float) - self.base_point)

    def contains(self, p, t: float = 0.0, tol: float = 1e-10) -> bool:
        return bool(np.all(np.abs(self.normal_offset(p)) <= tol))


class GraphManifold(ManifoldSpec):
    """
    Data Class for a manifold written as a graph x = m(y, t) over the tangential coordinates y
    """

    kind = ManifoldKind.GRAPH

    def __init__(
        self,
        x_indices: Sequence[int],
        y_indices: Sequence[int],
        m: Callable[[np.ndarray, float], np.ndarray],
        dm_dy: Callable[[np.ndarray, float], np.ndarray],
    ):
        """
        :param x_indices: coordinates solved for by the graph (normal directions)
        :param y_indices: coordinates parameterizing the manifold
        :param m: graph map y, t -> x
        :param dm_dy: derivative of m, shape len(x) x len(y)
        """
        self.x_indices = list(x_indices)
        self.y_indices = list(y_indices)
        self.m = m
        self.dm_dy = dm_dy

    def __repr__(self):
        return f"GraphManifold: x{self.x_indices} = m(y{self.y_indices})"

    def split(self, p) -> Tuple[np.ndarray, np.ndarray]:
        p = np.asarray(p, dtype=float)
        return p[self.x_indices], p[self.y_indices]

    def contains(self, p, t: float = 0.0, tol: float = 1e-10) -> bool:
        x, y = self.split(p)
        return bool(np.all(np.abs(x - np.atleast_1d(self.m(y, t))) <= tol))


class NeighbourhoodSpec:
    """
    Data Class for a region gate {z : lower <= z[coordinate_index] <= upper}
    """

    def __init__(self, coordinate_index: int, lower: float, upper: float):
        if not lower < upper:
            raise InvalidInputException(f"Gate bounds must be ordered, got [{lower}, {upper}]")
        self.coordinate_index = coordinate_index
        self.lower = float(lower)
        self.upper = float(upper)

    def __repr__(self):
        return f"NeighbourhoodSpec: z{self.coordinate_index + 1} in [{self.lower}, {self.upper}]"

    def contains(self, positions) -> np.ndarray:
        """
        closed-interval membership, vectorized over rows of positions.
        """
        coord = np.atleast_2d(np.asarray(positions, dtype=float))[:, self.coordinate_index]
        return (coord >= self.lower) & (coord <= self.upper)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "coordinate_index": self.coordinate_index,
            "lower": self.lower,
            "upper": self.upper,
        }


class Trajectory:
    """
    Data Class for a time-stamped state sequence with cubic Hermite dense output
    """

    def __init__(
        self,
        times,
        states,
        velocities,
        domain_exit: Optional[DomainExit] = None,
    ):
        """
        :param times: strictly increasing sample times
        :param states: one state per row
        :param velocities: z' at every node, used as Hermite slopes
        :param domain_exit: set when integration stopped early because the state left the domain box
        """
        self.times = np.asarray(times, dtype=float)
        self.states = np.atleast_2d(np.asarray(states, dtype=float))
        self.velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
        if self.times.ndim != 1 or self.times.shape[0] != self.states.shape[0]:
            raise InvalidInputException("One state per time stamp is required")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputException("Trajectory times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise InvalidInputException("Trajectory states must be finite")
        self.domain_exit = domain_exit
        self._spline = (
            CubicHermiteSpline(self.times, self.states, self.velocities, axis=0)
            if self.times.shape[0] > 1
            else None
        )

    def __repr__(self):
        return f"Trajectory: {len(self.times)} nodes on [{self.t_start}, {self.t_end}]"

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1].copy()

    def covers(self, t_from: float, t_to: float) -> bool:
        span = max(1.0, abs(self.t_end))
        return self.t_start <= t_from and t_to <= self.t_end + 1e-12 * span

    def __call__(self, t):
        """
        interpolated state(s) at t, stored nodes are returned unchanged.
        """
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if self._spline is None:
            out = np.repeat(self.states[:1], t_arr.shape[0], axis=0)
        else:
            out = self._spline(t_arr)
            idx = np.clip(np.searchsorted(self.times, t_arr), 0, len(self.times) - 1)
            exact = self.times[idx] == t_arr
            out[exact] = self.states[idx[exact]]
        return out[0] if np.ndim(t) == 0 else out

    def first_crossing(
        self, index: int, level: float, direction: int = 1, after: Optional[float] = None
    ) -> Optional[float]:
        """
        first time coordinate `index` crosses `level` in the given direction (+1 upward, -1 downward).

        Bracketed on the stored nodes, refined with Brent's method on the dense output.
        """
        start = self.t_start if after is None else after
        mask = self.times >= start
        times = self.times[mask]
        offsets = direction * (self.states[mask, index] - level)
        for i in range(len(times) - 1):
            if offsets[i] < 0 <= offsets[i + 1]:
                if offsets[i + 1] == 0:
                    return float(times[i + 1])
                return float(
                    brentq(
                        lambda s: self(s)[index] - level,
                        times[i],
                        times[i + 1],
                        xtol=1e-14,
                        rtol=4 * np.finfo(float).eps,
                    )
                )
        return None


class FundamentalSolution:
    """
    Data Class for the fundamental matrix Phi(t; t0, z0) of the variational equation along a trajectory
    """

    def __init__(self, times, mats, derivatives):
        """
        :param times: strictly increasing times, the first one is t0
        :param mats: Phi at every time, Phi(t0) = I
        :param derivatives: A(t) Phi(t) at every time, used as Hermite slopes
        """
        self.times = np.asarray(times, dtype=float)
        self.mats = np.asarray(mats, dtype=float)
        self.derivatives = np.asarray(derivatives, dtype=float)
        self.dim = self.mats.shape[1]
        self._spline = (
            CubicHermiteSpline(self.times, self.mats, self.derivatives, axis=0)
            if self.times.shape[0] > 1
            else None
        )

    def __repr__(self):
        return f"FundamentalSolution: {self.dim}x{self.dim} on [{self.times[0]}, {self.times[-1]}]"

    def __call__(self, t: float) -> np.ndarray:
        idx = int(np.clip(np.searchsorted(self.times, t), 0, len(self.times) - 1))
        if self.times[idx] == t or self._spline is None:
            return self.mats[idx].copy()
        return self._spline(t)

    def liouville_ratio(self, trace_integral: float, t: float) -> float:
        """
        det Phi(t) / exp(int tr A), close to 1 for an accurate solution.
        """
        return float(np.linalg.det(self(t)) / np.exp(trace_integral))


class BalanceKind:
    """
    Data Class for the balance function variant: which growth measure is integrated along the reference
    """

    def __init__(
        self,
        method: str,
        index: int = 0,
        mode: Optional[str] = None,
        form: str = NileForm.GEOMETRIC,
    ):
        """
        :param method: one of :class:`entryexit.utils.constant.BalanceMethod`
        :param index: eigenvalue / singular value index j, counted from 0 in descending order
        :param mode: FTLE mode, exact or commuting
        :param form: NILE integrand form, geometric or literal
        """
        methods = [
            BalanceMethod.EIG,
            BalanceMethod.FASTSLOW,
            BalanceMethod.FTLE,
            BalanceMethod.NILE,
            BalanceMethod.VELOCITY,
        ]
        if method not in methods:
            raise UnsupportedKindException(f"Unknown balance method {method!r}")
        if index < 0:
            raise InvalidInputException(f"Index must be non-negative, got {index}")
        if method == BalanceMethod.FTLE:
            mode = mode or FtleMode.EXACT
            if mode not in (FtleMode.EXACT, FtleMode.COMMUTING):
                raise UnsupportedKindException(f"Unknown FTLE mode {mode!r}")
        self.method = method
        self.index = index
        self.mode = mode
        self.form = form

    def __str__(self):
        if self.method in (BalanceMethod.EIG, BalanceMethod.FASTSLOW):
            return f"{self.method}[{self.index}]"
        elif self.method == BalanceMethod.FTLE:
            return f"{self.method}[{self.index}]:{self.mode}"
        elif self.method == BalanceMethod.NILE:
            return f"{self.method}:{self.form}"
        return self.method

    def __repr__(self):
        return "BalanceKind: " + str(self)

    def __eq__(self, other):
        return isinstance(other, BalanceKind) and str(self) == str(other)

    def __hash__(self):
        return hash(str(self))

    @property
    def starts_at_zero(self) -> bool:
        return self.method != BalanceMethod.FTLE

    @staticmethod
    def nile(form: str = NileForm.GEOMETRIC) -> "BalanceKind":
        return BalanceKind(BalanceMethod.NILE, form=form)

    @staticmethod
    def ftle(index: int = 0, mode: str = FtleMode.EXACT) -> "BalanceKind":
        return BalanceKind(BalanceMethod.FTLE, index=index, mode=mode)


class BalanceSeries:
    """
    Data Class for balance function values F(t) on a time grid
    """

    def __init__(
        self,
        times,
        values,
        kind: BalanceKind,
        t0: float,
        z0,
        rates=None,
        evaluator: Optional[Callable[[float], float]] = None,
        in_gate=None,
    ):
        """
        :param times: increasing sample times
        :param values: F at every sample time
        :param kind: the balance variant
        :param t0: reference initial time
        :param z0: reference initial state
        :param rates: dF/dt samples (the integrand) for integral kinds
        :param evaluator: exact pointwise evaluation of F, preferred for root refinement
        :param in_gate: region-gate membership per sample, for measured kinds
        """
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.shape != self.values.shape:
            raise InvalidInputException("One value per time stamp is required")
        self.kind = kind
        self.t0 = float(t0)
        self.z0 = as_state(z0)
        self.rates = None if rates is None else np.asarray(rates, dtype=float)
        self.evaluator = evaluator
        self.in_gate = None if in_gate is None else np.asarray(in_gate, dtype=bool)
        self.diagnostics: Dict[str, Any] = {}
        self._interpolant: Optional[Callable] = None

    def __repr__(self):
        return f"BalanceSeries: {self.kind} with {len(self.times)} samples"

    def __len__(self):
        return len(self.times)

    def interpolant(self) -> Callable:
        if self._interpolant is None:
            finite = np.isfinite(self.values)
            if self.rates is not None:
                self._interpolant = CubicHermiteSpline(
                    self.times[finite], self.values[finite], self.rates[finite]
                )
            else:
                self._interpolant = CubicSpline(self.times[finite], self.values[finite])
        return self._interpolant

    def __call__(self, t: float) -> float:
        if self.evaluator is not None:
            return float(self.evaluator(t))
        idx = int(np.clip(np.searchsorted(self.times, t), 0, len(self.times) - 1))
        if self.times[idx] == t:
            return float(self.values[idx])
        return float(self.interpolant()(t))

    def scaled(self, factor: float) -> "BalanceSeries":
        """
        the series of factor times the integrand, zeros are unchanged for factor > 0.
        """
        evaluator = self.evaluator
        return BalanceSeries(
            self.times,
            factor * self.values,
            self.kind,
            self.t0,
            self.z0,
            rates=None if self.rates is None else factor * self.rates,
            evaluator=None if evaluator is None else (lambda t: factor * evaluator(t)),
            in_gate=self.in_gate,
        )


class ExitPrediction:
    """
    Data Class for the first nontrivial zero T of a balance series and the exit state it maps to
    """

    def __init__(
        self,
        found: bool,
        T: Optional[float] = None,
        dF_dt_at_T: Optional[float] = None,
        degenerate: bool = False,
        bracket: Optional[Tuple[float, float]] = None,
        exit_state: Optional[np.ndarray] = None,
    ):
        """
        :param bracket: the grid interval [t_i, t_i+1] the zero was located in, closed: a zero sitting on a grid node
            equals the right end
        """
        self.found = found
        self.T = T
        self.dF_dt_at_T = dF_dt_at_T
        self.degenerate = degenerate
        self.bracket = bracket
        self.exit_state = exit_state

    def __repr__(self):
        if not self.found:
            return "ExitPrediction: not found"
        return (
            f"ExitPrediction: T={self.T} exit={None if self.exit_state is None else self.exit_state.tolist()}"
            f" dF/dt={self.dF_dt_at_T} degenerate={self.degenerate}"
        )

    @staticmethod
    def not_found() -> "ExitPrediction":
        return ExitPrediction(False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "found": self.found,
            "T": self.T,
            "exit": None if self.exit_state is None else [float(x) for x in self.exit_state],
            "dF_dt": self.dF_dt_at_T,
            "degenerate": self.degenerate,
            "bracket": None if self.bracket is None else list(self.bracket),
        }
