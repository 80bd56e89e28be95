"""Steady-state solution of the coupled bus-voltage equations.

At a fixed droop configuration every bus voltage satisfies a quadratic
current-balance equation coupled to its neighbors:

    v_n**2 / r_bus_n - (x_n/r_n + sum_m v_m/r_{n,m} - i_cc_n) * v_n + d_cp_n = 0

The physically viable operating point is the larger root (the smaller
one is the voltage-collapse branch).  The default solver is a damped
Gauss-Seidel fixed point that sweeps this per-bus update; a full-system
Newton iteration on the current-balance residual is kept as an
independent cross-check path.  Solvers are pure functions of their
arguments and safe to run concurrently.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Tuple

import numpy as np

from .errors import NonConvergence, NoRealRoot, TopologyMismatch
from .grid import ValidatedGrid

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10      # residual tolerance, amps
DEFAULT_MAX_ITER = 10_000
DEFAULT_DAMPING = 0.7    # weight on the fresh per-bus root


@dataclass(frozen=True)
class DroopState:
    """Live droop-control parameters, keyed by converter bus id."""

    x: Mapping[int, float]  # reference voltages [V]
    r: Mapping[int, float]  # virtual resistances [ohm]

    def validate(self, grid: ValidatedGrid) -> None:
        expected = set(grid.vsc_buses)
        if set(self.x) != expected or set(self.r) != expected:
            raise ValueError(
                f"droop entries must exist exactly for converter buses {sorted(expected)}"
            )
        for bus, r in self.r.items():
            if not r > 0.0:
                raise ValueError(f"virtual resistance on bus {bus} must be positive, got {r}")

    def conductances(self, grid: ValidatedGrid) -> np.ndarray:
        """Per-bus 1/r, zero on buses without a converter."""
        y = np.zeros(grid.n)
        for bus, r in self.r.items():
            y[bus] = 1.0 / r
        return y

    def source_terms(self, grid: ValidatedGrid) -> np.ndarray:
        """Per-bus x/r, zero on buses without a converter."""
        xr = np.zeros(grid.n)
        for bus, r in self.r.items():
            xr[bus] = self.x[bus] / r
        return xr

    def with_r(self, updates: Mapping[int, float]) -> "DroopState":
        merged = dict(self.r)
        merged.update(updates)
        return replace(self, r=merged)

    def with_x(self, updates: Mapping[int, float]) -> "DroopState":
        merged = dict(self.x)
        merged.update(updates)
        return replace(self, x=merged)


def nominal_droop(grid: ValidatedGrid) -> DroopState:
    """Droop state at the converter nameplate values."""
    return DroopState(
        x={bus: grid.vsc(bus).x_nom for bus in grid.vsc_buses},
        r={bus: grid.vsc(bus).r_nom for bus in grid.vsc_buses},
    )


@dataclass(frozen=True)
class SteadyState:
    """Solved operating point of the grid."""

    v: np.ndarray             # (n,) bus voltages [V]
    i: Dict[int, float]       # converter output currents [A]
    p: Dict[int, float]       # converter output powers [W]
    kappa: np.ndarray         # (n,) constant-power-load correction, >= 1
    r_bus: np.ndarray         # (n,) equivalent bus resistance [ohm]
    residual: float           # max current-balance error [A]


@dataclass(frozen=True)
class ViabilityViolation:
    bus: int
    x: float      # configured reference voltage [V]
    bound: float  # minimum reference voltage for a real operating point [V]


def _residual(grid: ValidatedGrid, xr: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Current-balance error per bus: injection minus load minus line export."""
    line_out = grid.g_line.sum(axis=1) * v - grid.g_line @ v
    return xr - y * v - grid.r_cr_inv * v - grid.i_cc - grid.d_cp / v - line_out


def solve_steady_state(
    grid: ValidatedGrid,
    droop: DroopState,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    method: str = "gauss_seidel",
    damping: float = DEFAULT_DAMPING,
) -> SteadyState:
    """Solve the coupled bus equations at the given droop configuration.

    ``tol`` bounds the final max current-balance residual in amps.
    Raises :class:`NoRealRoot` when a per-bus discriminant goes negative
    (droop parameters outside the viable range) and :class:`NonConvergence`
    when ``max_iter`` is exhausted.
    """
    droop.validate(grid)
    xr = droop.source_terms(grid)
    y = droop.conductances(grid)
    r_bus = 1.0 / (grid.r_cr_inv + grid.g_line.sum(axis=1) + y)

    if method == "gauss_seidel":
        v = _gauss_seidel(grid, xr, y, r_bus, tol, max_iter, damping)
    elif method == "newton":
        v = _newton(grid, xr, y, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")

    kappa = _kappa(grid, xr, r_bus, v)
    i, p = vsc_outputs(grid, droop, v)
    residual = float(np.max(np.abs(_residual(grid, xr, y, v))))
    return SteadyState(v=v, i=i, p=p, kappa=kappa, r_bus=r_bus, residual=residual)


def _gauss_seidel(
    grid: ValidatedGrid,
    xr: np.ndarray,
    y: np.ndarray,
    r_bus: np.ndarray,
    tol: float,
    max_iter: int,
    damping: float,
) -> np.ndarray:
    droop_like = _DroopArrays(xr, y)
    v = _initial_voltages_from_arrays(grid, droop_like)
    four_d = 4.0 * grid.d_cp / r_bus
    res = np.inf
    for sweep in range(max_iter):
        for bus in range(grid.n):
            b = xr[bus] + grid.g_line[bus] @ v - grid.i_cc[bus]
            disc = b * b - four_d[bus]
            if disc < 0.0:
                raise NoRealRoot(
                    f"bus {bus}: voltage quadratic has no real root "
                    f"(discriminant {disc:.3e}); droop parameters not viable"
                )
            root = 0.5 * r_bus[bus] * (b + np.sqrt(disc))
            v[bus] = damping * root + (1.0 - damping) * v[bus]
        res = np.max(np.abs(_residual(grid, xr, y, v)))
        if res <= tol:
            logger.debug("gauss_seidel converged in %d sweeps, residual %.3e", sweep + 1, res)
            return v
    raise NonConvergence(
        f"gauss_seidel: residual {res:.3e} A after {max_iter} sweeps (tol {tol:.1e})"
    )


def _newton(
    grid: ValidatedGrid,
    xr: np.ndarray,
    y: np.ndarray,
    tol: float,
    max_iter: int,
) -> np.ndarray:
    degree = grid.g_line.sum(axis=1)
    psi = np.diag(degree) - grid.g_line
    v = _initial_voltages_from_arrays(grid, _DroopArrays(xr, y))
    for it in range(max_iter):
        f = _residual(grid, xr, y, v)
        if np.max(np.abs(f)) <= tol:
            logger.debug("newton converged in %d iterations", it)
            return v
        jac = -(np.diag(y + grid.r_cr_inv - grid.d_cp / v**2) + psi)
        step = np.linalg.solve(jac, -f)
        scale = 1.0
        for _ in range(40):  # backtrack out of the nonphysical region
            trial = v + scale * step
            if np.all(trial > 0.0):
                v = trial
                break
            scale *= 0.5
        else:
            raise NoRealRoot("newton: step cannot stay in the positive-voltage region")
    raise NonConvergence(f"newton: no convergence after {max_iter} iterations")


@dataclass(frozen=True)
class _DroopArrays:
    xr: np.ndarray
    y: np.ndarray


def _initial_voltages_from_arrays(grid: ValidatedGrid, arrays: _DroopArrays) -> np.ndarray:
    # x = (x/r) / (1/r) on converter buses; load buses start at the mean of
    # their converter neighbors' set-points (global mean as fallback).
    v = np.zeros(grid.n)
    vsc = np.array(grid.vsc_buses)
    v[vsc] = arrays.xr[vsc] / arrays.y[vsc]
    mean_x = float(np.mean(v[vsc]))
    for bus in range(grid.n):
        if grid.has_vsc(bus):
            continue
        neighbor_x = [v[m] for m in grid.neighbors(bus) if grid.has_vsc(m)]
        v[bus] = float(np.mean(neighbor_x)) if neighbor_x else mean_x
    return v


def _kappa(grid: ValidatedGrid, xr: np.ndarray, r_bus: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Linearization correction per bus; exactly 1 where d_cp = 0."""
    b = xr + grid.g_line @ v - grid.i_cc
    disc = b * b - 4.0 * grid.d_cp / r_bus
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = 0.5 * (1.0 + b / np.sqrt(disc))
    return np.where(grid.d_cp == 0.0, 1.0, kappa)


def vsc_outputs(
    grid: ValidatedGrid, droop: DroopState, v: np.ndarray
) -> Tuple[Dict[int, float], Dict[int, float]]:
    """Converter output current (x - v)/r and power v*(x - v)/r per bus."""
    i = {}
    p = {}
    for bus in grid.vsc_buses:
        i[bus] = (droop.x[bus] - v[bus]) / droop.r[bus]
        p[bus] = v[bus] * i[bus]
    return i, p


def check_viability(
    grid: ValidatedGrid, droop: DroopState, v_neighbors: np.ndarray
) -> List[ViabilityViolation]:
    """Reference-voltage lower bounds for a real operating point.

    For each converter bus the root of the bus quadratic is real only if
    x >= r * (sqrt(4 d_cp / r_bus) - sum_m v_m / r_{n,m}) given the
    neighbor voltages.  Violations are returned as data, not raised.
    """
    droop.validate(grid)
    y = droop.conductances(grid)
    r_bus = 1.0 / (grid.r_cr_inv + grid.g_line.sum(axis=1) + y)
    violations = []
    for bus in grid.vsc_buses:
        inflow = grid.g_line[bus] @ v_neighbors
        bound = droop.r[bus] * (np.sqrt(4.0 * grid.d_cp[bus] / r_bus[bus]) - inflow)
        if droop.x[bus] < bound:
            violations.append(ViabilityViolation(bus=bus, x=droop.x[bus], bound=float(bound)))
    return violations


# -- batched evaluation -------------------------------------------------------

@dataclass(frozen=True)
class BatchSolve:
    """Result of solving many droop configurations at once."""

    v: np.ndarray         # (batch, n) voltages, NaN where not viable
    feasible: np.ndarray  # (batch,) bool, converged to a real root
    residual: np.ndarray  # (batch,) max current-balance error [A]
    sweeps: int


def solve_steady_state_many(
    grid: ValidatedGrid,
    x: Mapping[int, float],
    r: Mapping[int, np.ndarray],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = DEFAULT_DAMPING,
    check_every: int = 8,
) -> BatchSolve:
    """Vectorized Gauss-Seidel over a batch of virtual-resistance values.

    ``r`` maps each converter bus to a scalar or a (batch,) array; arrays
    are broadcast together.  Reference voltages are shared across the
    batch.  Non-viable configurations surface as ``feasible=False``
    lanes instead of raising, so a grid search can skip them.
    """
    if set(x) != set(grid.vsc_buses) or set(r) != set(grid.vsc_buses):
        raise ValueError("x and r must provide entries exactly for converter buses")
    batch = np.broadcast_shapes(*(np.shape(np.asarray(val)) for val in r.values()), (1,))
    size = int(np.prod(batch)) if batch else 1

    y = np.zeros((size, grid.n))
    xr = np.zeros((size, grid.n))
    for bus in grid.vsc_buses:
        r_vals = np.broadcast_to(np.asarray(r[bus], dtype=float), batch).reshape(size)
        y[:, bus] = 1.0 / r_vals
        xr[:, bus] = x[bus] / r_vals
    r_bus = 1.0 / (grid.r_cr_inv + grid.g_line.sum(axis=1) + y)
    four_d = 4.0 * grid.d_cp / r_bus

    v = np.empty((size, grid.n))
    nominal_like = _DroopArrays(xr.mean(axis=0), y.mean(axis=0))
    v[:] = _initial_voltages_from_arrays(grid, nominal_like)
    for bus in grid.vsc_buses:
        v[:, bus] = x[bus]

    res = np.full(size, np.inf)
    sweeps = 0
    with np.errstate(invalid="ignore"):
        for sweep in range(max_iter):
            sweeps = sweep + 1
            for bus in range(grid.n):
                b = xr[:, bus] + v @ grid.g_line[bus] - grid.i_cc[bus]
                root = 0.5 * r_bus[:, bus] * (b + np.sqrt(b * b - four_d[:, bus]))
                v[:, bus] = damping * root + (1.0 - damping) * v[:, bus]
            if sweeps % check_every == 0 or sweeps == max_iter:
                res = _residual_batch(grid, xr, y, v)
                alive = np.isfinite(res)
                if not np.any(alive & (res > tol)):
                    break
    feasible = np.isfinite(res) & (res <= tol)
    return BatchSolve(v=v, feasible=feasible, residual=res, sweeps=sweeps)


def _residual_batch(grid, xr, y, v):
    line_out = v * grid.g_line.sum(axis=1) - v @ grid.g_line.T
    with np.errstate(invalid="ignore", divide="ignore"):
        f = xr - y * v - grid.r_cr_inv * v - grid.i_cc - grid.d_cp / v - line_out
        return np.max(np.abs(f), axis=1)


# -- closed form for the two-source star --------------------------------------

def two_source_closed_form(grid: ValidatedGrid, droop: DroopState) -> np.ndarray:
    """Exact voltages for a star of two source buses feeding one load bus.

    Both source buses must host a converter and no local load; the load
    bus carries the composite load and connects to each source by one
    line.  The load-bus voltage follows from reducing each source to its
    Thevenin equivalent, the source voltages from their own (linear) bus
    equations.  Serves as the independent oracle for the iterative solver.
    """
    droop.validate(grid)
    if grid.n != 3 or len(grid.vsc_buses) != 2:
        raise TopologyMismatch("expected exactly 3 buses with converters on 2 of them")
    load_bus = next(bus for bus in range(3) if not grid.has_vsc(bus))
    sources = list(grid.vsc_buses)
    for bus in sources:
        load = grid.buses[bus].load
        if load.r_cr is not None or load.i_cc != 0.0 or load.d_cp != 0.0:
            raise TopologyMismatch(f"source bus {bus} must carry no local load")
        if grid.g_line[bus, load_bus] == 0.0:
            raise TopologyMismatch(f"source bus {bus} must connect to the load bus")
    if grid.g_line[sources[0], sources[1]] != 0.0:
        raise TopologyMismatch("source buses must not be directly connected")

    r_leg = {bus: droop.r[bus] + 1.0 / grid.g_line[bus, load_bus] for bus in sources}
    g_total = sum(1.0 / r_leg[bus] for bus in sources) + grid.r_cr_inv[load_bus]
    b = sum(droop.x[bus] / r_leg[bus] for bus in sources) - grid.i_cc[load_bus]
    disc = b * b - 4.0 * grid.d_cp[load_bus] * g_total
    if disc < 0.0:
        raise NoRealRoot("load-bus quadratic has no real root for these droop parameters")
    v = np.zeros(3)
    v[load_bus] = (b + np.sqrt(disc)) / (2.0 * g_total)
    for bus in sources:
        g_line = grid.g_line[bus, load_bus]
        r_bus = 1.0 / (1.0 / droop.r[bus] + g_line)
        v[bus] = r_bus * (droop.x[bus] / droop.r[bus] + v[load_bus] * g_line)
    return v
