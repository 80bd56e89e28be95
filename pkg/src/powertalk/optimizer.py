"""Virtual-resistance tuning for one-way signaling throughput.

For a fixed transmitter/receiver pair the received SNR is governed by
per-converter gain terms g_n: the squared voltage gain at the receiver,
divided by the squared power sensitivity of converter n, times that
converter's remaining budget headroom.  The binding constraint is the
smallest g_n, so tuning maximizes min_n g_n over the virtual-resistance
box via exhaustive grid search with the step the deployment uses.  All
grid-point evaluations are pure, so the search result is independent of
evaluation order; ties resolve to the smallest resistances.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .budget import vr_power_investment
from .channel import linearize
from .errors import EmptySearchSpace, NonConvergence, NoRealRoot
from .grid import ValidatedGrid
from .steady_state import (
    DroopState,
    check_viability,
    solve_steady_state,
    solve_steady_state_many,
)

logger = logging.getLogger(__name__)

DEFAULT_STEP = 0.005   # search step on each virtual resistance [ohm]
DEFAULT_R_MAX_CAP = 10.0   # cap on r_max as a multiple of r_nom
DEFAULT_R_MAX_MARGIN = 0.9  # viability safety margin

__all__ = [
    "OptimizationResult",
    "SweepRow",
    "ConcavityReport",
    "one_way_snr",
    "maximize_snr_grid",
    "capacity",
    "capacity_sweep",
    "concavity_probe",
    "default_r_max",
]


@dataclass(frozen=True)
class OptimizationResult:
    """Best virtual-resistance pair found by the exhaustive search."""

    r_star: Dict[int, float]    # per-converter resistance [ohm]
    snr: float
    capacity: float             # bits/slot
    g_values: Dict[int, float]  # per-converter gain terms at the optimum [V^2]
    grid_step: float            # [ohm]
    evaluations: int


@dataclass(frozen=True)
class SweepRow:
    """One budget point of a capacity sweep."""

    pi: float                   # common budget [W]
    snr_nominal: float
    snr_opt: float
    capacity_nominal: float     # bits/slot
    capacity_opt: float         # bits/slot
    r_star: Dict[int, float]    # per-converter resistance [ohm]


@dataclass(frozen=True)
class ConcavityReport:
    """Numerical curvature audit of the gain terms over the search region."""

    points: Tuple[Tuple[float, ...], ...]   # sampled interior resistance pairs
    max_rel_eig: float                      # worst Hessian eigenvalue, relative
    violations: Tuple[Tuple[Tuple[float, ...], int, float], ...]  # (point, bus, rel eig)
    grad_nominal: Dict[int, Tuple[float, ...]]  # dg_n/dr at nominal per converter
    nominal_at_box_corner: bool             # all partials >= 0 at nominal

    @property
    def ok(self) -> bool:
        return not self.violations and self.nominal_at_box_corner


def capacity(snr: float) -> float:
    """Bits per slot of the scalar Gaussian channel: 0.5 * log2(1 + snr)."""
    if snr < 0.0:
        raise ValueError(f"snr must be nonnegative, got {snr}")
    return 0.5 * math.log2(1.0 + snr)


def one_way_snr(
    grid: ValidatedGrid,
    droop: DroopState,
    nominal: DroopState,
    pi: Mapping[int, float],
    sigma_z: float,
    tx: int,
    rx: int,
) -> Tuple[float, Dict[int, float]]:
    """Received SNR for one transmitter under every converter's budget.

    Each converter n contributes g_n = (h_rx_tx / phi_n_tx)^2 *
    (pi_n^2 - dp_vr_n^2): the budget headroom left after the static
    investment, translated into receivable signal power.  The SNR is the
    smallest g_n over sigma_z^2, clamped to zero once any investment
    exceeds its budget.
    """
    _check_link(grid, pi, tx, rx)
    state = solve_steady_state(grid, droop)
    model = linearize(grid, droop, state)
    dp = vr_power_investment(grid, nominal, droop)
    h = model.H[rx, tx]
    g = {}
    for bus in sorted(pi):
        headroom = pi[bus] ** 2 - dp[bus] ** 2
        with np.errstate(divide="ignore"):
            g[bus] = float((h / model.Phi[bus, tx]) ** 2 * headroom)
    if any(pi[bus] ** 2 < dp[bus] ** 2 for bus in pi):
        return 0.0, g
    return max(0.0, min(g.values()) / sigma_z**2), g


def maximize_snr_grid(
    grid: ValidatedGrid,
    nominal: DroopState,
    pi: Mapping[int, float],
    sigma_z: float,
    tx: int,
    rx: int,
    step: float = DEFAULT_STEP,
    r_max: Optional[Mapping[int, float]] = None,
) -> OptimizationResult:
    """Exhaustive search for the resistances maximizing the received SNR.

    Evaluates every combination on the per-converter lattice
    r_nom, r_nom + step, ..., r_max and returns the maximizer of
    min_n g_n; ties break toward the smallest resistances in bus order.
    ``r_max`` falls back to each converter's nameplate limit, then to
    :func:`default_r_max`.
    """
    table = _channel_table(grid, nominal, tx, rx, _r_axes(grid, nominal, step, r_max))
    return _argmax_on_table(table, pi, sigma_z, step)


def capacity_sweep(
    grid: ValidatedGrid,
    nominal: DroopState,
    pi_range: Iterable[float],
    sigma_z: float,
    tx: int,
    rx: int,
    step: float = DEFAULT_STEP,
    r_max: Optional[Mapping[int, float]] = None,
) -> List[SweepRow]:
    """Nominal and optimized capacity across a range of common budgets.

    The channel table over the resistance lattice does not depend on the
    budgets, so it is built once and re-scored per budget point.
    """
    pi_values = [float(p) for p in pi_range]
    if not pi_values:
        raise ValueError("pi_range must be nonempty")
    if any(b < a for a, b in zip(pi_values, pi_values[1:])):
        raise ValueError("pi_range must be ascending")
    table = _channel_table(grid, nominal, tx, rx, _r_axes(grid, nominal, step, r_max))
    rows = []
    for pi in pi_values:
        budgets = {bus: pi for bus in grid.vsc_buses}
        best = _argmax_on_table(table, budgets, sigma_z, step)
        snr_nom, _ = one_way_snr(grid, nominal, nominal, budgets, sigma_z, tx, rx)
        rows.append(
            SweepRow(
                pi=pi,
                snr_nominal=snr_nom,
                snr_opt=best.snr,
                capacity_nominal=capacity(snr_nom),
                capacity_opt=best.capacity,
                r_star=best.r_star,
            )
        )
    return rows


def default_r_max(
    grid: ValidatedGrid,
    nominal: DroopState,
    bus: int,
    margin: float = DEFAULT_R_MAX_MARGIN,
    cap: float = DEFAULT_R_MAX_CAP,
) -> float:
    """Largest usable virtual resistance for one converter.

    Bisects the viability boundary of ``bus`` with the other converters
    held at nominal, applies the safety margin, and caps the result at
    ``cap`` times nominal so the search box stays bounded even on grids
    that never lose viability.
    """
    r_nom = nominal.r[bus]
    hi = cap * r_nom
    if _viable(grid, nominal.with_r({bus: hi})):
        return hi
    lo = r_nom
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _viable(grid, nominal.with_r({bus: mid})):
            lo = mid
        else:
            hi = mid
    return max(r_nom, margin * lo)


def concavity_probe(
    grid: ValidatedGrid,
    nominal: DroopState,
    pi: Mapping[int, float],
    tx: int,
    rx: int,
    samples: int = 25,
    fd_step: float = 1e-3,
    rel_tol: float = 1e-6,
) -> ConcavityReport:
    """Check concavity of the gain terms at interior points of the region.

    The feasible region is a narrow band around the equal-increase
    diagonal: raising one resistance alone shifts load to the other
    converter and burns the budget within millohms, while raising both
    together largely cancels.  The probe therefore measures the band's
    diagonal extent by bisection, lattices a box of that size, keeps
    feasible points whose lattice neighbors are also feasible, and forms
    central-difference Hessians of each g_n there, flagging eigenvalues
    above ``rel_tol`` times the Hessian norm.  The gradient at the
    nominal corner uses central differences, which cancel the
    headroom's quadratic dip (the investment vanishes at nominal) and
    expose the first-order growth that pulls the optimum above nominal.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    _check_link(grid, pi, tx, rx)
    vsc = sorted(nominal.r)

    def g_at(point: Mapping[int, float]) -> Dict[int, float]:
        _, g = one_way_snr(grid, nominal.with_r(dict(point)), nominal, pi, 1.0, tx, rx)
        return g

    points = _band_interior(grid, nominal, pi, vsc, samples)

    violations = []
    max_rel = -np.inf
    for point in points:
        hessians = _fd_hessians(g_at, point, vsc, fd_step)
        for bus, hess in hessians.items():
            eig = np.linalg.eigvalsh(hess)
            scale = float(np.max(np.abs(eig)))
            rel = float(eig[-1] / scale) if scale > 0.0 else 0.0
            max_rel = max(max_rel, rel)
            if rel > rel_tol:
                violations.append((tuple(point[b] for b in vsc), bus, rel))

    grad = {}
    h = 1e-4
    for bus in sorted(pi):
        parts = []
        for axis in vsc:
            plus = g_at(nominal.with_r({axis: nominal.r[axis] + h}).r)
            minus = g_at(nominal.with_r({axis: nominal.r[axis] - h}).r)
            parts.append((plus[bus] - minus[bus]) / (2.0 * h))
        grad[bus] = tuple(parts)
    g0 = g_at(nominal.r)
    corner_ok = all(
        part >= -rel_tol * max(abs(g0[bus]), 1e-30)
        for bus, parts in grad.items()
        for part in parts
    )
    return ConcavityReport(
        points=tuple(tuple(p[b] for b in vsc) for p in points),
        max_rel_eig=float(max_rel),
        violations=tuple(violations),
        grad_nominal=grad,
        nominal_at_box_corner=corner_ok,
    )


# -- internals ----------------------------------------------------------------

def _check_link(grid: ValidatedGrid, pi: Mapping[int, float], tx: int, rx: int) -> None:
    if tx == rx:
        raise ValueError("transmitter and receiver must be distinct buses")
    for bus in (tx, rx):
        if not grid.has_vsc(bus):
            raise ValueError(f"bus {bus} hosts no converter")
    if not set(pi) <= set(grid.vsc_buses):
        raise ValueError("budgets must be keyed by converter buses")
    for bus, value in pi.items():
        if value < 0.0:
            raise ValueError(f"budget on bus {bus} must be nonnegative, got {value}")


def _r_axes(
    grid: ValidatedGrid,
    nominal: DroopState,
    step: float,
    r_max: Optional[Mapping[int, float]],
) -> Dict[int, np.ndarray]:
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    axes = {}
    for bus in sorted(nominal.r):
        lo = nominal.r[bus]
        if r_max is not None and bus in r_max:
            hi = r_max[bus]
        elif grid.vsc(bus).r_max is not None:
            hi = grid.vsc(bus).r_max
        else:
            hi = default_r_max(grid, nominal, bus)
        if hi < lo:
            raise EmptySearchSpace(f"bus {bus}: r_max {hi:.6g} < nominal {lo:.6g}")
        count = int(np.floor((hi - lo) / step + 1e-9)) + 1
        axes[bus] = lo + step * np.arange(count)
    return axes


@dataclass(frozen=True)
class _ChannelTable:
    """Budget-independent channel quantities on the resistance lattice."""

    vsc: Tuple[int, ...]
    r: Dict[int, np.ndarray]   # flattened lattice coordinates per converter
    feasible: np.ndarray       # (B,) viable operating point found
    h_rx: np.ndarray           # (B,) voltage gain receiver <- transmitter
    phi: np.ndarray            # (B, n_vsc) power gains d p_n / d x_tx
    dp: np.ndarray             # (B, n_vsc) static investment per converter [W]


def _channel_table(
    grid: ValidatedGrid,
    nominal: DroopState,
    tx: int,
    rx: int,
    axes: Dict[int, np.ndarray],
) -> _ChannelTable:
    vsc = sorted(axes)
    mesh = np.meshgrid(*(axes[bus] for bus in vsc), indexing="ij")
    r = {bus: m.reshape(-1) for bus, m in zip(vsc, mesh)}
    size = r[vsc[0]].size
    logger.info("channel table: %d lattice points", size)

    batch = solve_steady_state_many(grid, dict(nominal.x), r)
    v = batch.v

    y = np.zeros((size, grid.n))
    xr = np.zeros((size, grid.n))
    for bus in vsc:
        y[:, bus] = 1.0 / r[bus]
        xr[:, bus] = nominal.x[bus] / r[bus]
    degree = grid.g_line.sum(axis=1)
    r_bus = 1.0 / (grid.r_cr_inv + degree + y)

    with np.errstate(invalid="ignore", divide="ignore"):
        b = xr + v @ grid.g_line.T - grid.i_cc
        disc = b * b - 4.0 * grid.d_cp / r_bus
        kappa = np.where(grid.d_cp == 0.0, 1.0, 0.5 * (1.0 + b / np.sqrt(disc)))

        m = np.broadcast_to(np.diag(degree) - grid.g_line, (size, grid.n, grid.n)).copy()
        diag = np.arange(grid.n)
        m[:, diag, diag] = (degree + y + grid.r_cr_inv) / kappa
        rhs = np.zeros((size, grid.n, 1))
        rhs[:, tx, 0] = y[:, tx]
        feasible = batch.feasible & np.all(np.isfinite(kappa), axis=1)
        m[~feasible] = np.eye(grid.n)  # placeholder: keeps the batched solve regular
        h_col = np.linalg.solve(m, rhs)[:, :, 0]

        p_nom = solve_steady_state(grid, nominal).p
        phi = np.empty((size, len(vsc)))
        dp = np.empty((size, len(vsc)))
        for j, bus in enumerate(vsc):
            phi[:, j] = h_col[:, bus] * (nominal.x[bus] - 2.0 * v[:, bus]) * y[:, bus]
            if bus == tx:
                phi[:, j] += v[:, bus] * y[:, bus]
            dp[:, j] = (nominal.x[bus] - v[:, bus]) * v[:, bus] * y[:, bus] - p_nom[bus]
    return _ChannelTable(
        vsc=tuple(vsc), r=r, feasible=feasible, h_rx=h_col[:, rx], phi=phi, dp=dp
    )


def _score_table(
    table: _ChannelTable, pi: Mapping[int, float], sigma_z: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-lattice-point SNR and gain terms for one budget vector."""
    pi_vec = np.array([pi[bus] for bus in table.vsc])
    headroom = pi_vec**2 - table.dp**2
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (table.h_rx[:, None] / table.phi) ** 2 * headroom
        snr = np.min(g, axis=1) / sigma_z**2
    snr = np.where(np.any(headroom < 0.0, axis=1), 0.0, np.maximum(snr, 0.0))
    snr = np.where(table.feasible, snr, -np.inf)
    return snr, g


def _argmax_on_table(
    table: _ChannelTable, pi: Mapping[int, float], sigma_z: float, step: float
) -> OptimizationResult:
    if set(pi) != set(table.vsc):
        raise ValueError("budgets must cover every converter bus")
    snr, g = _score_table(table, pi, sigma_z)
    # flattened in C order over ascending axes: the first maximum is the
    # smallest-resistance tie-break in bus order
    idx = int(np.argmax(snr))
    if not np.isfinite(snr[idx]):
        raise NoRealRoot("no viable operating point anywhere on the search lattice")
    best_snr = float(snr[idx])
    return OptimizationResult(
        r_star={bus: float(table.r[bus][idx]) for bus in table.vsc},
        snr=best_snr,
        capacity=capacity(best_snr),
        g_values={bus: float(g[idx, j]) for j, bus in enumerate(table.vsc)},
        grid_step=step,
        evaluations=int(snr.size),
    )


def _viable(grid: ValidatedGrid, droop: DroopState) -> bool:
    try:
        state = solve_steady_state(grid, droop)
    except (NoRealRoot, NonConvergence):
        return False
    return not check_viability(grid, droop, state.v)


def _investment_jacobian(
    grid: ValidatedGrid, nominal: DroopState, vsc: List[int], h: float = 1e-5
) -> np.ndarray:
    """d(investment)/d(resistance) at nominal by central differences."""
    jac = np.zeros((len(vsc), len(vsc)))
    for j, axis in enumerate(vsc):
        plus = vr_power_investment(grid, nominal, nominal.with_r({axis: nominal.r[axis] + h}))
        minus = vr_power_investment(grid, nominal, nominal.with_r({axis: nominal.r[axis] - h}))
        for i, bus in enumerate(vsc):
            jac[i, j] = (plus[bus] - minus[bus]) / (2.0 * h)
    return jac


def _band_interior(
    grid: ValidatedGrid,
    nominal: DroopState,
    pi: Mapping[int, float],
    vsc: List[int],
    samples: int,
) -> List[Dict[int, float]]:
    """Feasible lattice points of the region with all lattice neighbors feasible.

    Raising one resistance alone moves investments at thousands of watts
    per ohm, so the region hugs the direction that the investment
    Jacobian maps closest to zero (equal-increase on a symmetric grid).
    The lattice is sized from the bisected extent along that direction
    and from the band halfwidth implied by the largest Jacobian gain.
    """
    dim = len(vsc)
    cap = np.array([default_r_max(grid, nominal, bus) - nominal.r[bus] for bus in vsc])
    jac = _investment_jacobian(grid, nominal, vsc)
    singulars = np.linalg.svd(jac, compute_uv=False)
    direction = np.linalg.svd(jac)[2][-1]
    if direction.sum() < 0.0:
        direction = -direction
    direction = np.where(np.abs(direction) < 1e-12, 0.0, direction)
    if np.any(direction < 0.0):  # band leaves the box; fall back to the diagonal
        direction = np.ones(dim) / math.sqrt(dim)

    def feasible_shift(t: float) -> bool:
        if np.any(t * direction > cap):
            return False
        droop = nominal.with_r(
            {bus: nominal.r[bus] + t * direction[i] for i, bus in enumerate(vsc)}
        )
        try:
            dp = vr_power_investment(grid, nominal, droop)
        except (NoRealRoot, NonConvergence):
            return False
        return all(dp[bus] ** 2 <= pi[bus] ** 2 for bus in pi)

    pushable = direction > 0.0
    hi = float(np.min(cap[pushable] / direction[pushable])) if np.any(pushable) else 0.0
    if hi <= 0.0:
        return []
    if feasible_shift(hi):
        t_max = hi
    else:
        lo = 0.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if feasible_shift(mid):
                lo = mid
            else:
                hi = mid
        t_max = lo
    if t_max <= 0.0:
        return []

    halfwidth = max(pi.values()) / singulars[0] if singulars[0] > 0.0 else t_max
    widths = np.minimum(1.2 * t_max * direction + 2.0 * halfwidth, cap)
    counts = [
        int(np.clip(math.ceil(w / (halfwidth / 2.5)) if halfwidth > 0.0 else 32, 32, 200))
        for w in widths
    ]
    axes = {
        bus: nominal.r[bus] + np.linspace(0.0, widths[i], counts[i])
        for i, bus in enumerate(vsc)
    }
    mesh = np.meshgrid(*(axes[bus] for bus in vsc), indexing="ij")
    r = {bus: m.reshape(-1) for bus, m in zip(vsc, mesh)}
    batch = solve_steady_state_many(grid, dict(nominal.x), r)
    p_nom = solve_steady_state(grid, nominal).p
    feas = batch.feasible.copy()
    with np.errstate(invalid="ignore"):
        for bus in vsc:
            v_bus = batch.v[:, bus]
            dp = (nominal.x[bus] - v_bus) * v_bus / r[bus] - p_nom[bus]
            feas &= np.nan_to_num(dp, nan=np.inf) ** 2 <= pi.get(bus, np.inf) ** 2
    feas = feas.reshape(tuple(counts))
    inner = feas.copy()
    for axis in range(dim):
        inner &= np.roll(feas, 1, axis) & np.roll(feas, -1, axis)
        edge = [slice(None)] * dim
        for end in (0, counts[axis] - 1):
            edge[axis] = end
            inner[tuple(edge)] = False
    flat = np.flatnonzero(inner.reshape(-1))
    if flat.size == 0:
        return []
    chosen = np.round(np.linspace(0, flat.size - 1, num=min(samples, flat.size))).astype(int)
    return [{bus: float(r[bus][flat[c]]) for bus in vsc} for c in chosen]


def _fd_hessians(
    g_at, point: Mapping[int, float], vsc: List[int], h: float
) -> Dict[int, np.ndarray]:
    """Central-difference Hessians of every gain term at one point."""
    dim = len(vsc)

    def shifted(offsets: Tuple[int, ...]) -> Dict[int, float]:
        return {bus: point[bus] + off * h for bus, off in zip(vsc, offsets)}

    center = g_at(point)
    buses = sorted(center)
    hess = {bus: np.zeros((dim, dim)) for bus in buses}
    for i in range(dim):
        e = tuple(1 if k == i else 0 for k in range(dim))
        plus = g_at(shifted(e))
        minus = g_at(shifted(tuple(-o for o in e)))
        for bus in buses:
            hess[bus][i, i] = (plus[bus] - 2.0 * center[bus] + minus[bus]) / h**2
        for j in range(i + 1, dim):
            pp = g_at(shifted(tuple(1 if k in (i, j) else 0 for k in range(dim))))
            pm = g_at(shifted(tuple(1 if k == i else -1 if k == j else 0 for k in range(dim))))
            mp = g_at(shifted(tuple(-1 if k == i else 1 if k == j else 0 for k in range(dim))))
            mm = g_at(shifted(tuple(-1 if k in (i, j) else 0 for k in range(dim))))
            for bus in buses:
                mixed = (pp[bus] - pm[bus] - mp[bus] + mm[bus]) / (4.0 * h**2)
                hess[bus][i, j] = hess[bus][j, i] = mixed
    return hess
