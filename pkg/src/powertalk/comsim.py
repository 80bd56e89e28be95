"""Slot-based Monte-Carlo simulation of one-way signaling.

Each slot the transmitter deviates its reference voltage by +a or -a
with equal probability; the receiver observes its own bus voltage plus
Gaussian noise and applies maximum-likelihood detection against the two
known hypothesis means.  The channel is evaluated either through the
full nonlinear steady-state solver (two operating points, one per
symbol) or through the linearized gain matrix.

Randomness is counter-keyed: bit and noise streams are drawn per fixed-
size chunk from generators keyed by (seed, stream, chunk index), so any
parallel split over chunks reproduces the sequential run bit for bit.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Dict, Iterator, Mapping, Optional, Tuple

import numpy as np

from .errors import BudgetExceededWarning
from .channel import ChannelModel
from .grid import ValidatedGrid
from .steady_state import DroopState, nominal_droop, solve_steady_state

logger = logging.getLogger(__name__)

CHUNK_SLOTS = 1 << 16   # chunk size fixed by the reproducibility scheme
_BIT_STREAM = 0
_NOISE_STREAM = 1

__all__ = [
    "SimConfig",
    "SimReport",
    "ComplianceRow",
    "run_transmission",
    "measure_power_compliance",
    "chunk_bits",
    "chunk_noise",
]


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one Monte-Carlo transmission."""

    slots: int
    amplitude: float        # antipodal reference deviation [V]
    sigma_z: float          # observation noise std dev [V]
    mode: str               # "nonlinear" or "linearized"
    rng_seed: int
    tx: int
    rx: int
    slot_duration: float = 1e-3   # metadata only, for rate-per-second reporting [s]

    def validate(self, grid: ValidatedGrid) -> None:
        if self.slots < 1:
            raise ValueError(f"slots must be >= 1, got {self.slots}")
        if self.amplitude < 0.0:
            raise ValueError(f"amplitude must be nonnegative, got {self.amplitude}")
        if self.sigma_z < 0.0:
            raise ValueError(f"sigma_z must be nonnegative, got {self.sigma_z}")
        if self.mode not in ("nonlinear", "linearized"):
            raise ValueError(f"mode must be 'nonlinear' or 'linearized', got {self.mode!r}")
        if self.tx == self.rx:
            raise ValueError("transmitter and receiver must be distinct buses")
        for bus in (self.tx, self.rx):
            if not grid.has_vsc(bus):
                raise ValueError(f"bus {bus} hosts no converter")


@dataclass(frozen=True)
class SimReport:
    """Measured outcome of a transmission run."""

    ber: float
    ber_ci95: float             # binomial 95% half-width
    snr_empirical: float
    p_dev_mean_sq: Dict[int, float]  # per-converter E[(p - p_nom)^2] [W^2]
    slots_run: int


@dataclass(frozen=True)
class ComplianceRow:
    """Budget audit for one converter."""

    empirical: float   # measured mean-square power deviation [W^2]
    bound: float       # pi^2 [W^2]
    ok: bool


def chunk_bits(seed: int, chunk: int, size: int) -> np.ndarray:
    """Symbol bits (0/1) for one chunk, independent of other chunks."""
    return _chunk_rng(seed, _BIT_STREAM, chunk).integers(0, 2, size=size, dtype=np.int8)


def chunk_noise(seed: int, chunk: int, size: int) -> np.ndarray:
    """Unit-variance observation noise for one chunk."""
    return _chunk_rng(seed, _NOISE_STREAM, chunk).standard_normal(size)


def _chunk_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64((stream << 56) | chunk)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _chunks(slots: int) -> Iterator[Tuple[int, int]]:
    for chunk in range((slots + CHUNK_SLOTS - 1) // CHUNK_SLOTS):
        yield chunk, min(CHUNK_SLOTS, slots - chunk * CHUNK_SLOTS)


def _hypothesis_points(
    grid: ValidatedGrid,
    droop: DroopState,
    model: Optional[ChannelModel],
    cfg: SimConfig,
) -> Tuple[Dict[int, float], Dict[int, Dict[int, float]]]:
    """Receiver mean and per-converter power for each symbol.

    Returns ``(rx_mean, power)`` keyed by symbol +1/-1.  Nonlinear mode
    re-solves the steady state per symbol; linearized mode offsets the
    operating point through the gain matrices.
    """
    if cfg.mode == "nonlinear":
        rx_mean = {}
        power = {}
        for symbol in (+1, -1):
            shifted = droop.with_x({cfg.tx: droop.x[cfg.tx] + symbol * cfg.amplitude})
            state = solve_steady_state(grid, shifted)
            rx_mean[symbol] = float(state.v[cfg.rx])
            power[symbol] = dict(state.p)
        return rx_mean, power
    if model is None:
        raise ValueError("linearized mode requires a channel model")
    base = model.operating_point
    rx_mean = {}
    power = {}
    for symbol in (+1, -1):
        dx = symbol * cfg.amplitude
        rx_mean[symbol] = float(base.v[cfg.rx] + model.H[cfg.rx, cfg.tx] * dx)
        power[symbol] = {
            bus: base.p[bus] + float(model.Phi[bus, cfg.tx]) * dx for bus in base.p
        }
    return rx_mean, power


def run_transmission(
    grid: ValidatedGrid,
    droop: DroopState,
    model: Optional[ChannelModel],
    cfg: SimConfig,
) -> SimReport:
    """Simulate a transmission and measure error rate and power deviations.

    Detection projects each observation onto the known hypothesis means
    and takes the sign against their midpoint.  The empirical SNR is the
    squared half-separation of the per-symbol sample means over the
    pooled within-symbol variance.  Power deviations are measured about
    nominal (nameplate) operation; converters with a nameplate budget
    trigger :class:`BudgetExceededWarning` when exceeded beyond 5%.
    """
    cfg.validate(grid)
    droop.validate(grid)
    rx_mean, power = _hypothesis_points(grid, droop, model, cfg)
    p_nom = solve_steady_state(grid, nominal_droop(grid)).p
    dp_sq = {
        symbol: {bus: (power[symbol][bus] - p_nom[bus]) ** 2 for bus in p_nom}
        for symbol in (+1, -1)
    }
    midpoint = 0.5 * (rx_mean[+1] + rx_mean[-1])
    orientation = 1.0 if rx_mean[+1] >= rx_mean[-1] else -1.0

    errors = 0
    ones = 0
    stats = {symbol: (0, 0.0, 0.0) for symbol in (+1, -1)}  # count, sum, sumsq
    for chunk, size in _chunks(cfg.slots):
        bits = chunk_bits(cfg.rng_seed, chunk, size)
        symbols = 2 * bits.astype(np.float64) - 1.0
        means = np.where(bits == 1, rx_mean[+1], rx_mean[-1])
        obs = means + cfg.sigma_z * chunk_noise(cfg.rng_seed, chunk, size)
        decided = np.where(orientation * (obs - midpoint) >= 0.0, 1.0, -1.0)
        errors += int(np.sum(decided != symbols))
        ones += int(np.sum(bits))
        for symbol in (+1, -1):
            sel = obs[bits == (symbol + 1) // 2]
            count, total, sumsq = stats[symbol]
            stats[symbol] = (count + sel.size, total + sel.sum(), sumsq + (sel**2).sum())

    ber = errors / cfg.slots
    ci = 1.96 * np.sqrt(ber * (1.0 - ber) / cfg.slots)
    snr_emp = _empirical_snr(stats)
    p_dev = {}
    for bus in p_nom:
        p_dev[bus] = (ones * dp_sq[+1][bus] + (cfg.slots - ones) * dp_sq[-1][bus]) / cfg.slots
        budget = grid.vsc(bus).pi_budget
        if budget is not None and p_dev[bus] > 1.05 * budget**2:
            warnings.warn(
                f"bus {bus}: mean-square power deviation {p_dev[bus]:.6g} W^2 "
                f"exceeds budget {budget**2:.6g} W^2 by more than 5%",
                BudgetExceededWarning,
                stacklevel=2,
            )
    logger.debug("run_transmission: %d slots, ber=%.3e", cfg.slots, ber)
    return SimReport(
        ber=float(ber),
        ber_ci95=float(ci),
        snr_empirical=snr_emp,
        p_dev_mean_sq=p_dev,
        slots_run=cfg.slots,
    )


def _empirical_snr(stats: Mapping[int, Tuple[int, float, float]]) -> float:
    counts = {s: stats[s][0] for s in (+1, -1)}
    if min(counts.values()) == 0:
        return float("nan")
    means = {s: stats[s][1] / counts[s] for s in (+1, -1)}
    within = sum(stats[s][2] - counts[s] * means[s] ** 2 for s in (+1, -1))
    dof = sum(counts.values()) - 2
    if dof <= 0:
        return float("nan")
    variance = within / dof
    signal = 0.5 * (means[+1] - means[-1])
    if variance <= 0.0:
        return float("inf")
    return float(signal**2 / variance)


def measure_power_compliance(
    grid: ValidatedGrid,
    droop: DroopState,
    cfg: SimConfig,
    pi: Mapping[int, float],
    slack: float = 0.05,
) -> Dict[int, ComplianceRow]:
    """Audit measured power deviations against each converter's budget.

    Intended to run with the amplitude set from the variance allocation
    (a^2 equal to the transmitter's allocated variance); the ``slack``
    fraction absorbs linearization error in the allocation.
    """
    if cfg.mode != "nonlinear":
        raise ValueError("compliance audits run in nonlinear mode")
    cfg.validate(grid)
    droop.validate(grid)
    _, power = _hypothesis_points(grid, droop, None, cfg)
    p_nom = solve_steady_state(grid, nominal_droop(grid)).p
    ones = 0
    for chunk, size in _chunks(cfg.slots):
        ones += int(np.sum(chunk_bits(cfg.rng_seed, chunk, size)))
    rows = {}
    for bus in sorted(pi):
        dp_plus = power[+1][bus] - p_nom[bus]
        dp_minus = power[-1][bus] - p_nom[bus]
        empirical = (ones * dp_plus**2 + (cfg.slots - ones) * dp_minus**2) / cfg.slots
        bound = pi[bus] ** 2
        rows[bus] = ComplianceRow(
            empirical=float(empirical), bound=float(bound), ok=empirical <= (1.0 + slack) * bound
        )
    return rows
