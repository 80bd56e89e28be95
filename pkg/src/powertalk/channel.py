"""Small-signal model of the grid around a solved operating point.

Linearizing the bus equations in the reference-voltage deviations gives
``dv = H @ dx``: the gain matrix H maps set-point deviations on converter
buses to voltage deviations on every bus.  The companion matrix Phi maps
the same inputs to converter supplied-power deviations and is what the
power budgets constrain.  With purely linear loads (all d_cp = 0) the
model is exact; constant-power loads enter through the per-bus kappa
correction on the Laplacian diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np

from .errors import InputOnLoadBus, NoRealRoot, SingularSystem
from .grid import LoadSpec, ValidatedGrid, VscSpec, network_matrices
from .steady_state import DroopState, SteadyState

__all__ = [
    "ChannelModel",
    "linearize",
    "power_coefficients",
    "single_bus_channel",
    "predict_outputs",
]


@dataclass(frozen=True)
class ChannelModel:
    """Linearized voltage and power response at one operating point.

    ``H[n, m]`` is the voltage gain dv_n/dx_m; columns for buses without
    a converter are zero.  ``Phi[n, m]`` is the supplied-power gain
    dp_n/dx_m; rows for buses without a converter are zero.
    """

    H: np.ndarray              # (n, n) voltage gains [V/V]
    Phi: np.ndarray            # (n, n) power gains [W/V]
    K: np.ndarray              # (n,) kappa corrections, >= 1
    operating_point: SteadyState
    droop: DroopState

    def vsc_buses(self) -> Tuple[int, ...]:
        return tuple(sorted(self.droop.r))


def linearize(grid: ValidatedGrid, droop: DroopState, state: SteadyState) -> ChannelModel:
    """Build the channel model at a solved operating point.

    The gain matrix solves (Psi_k + K^-1 (Y + Y_cr)) H = Y, where Psi_k
    is the line Laplacian with its diagonal divided by kappa, Y holds the
    virtual-resistance conductances and Y_cr the resistive-load
    conductances.  ``state`` must come from the same grid and droop
    configuration.
    """
    psi, _ = network_matrices(grid, droop)
    kappa = state.kappa
    y = droop.conductances(grid)
    m = psi.copy()
    diag = np.diag_indices(grid.n)
    m[diag] = (psi[diag] + y + grid.r_cr_inv) / kappa
    try:
        h = np.linalg.solve(m, np.diag(y))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - connected grids are regular
        raise SingularSystem(f"channel matrix solve failed: {exc}") from exc
    model = ChannelModel(H=h, Phi=np.zeros_like(h), K=kappa, operating_point=state, droop=droop)
    return replace(model, Phi=power_coefficients(model))


def power_coefficients(model: ChannelModel) -> np.ndarray:
    """Supplied-power gains from the voltage gains.

    For converter bus n, p_n = v_n (x_n - v_n) / r_n, so
    dp_n/dx_m = (H[n, m] (x_n - 2 v_n) + [m == n] v_n) / r_n evaluated at
    the operating point.  Rows for load-only buses are zero.
    """
    phi = np.zeros_like(model.H)
    v = model.operating_point.v
    for bus in model.vsc_buses():
        x = model.droop.x[bus]
        r = model.droop.r[bus]
        phi[bus, :] = model.H[bus, :] * (x - 2.0 * v[bus]) / r
        phi[bus, bus] += v[bus] / r
    return phi


def single_bus_channel(units: List[VscSpec], load: LoadSpec) -> Tuple[np.ndarray, float]:
    """Channel gains for converters sharing a single bus (lines neglected).

    All units see the same voltage, so the per-unit gain collapses to
    h_m = kappa * r_bus / r_m with a common kappa.  With no constant-power
    load kappa = 1 and the gains sum to less than one.
    """
    if not units:
        raise ValueError("at least one converter unit is required")
    r = np.array([unit.r_nom for unit in units])
    if np.any(r <= 0.0):
        raise ValueError("unit virtual resistances must be positive")
    g_cr = 0.0 if load.r_cr is None else 1.0 / load.r_cr
    r_bus = 1.0 / (g_cr + np.sum(1.0 / r))
    source = float(np.sum([unit.x_nom for unit in units] / r)) - load.i_cc
    if load.d_cp == 0.0:
        kappa = 1.0
    else:
        disc = source * source - 4.0 * load.d_cp / r_bus
        if disc <= 0.0:
            raise NoRealRoot(
                f"single-bus discriminant {disc:.3e} <= 0; constant-power load too large"
            )
        kappa = 0.5 * (1.0 + source / np.sqrt(disc))
    return kappa * r_bus / r, float(kappa)


def predict_outputs(
    model: ChannelModel,
    dx: np.ndarray,
    sigma_z: float,
    rng_seed: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted voltage deviations dv = H dx, clean and with observation noise.

    ``dx`` must be zero on buses without a converter.  Noise is i.i.d.
    zero-mean Gaussian with standard deviation ``sigma_z`` per bus; with
    ``sigma_z = 0`` the noisy output equals the clean one exactly.
    """
    dx = np.asarray(dx, dtype=float)
    n = model.H.shape[0]
    if dx.shape != (n,):
        raise ValueError(f"dx must have shape ({n},), got {dx.shape}")
    vsc = set(model.vsc_buses())
    offenders = [bus for bus in range(n) if bus not in vsc and dx[bus] != 0.0]
    if offenders:
        raise InputOnLoadBus(f"reference deviations set on load-only buses {offenders}")
    dv = model.H @ dx
    if sigma_z == 0.0:
        return dv, dv.copy()
    rng = np.random.default_rng(rng_seed)
    return dv, dv + sigma_z * rng.standard_normal(n)
