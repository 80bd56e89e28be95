import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powertalk import (
    Bus,
    DisconnectedGraph,
    DuplicateLine,
    GridSpec,
    InvalidGridSpec,
    LineSpec,
    LoadSpec,
    NoConverter,
    NonpositiveResistance,
    VscSpec,
    network_matrices,
    nominal_droop,
    validate_grid,
)


def star(d_cp=2500.0):
    return GridSpec(
        buses=(
            Bus(0, LoadSpec(), VscSpec(x_nom=400.0, r_nom=0.39)),
            Bus(1, LoadSpec(), VscSpec(x_nom=400.0, r_nom=0.39)),
            Bus(2, LoadSpec(r_cr=50.0, d_cp=d_cp)),
        ),
        lines=(
            LineSpec.from_length(0, 2, rho=0.641, length_km=0.3),
            LineSpec.from_length(1, 2, rho=0.641, length_km=1.0),
        ),
    )


def test_line_from_length_multiplies_out():
    line = LineSpec.from_length(0, 2, rho=0.641, length_km=0.3)
    assert line.r_line == pytest.approx(0.1923)


def test_validate_accepts_the_star():
    grid = validate_grid(star())
    assert grid.n == 3
    assert grid.vsc_buses == (0, 1)
    assert grid.has_vsc(0) and not grid.has_vsc(2)
    assert grid.neighbors(2) == (0, 1)
    assert grid.r_cr_inv[2] == pytest.approx(0.02)
    assert grid.d_cp[2] == 2500.0


def test_bus_ids_must_be_dense_and_ordered():
    spec = GridSpec(
        buses=(
            Bus(0, LoadSpec(), VscSpec(400.0, 0.39)),
            Bus(2, LoadSpec(r_cr=50.0)),
        ),
        lines=(LineSpec(0, 2, 0.19),),
    )
    with pytest.raises(InvalidGridSpec):
        validate_grid(spec)


def test_line_endpoints_must_exist():
    spec = GridSpec(
        buses=(Bus(0, LoadSpec(), VscSpec(400.0, 0.39)), Bus(1, LoadSpec(r_cr=50.0))),
        lines=(LineSpec(0, 5, 0.19),),
    )
    with pytest.raises(InvalidGridSpec):
        validate_grid(spec)


def test_self_loop_rejected():
    spec = GridSpec(
        buses=(Bus(0, LoadSpec(), VscSpec(400.0, 0.39)), Bus(1, LoadSpec(r_cr=50.0))),
        lines=(LineSpec(1, 1, 0.19),),
    )
    with pytest.raises(InvalidGridSpec):
        validate_grid(spec)


def test_duplicate_line_rejected():
    spec = GridSpec(
        buses=(Bus(0, LoadSpec(), VscSpec(400.0, 0.39)), Bus(1, LoadSpec(r_cr=50.0))),
        lines=(LineSpec(0, 1, 0.19), LineSpec(1, 0, 0.25)),
    )
    with pytest.raises(DuplicateLine):
        validate_grid(spec)


def test_nonpositive_line_resistance_rejected():
    spec = GridSpec(
        buses=(Bus(0, LoadSpec(), VscSpec(400.0, 0.39)), Bus(1, LoadSpec(r_cr=50.0))),
        lines=(LineSpec(0, 1, 0.0),),
    )
    with pytest.raises(NonpositiveResistance):
        validate_grid(spec)


def test_nonpositive_droop_resistance_rejected():
    spec = GridSpec(
        buses=(Bus(0, LoadSpec(), VscSpec(400.0, -0.1)), Bus(1, LoadSpec(r_cr=50.0))),
        lines=(LineSpec(0, 1, 0.19),),
    )
    with pytest.raises(NonpositiveResistance):
        validate_grid(spec)


def test_disconnected_grid_rejected():
    spec = GridSpec(
        buses=(
            Bus(0, LoadSpec(), VscSpec(400.0, 0.39)),
            Bus(1, LoadSpec(r_cr=50.0)),
            Bus(2, LoadSpec(r_cr=50.0)),
        ),
        lines=(LineSpec(0, 1, 0.19),),
    )
    with pytest.raises(DisconnectedGraph):
        validate_grid(spec)


def test_grid_without_converters_rejected():
    spec = GridSpec(
        buses=(Bus(0, LoadSpec(r_cr=50.0)), Bus(1, LoadSpec(r_cr=20.0))),
        lines=(LineSpec(0, 1, 0.19),),
    )
    with pytest.raises(NoConverter):
        validate_grid(spec)


def test_negative_load_fields_rejected():
    for load in (LoadSpec(r_cr=-1.0), LoadSpec(d_cp=-5.0)):
        spec = GridSpec(
            buses=(Bus(0, LoadSpec(), VscSpec(400.0, 0.39)), Bus(1, load)),
            lines=(LineSpec(0, 1, 0.19),),
        )
        with pytest.raises(InvalidGridSpec):
            validate_grid(spec)


def test_single_bus_grid_is_valid():
    grid = validate_grid(
        GridSpec(buses=(Bus(0, LoadSpec(d_cp=100.0), VscSpec(400.0, 0.39)),), lines=())
    )
    assert grid.n == 1 and grid.vsc_buses == (0,)


def test_network_matrices_star_values(grid, nominal):
    psi, r_bus = network_matrices(grid, nominal)
    g_ac = 1.0 / 0.1923
    g_bc = 1.0 / 0.641
    assert psi[0, 0] == pytest.approx(g_ac)
    assert psi[1, 1] == pytest.approx(g_bc)
    assert psi[2, 2] == pytest.approx(g_ac + g_bc)
    assert psi[0, 2] == pytest.approx(-g_ac)
    assert psi[0, 1] == 0.0
    # Laplacian rows sum to zero
    assert np.allclose(psi.sum(axis=1), 0.0, atol=1e-12)
    assert r_bus[0] == pytest.approx(1.0 / (1.0 / 0.39 + g_ac))
    assert r_bus[2] == pytest.approx(1.0 / (0.02 + g_ac + g_bc))


def test_vsc_lookup(grid):
    assert grid.vsc(0).x_nom == 400.0
    with pytest.raises(InvalidGridSpec):
        grid.vsc(2)


@given(
    n_extra=st.integers(min_value=0, max_value=5),
    r_lines=st.lists(st.floats(min_value=0.01, max_value=5.0), min_size=6, max_size=6),
)
def test_chain_grids_always_validate(n_extra, r_lines):
    # converter head followed by a chain of resistive loads stays connected
    buses = [Bus(0, LoadSpec(), VscSpec(400.0, 0.5))]
    lines = []
    for k in range(n_extra):
        buses.append(Bus(k + 1, LoadSpec(r_cr=30.0)))
        lines.append(LineSpec(k, k + 1, r_lines[k]))
    grid = validate_grid(GridSpec(buses=tuple(buses), lines=tuple(lines)))
    assert grid.n == n_extra + 1
    droop = nominal_droop(grid)
    psi, r_bus = network_matrices(grid, droop)
    assert np.all(r_bus > 0.0)
    assert np.allclose(psi, psi.T)
