import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from composite_membrane.eigensolver import smallest_eigenpair
from composite_membrane.discretization import assemble
from composite_membrane.geometry import DomainSpec, measure, rasterize
from composite_membrane.optimizer import (
    Configuration,
    DegenerateAreaError,
    boundary_layer_init,
    find_alpha_bar,
    initial_configuration,
    multistart,
    optimize,
    radial_init,
    radial_projection,
    random_init,
    select_sublevel,
)


def row(n):
    # n cells in a line, spacing 1
    return rasterize(DomainSpec.rectangle(n + 1, 2), 1.0)


def test_select_sublevel_examples():
    d = row(3)
    c = select_sublevel(np.array([3.0, 1.0, 2.0]), 1.0, d)
    assert c.cells.tolist() == [1] and c.t == 1.0
    d4 = row(4)
    c = select_sublevel(np.full(4, 5.0), 2.0, d4)
    assert c.cells.tolist() == [0, 1] and c.t == 5.0


@pytest.mark.parametrize("A", [0.0, 4.0, 0.2, 3.8])
def test_select_sublevel_degenerate(A):
    with pytest.raises(DegenerateAreaError, match="degenerate area fraction"):
        select_sublevel(np.arange(4.0), A, row(4))


@settings(max_examples=60, deadline=None)
@given(vals=st.lists(st.integers(0, 5), min_size=6, max_size=6), k=st.integers(1, 5),
       c=st.floats(1e-3, 1e3))
def test_select_sublevel_scale_invariant(vals, k, c):
    d = row(6)
    u = np.array(vals, dtype=float)
    a, b = select_sublevel(u, float(k), d), select_sublevel(c * u, float(k), d)
    assert a == b
    assert np.all(u[a.cells] <= a.t)
    assert np.all(np.isin(np.flatnonzero(u < a.t), a.cells))
    assert abs(a.measure - k) <= 0.5


def test_configuration_rejects_exterior():
    d = row(4)
    with pytest.raises(ValueError):
        Configuration.from_cells(d, [0, 4])


def test_brute_force_equivalence():
    d = rasterize(DomainSpec.rectangle(4, 5), 1.0)
    assert (d.ny - 2, d.nx - 2) == (4, 3)
    res = multistart(d, 50.0, 4.0, n_restarts=8, seed=0)
    assert abs(res.Lambda - oracles.BLOCK_3x4_ALPHA50_K4) < 1e-8
    assert res.converged


@pytest.mark.parametrize("k", [1, 3, 5])
@pytest.mark.parametrize("alpha", [2.0, 20.0])
def test_small_grid_against_brute_force(k, alpha):
    d = rasterize(DomainSpec.rectangle(4, 4), 1.0)
    best, _ = oracles.brute_force_Lambda(oracles.dense_laplacian(d.interior, 1.0), alpha, k)
    res = multistart(d, alpha, float(k), n_restarts=8, seed=3)
    assert abs(res.Lambda - best) < 1e-8


_disk = rasterize(DomainSpec.disk(1), 1 / 32)


@pytest.mark.parametrize("init", ["boundary", "psi", "random"])
def test_history_monotone_and_fixed_point(init):
    A = 0.5 * measure(_disk)
    cfg = {"boundary": lambda: boundary_layer_init(_disk, A),
           "psi": lambda: initial_configuration(_disk, A, 1, 0),
           "random": lambda: random_init(_disk, A, 0, 5)}[init]()
    res = optimize(_disk, 10.0, A, cfg)
    assert np.all(np.diff(res.history) <= 1e-10)
    assert res.converged and not res.cycled
    eig = smallest_eigenpair(assemble(_disk, res.config.cells, 10.0))
    assert select_sublevel(eig.u, A, _disk) == res.config
    assert res.Lambda <= smallest_eigenpair(assemble(_disk)).lam + 10.0


def test_boundary_layer_contained():
    A = 0.5 * measure(_disk)
    res = multistart(_disk, 10.0, A, n_restarts=3)
    assert np.all(np.isin(_disk.boundary_cells, res.config.cells))


def test_single_restart_reproduces_optimize():
    A = 0.4 * measure(_disk)
    a = multistart(_disk, 5.0, A, n_restarts=1)
    b = optimize(_disk, 5.0, A, boundary_layer_init(_disk, A))
    assert a.Lambda == b.Lambda and a.config == b.config and a.history == b.history


def test_multistart_deterministic():
    A = 0.5 * measure(_disk)
    a = multistart(_disk, 10.0, A, n_restarts=4, seed=11)
    b = multistart(_disk, 10.0, A, n_restarts=4, seed=11)
    assert a.Lambda == b.Lambda and a.u.tobytes() == b.u.tobytes() and a.restart_id == b.restart_id


def test_random_streams_independent_of_order():
    A = 0.5 * measure(_disk)
    a = random_init(_disk, A, 7, 4)
    random_init(_disk, A, 7, 2)
    assert a == random_init(_disk, A, 7, 4)
    assert a != random_init(_disk, A, 8, 4)


def test_alpha_zero_short_circuit():
    A = 0.5 * measure(_disk)
    res = optimize(_disk, 0.0, A, boundary_layer_init(_disk, A))
    assert res.Lambda == smallest_eigenpair(assemble(_disk)).lam
    assert res.converged


def test_non_convergence_reported():
    A = 0.5 * measure(_disk)
    res = optimize(_disk, 10.0, A, random_init(_disk, A, 0, 3), max_outer=1)
    assert not res.converged
    assert len(res.history) >= 1


def test_symmetric_fixed_point_via_projection():
    d = rasterize(DomainSpec.annulus(2), 1 / 8)
    A = 0.5 * measure(d)
    res = optimize(d, 10.0, A, radial_init(d, A, 2, 3), project=radial_projection(d))
    r = np.hypot(*d.centers.T)
    inD = res.config.mask(d.n_cells)
    # D^c is a radial band: every cell strictly inside its radius range is in it
    lo, hi = r[~inD].min(), r[~inD].max()
    assert np.all(~inD[(r > lo + d.h) & (r < hi - d.h)])


def test_alpha_bar_brute_force():
    d = rasterize(DomainSpec.rectangle(4, 4), 1.0)
    ab = find_alpha_bar(d, 3.0, tol=1e-9)
    assert abs(ab - oracles.BLOCK_3x3_K3_ALPHA_BAR) < 1e-6


def test_alpha_bar_left_endpoint():
    seen = []

    def lam(a):
        seen.append(a)
        return 2.0 + 0.5 * a

    ab = find_alpha_bar(row(4), 2.0, tol=1e-10, Lambda=lam)
    assert seen[0] == 0.0
    assert abs(ab - 4.0) < 1e-9


def test_alpha_bar_no_bracket():
    with pytest.raises(RuntimeError):
        find_alpha_bar(row(4), 2.0, Lambda=lambda a: 1.0 + a, max_doublings=5)
