import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.optimize import brentq

from dampedeuler import (
    Grid,
    LagrangianState,
    ModelSpec,
    PressureNotSupported,
    QuantileMeasure,
    StepperConfig,
    StickyState,
    center_of_mass_oracle,
    cluster_force,
    force,
    run,
    sticky_run,
    sticky_step,
)
from dampedeuler.sticky import first_merge_time, kinetic_drop, single_cluster_time, uniform_state

from helpers import attractive, porous, repulsive, uniform_chi

FREE = ModelSpec(0.0, unsafe=True)


def pair_collision_time(x0=0.5, gamma=1.0):
    """Root of x(t) = 0 for x'' = -(x + 1/2) - gamma x', x(0) = x0, x'(0) = 0."""
    w = np.sqrt(1 - gamma**2 / 4)

    def x(t):
        k = np.exp(-gamma * t / 2) * (np.cos(w * t) + gamma / (2 * w) * np.sin(w * t))
        return -0.5 + (x0 + 0.5) * k

    return brentq(x, 0.0, np.pi / w)


def test_cluster_force_examples():
    grid = Grid(8)
    delta = StickyState.from_arrays(grid, [0.0], [0.0], [8])
    assert_array_equal(cluster_force(delta, attractive()), [0.0])
    x0 = 0.3
    pair = StickyState.from_arrays(grid, [-x0, x0], [0.0, 0.0], [4, 4])
    assert_allclose(cluster_force(pair, attractive()), [-(x0 + 0.5), x0 + 0.5], atol=1e-15)


@pytest.mark.parametrize("spec", [attractive(), repulsive()])
def test_singleton_clusters_feel_the_cell_force(spec):
    n = 16
    chi = np.sort(np.random.default_rng(2).normal(size=n))
    s = LagrangianState(QuantileMeasure(Grid(n), chi), np.zeros(n))
    st_ = StickyState.from_lagrangian(s)
    assert len(st_.partition) == n
    assert_allclose(cluster_force(st_, spec), force(s, spec), atol=1e-14)


def test_cluster_force_is_cell_average():
    # a cluster of cells [a, b) with V = x^2/2, W = |x| feels x_c + eta_a + eta_{b-1} - 1
    n = 10
    grid = Grid(n)
    eta = grid.nodes
    st_ = StickyState.from_arrays(grid, [-1.0, 0.2, 0.5], [0.0, 0.0, 0.0], [3, 5, 2])
    starts, stops = st_.partition.starts, st_.partition.stops
    expected = [x + eta[a] + eta[b - 1] - 1 for x, a, b in zip(st_.x, starts, stops)]
    assert_allclose(cluster_force(st_, attractive()), expected, atol=1e-15)


def test_pressure_rejected():
    st_ = uniform_state(4)
    with pytest.raises(PressureNotSupported):
        cluster_force(st_, porous())
    with pytest.raises(PressureNotSupported):
        sticky_step(st_, porous(), 0.01)


def test_symmetric_merge():
    grid = Grid(4)
    st_ = StickyState.from_arrays(grid, [-1e-3, 1e-3], [1.0, -1.0], [2, 2])
    out, events = sticky_step(st_, FREE, 0.01, return_events=True)
    assert len(out.partition) == 1
    assert_allclose(out.x, [0.0], atol=1e-15)
    assert_allclose(out.v, [0.0], atol=1e-15)
    assert_array_equal(out.sizes, [4])
    assert len(events) == 1
    assert out.t == pytest.approx(0.01)


def test_weighted_merge():
    grid = Grid(4)
    st_ = StickyState.from_arrays(grid, [-1e-3, 0.0], [2.0, 0.0], [1, 3])
    out = sticky_step(st_, FREE, 0.01)
    assert_allclose(out.v, [0.5])
    assert_allclose(out.x, [(0.019 + 0.0) / 4])


def test_kinetic_drop_formula():
    n = 4
    ev = np.array([[1.0, 3.0, 2.0, 0.0]])
    # (1/4)(3/4) 4 / (2 * 1) = 3/8
    assert kinetic_drop(ev, n) == pytest.approx(3 / 8)
    assert kinetic_drop(np.zeros((0, 4)), n) == 0.0


@pytest.mark.parametrize("dt", [1e-2, 1e-3])
def test_pair_collision_time(dt):
    grid = Grid(2)
    st0 = StickyState.from_arrays(grid, [-0.5, 0.5], [0.0, 0.0], [1, 1])
    trace = sticky_run(st0, attractive(1.0), StepperConfig(dt, max_time=3.0))
    tc = pair_collision_time()
    assert tc == pytest.approx(1.2940, abs=1e-4)
    assert abs(first_merge_time(trace) - tc) <= 2 * dt


def test_pair_trajectory_matches_closed_form():
    grid = Grid(2)
    st0 = StickyState.from_arrays(grid, [-0.5, 0.5], [0.0, 0.0], [1, 1])
    st_ = st0
    w = np.sqrt(3) / 2
    for _ in range(100):
        st_ = sticky_step(st_, attractive(1.0), 0.01)
    t = st_.t
    exact = -0.5 + np.exp(-t / 2) * (np.cos(w * t) + np.sin(w * t) / (2 * w))
    assert_allclose(st_.x, [-exact, exact], atol=1e-9)


def test_delta_start_gives_zero_trace():
    st0 = StickyState.from_arrays(Grid(8), [0.0], [0.0], [8])
    trace = sticky_run(st0, attractive(), StepperConfig(0.1, max_time=2.0))
    for name in ("W2", "K", "v2", "F", "H", "com", "com_v"):
        assert_array_equal(trace[name], 0.0)
    assert_array_equal(trace["clusters"], 1.0)
    assert len(trace.events) == 0


@pytest.fixture(scope="module")
def collapse():
    st0 = uniform_state(64)
    return st0, sticky_run(st0, attractive(1.0), StepperConfig(0.01, max_time=6.0))


def test_collapse_invariants(collapse):
    st0, trace = collapse
    counts = trace["clusters"]
    assert np.all(np.diff(counts) <= 0)
    assert counts[-1] == 1
    assert single_cluster_time(trace) is not None
    final = trace.meta["final_state"]
    assert int(final.sizes.sum()) == 64
    assert_allclose(final.partition.masses.sum(), 1.0, rtol=0, atol=0)
    ev = trace.events
    assert ev.shape[1] == 6
    assert_allclose(ev[:, 2], ev[:, 3], atol=1e-12)
    assert np.all(ev[:, 5] <= ev[:, 4] + 1e-15)
    assert trace["merges"].sum() == 63


def test_collapse_momentum_law(collapse):
    # internal forces cancel, so the center of mass is a damped unit oscillator even across merges
    st0, trace = collapse
    x, v = center_of_mass_oracle(float(np.mean(st0.x)), st0.momentum, 1.0, trace.t, c_V=1.0)
    assert np.max(np.abs(trace["com"] - x)) < 1e-10
    assert np.max(np.abs(trace["com_v"] - v)) < 1e-10


def test_collapse_energy_between_merges(collapse):
    _, trace = collapse
    res = trace["energy_residual"][:-1]
    merged = (trace["merges"][1:] > 0)
    quiet = ~merged
    assert np.max(np.abs(res[quiet])) < 1e-3
    # across merges H may only drop
    assert np.all(res[merged] <= 1e-3)


def test_half_derivative_of_second_moment(collapse):
    # d/dt |chi|^2 = 2 <chi, v> (K against the point mass at rest)
    _, trace = collapse
    t, w2, K = trace.t, trace["W2sq"], trace["K"]
    fd = np.diff(w2) / np.diff(t)
    mid = 0.5 * (K[1:] + K[:-1])
    quiet = trace["merges"][1:] == 0
    assert np.max(np.abs(fd - mid)[quiet]) < 1e-4


@pytest.mark.parametrize("spec", [attractive(1.0), repulsive(1.0)])
def test_agrees_with_smooth_solver_before_collisions(spec):
    n = 32
    chi0 = uniform_chi(n) + 0.1 * np.sin(np.pi * uniform_chi(n))
    s0 = LagrangianState(QuantileMeasure(Grid(n), chi0), np.zeros(n))
    cfg = StepperConfig(0.01, max_time=1.0)
    smooth = run(s0, spec, cfg, keep_states=True)
    sticky = sticky_run(StickyState.from_lagrangian(s0), spec, cfg)
    assert len(sticky.events) == 0
    final = sticky.meta["final_state"]
    assert_allclose(final.x, smooth.states[-1], atol=1e-12)
    assert_allclose(final.v, smooth.velocities[-1], atol=1e-12)


@given(st.integers(2, 20), st.floats(0.1, 3.0), st.floats(-1.0, 1.0))
def test_uniform_state(n, width, velocity):
    st_ = uniform_state(n, -width, width, velocity)
    assert len(st_.partition) == n
    assert_allclose(st_.x, width * uniform_chi(n), atol=1e-15)
    assert st_.momentum == pytest.approx(velocity)
    back = st_.to_lagrangian()
    assert_array_equal(back.chi, st_.x)
