import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from dampedeuler import (
    DegenerateDensity,
    Grid,
    Inadmissible,
    LagrangianState,
    ModelSpec,
    Potential,
    QuantileMeasure,
    check_H1,
    force,
    free_energy,
    jv_jw,
    lyapunov_G,
    lyapunov_weights,
    project,
    total_entropy,
)
from dampedeuler.measure import clusters, wasserstein2_squared
from dampedeuler.model import (
    LyapunovWeights,
    equivalence_constants,
    force_array,
    free_energy_array,
    pressure_monotonicity,
    stiffness_bound,
)

from helpers import (
    LOGCOSH_W,
    QUARTIC_V,
    SPEC_FAMILIES,
    attractive,
    measure_pair,
    monotone,
    porous,
    repulsive,
    uniform_chi,
)

def state(chi, v=None):
    chi = np.asarray(chi, dtype=float)
    return LagrangianState(QuantileMeasure(Grid(chi.size), chi), np.zeros(chi.size) if v is None else v)


def direct_jw(chi, zeta, W):
    """The doubled mass-variable sum, evaluated pair by pair."""
    a = zeta[:, None] - zeta[None, :]
    b = chi[:, None] - chi[None, :]
    return float(np.sum((a - b) * (W.derivative(a) - W.derivative(b)))) / (2 * chi.size**2)


@pytest.mark.parametrize("m, d, expected", [(2, 1, True), (1, 3, True), (0.5, 3, False), (0.5, 1, True)])
def test_check_H1(m, d, expected):
    assert check_H1(m, d) is expected


def test_spec_admissibility():
    with pytest.raises(Inadmissible):
        ModelSpec(1.0, interaction=Potential.newtonian(1.0))
    with pytest.raises(Inadmissible):
        ModelSpec(1.0, confinement=Potential.quadratic(1.0), interaction=Potential.quadratic(-1.0))
    with pytest.raises(Inadmissible):
        ModelSpec(0.0, confinement=Potential.quadratic(1.0))
    spec = ModelSpec(0.0, interaction=Potential.newtonian(1.0), unsafe=True)
    assert not spec.admissible
    assert repulsive().c_ell == 1.0
    assert SPEC_FAMILIES["quadratic_W_repulsive"].c_ell == 1.5
    assert SPEC_FAMILIES["no_confinement"].c_ell == 1.0
    with pytest.raises(ValueError):
        ModelSpec(1.0, confinement=Potential.newtonian(1.0))


def test_potentials_are_even():
    x = np.linspace(-3, 3, 13)
    for W in (Potential.newtonian(-1.0), Potential.quadratic(2.0), LOGCOSH_W):
        assert_allclose(W.value(x), W.value(-x))
        assert_allclose(W.derivative(x), -W.derivative(-x))
    assert Potential.newtonian(1.0).derivative(np.array([0.0]))[0] == 0.0


def test_free_energy_examples():
    assert free_energy(state(np.zeros(8)), attractive()) == 0.0
    for n in (64, 256):
        chi = uniform_chi(n)
        # exact discrete values under the midpoint rule
        assert_allclose(free_energy(state(chi), repulsive()), -(1 - 1 / n**2) / 6, rtol=1e-13)
        expected = 0.5 * (1 / 3 - 1 / (3 * n * n)) + (n - 1) / (2 * n)
        assert_allclose(free_energy(state(chi), porous()), expected, rtol=1e-13)
    n = 4096
    assert abs(free_energy(state(uniform_chi(n)), repulsive()) + 1 / 6) < 1e-7
    assert abs(free_energy(state(uniform_chi(n)), porous()) - 2 / 3) < 1e-3


@pytest.mark.parametrize("name", ["repulsive", "attractive", "quadratic_W_repulsive", "logcosh_W"])
def test_interaction_energy_matches_double_sum(name):
    spec = SPEC_FAMILIES[name]
    chi = np.sort(np.random.default_rng(3).normal(size=40))
    W = spec.interaction
    direct = float(np.sum(W.value(chi[:, None] - chi[None, :]))) / (2 * chi.size**2)
    direct += float(np.mean(spec.confinement.value(chi)))
    assert_allclose(free_energy(state(chi), spec), direct, rtol=1e-12)


def test_free_energy_degenerate():
    with pytest.raises(DegenerateDensity):
        free_energy(state([0.0, 0.0, 1.0]), porous())


def test_isothermal_internal_energy_is_log_form():
    spec = ModelSpec(1.0, pressure_exponent=1.0, confinement=Potential.quadratic(1.0))
    chi = np.array([0.0, 0.5, 2.0])
    expected = -(np.log(3 * 0.5) + np.log(3 * 1.5)) / 3 + np.mean(chi**2) / 2
    assert_allclose(free_energy(state(chi), spec), expected)


def test_total_entropy():
    assert total_entropy(state(np.zeros(4)), attractive()) == 0.0
    chi = uniform_chi(32)
    s = state(chi, np.full(32, 0.7))
    assert_allclose(total_entropy(s, repulsive()), free_energy(s, repulsive()) + 0.245, rtol=1e-14)


def test_force_examples():
    n = 128
    chi = uniform_chi(n)
    assert np.max(np.abs(force(state(chi), repulsive()))) < 1e-15
    eta = Grid(n).nodes
    rng = np.random.default_rng(0)
    chi = np.sort(rng.normal(size=n))
    assert_allclose(force(state(chi), attractive()), chi + 2 * eta - 1, atol=1e-14)


def test_force_at_point_mass():
    n = 16
    eta = Grid(n).nodes
    s = state(np.zeros(n))
    # principal value: every cell already feels the cluster average
    assert_array_equal(force(s, attractive()), np.zeros(n))
    per_cell = force(s, attractive(), ties="rank")
    assert_allclose(per_cell, 2 * eta - 1, atol=1e-15)
    p = clusters(s.measure, 0.0)
    assert np.max(np.abs(project(p, per_cell))) < 1e-15
    with pytest.raises(ValueError):
        force(s, attractive(), ties="other")


def test_pressure_force_is_vacuum_bounded():
    n = 8
    chi = uniform_chi(n)
    f = force(state(chi), ModelSpec(1.0, pressure_exponent=2.0, confinement=Potential.quadratic(1.0)))
    # faces all carry P = (n * 2/n)^-2 = 1/4; only the edge cells feel a net
    # push, outward since the acceleration is -F
    expected = chi.copy()
    expected[0] += n * 0.25
    expected[-1] -= n * 0.25
    assert_allclose(f, expected, atol=1e-13)


@pytest.mark.parametrize("name", sorted(SPEC_FAMILIES))
def test_force_is_energy_gradient(name):
    spec = SPEC_FAMILIES[name]
    n = 12
    rng = np.random.default_rng(7)
    chi = np.sort(rng.normal(size=n)) + 0.2 * np.arange(n)
    f = force_array(chi, spec)
    fd = np.empty(n)
    h = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd[i] = n * (free_energy_array(chi + e, spec) - free_energy_array(chi - e, spec)) / (2 * h)
    assert_allclose(f, fd, atol=1e-6 * (1 + np.max(np.abs(f))))


def test_stiffness_bound_dominates_jacobian():
    n = 16
    chi = np.sort(np.random.default_rng(1).normal(size=n)) + np.arange(n) * 0.1
    spec = SPEC_FAMILIES["quadratic_W_attractive"]
    spec = ModelSpec(1.0, pressure_exponent=2.0, confinement=spec.confinement, interaction=spec.interaction)
    h = 1e-7
    J = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        J[:, i] = (force_array(chi + e, spec) - force_array(chi - e, spec)) / (2 * h)
    assert np.max(np.abs(np.linalg.eigvals(J))) <= stiffness_bound(chi, spec) * (1 + 1e-6)


@pytest.mark.parametrize(
    "spec, scenario, alpha, beta, q",
    [
        (repulsive(1.0), "confinement", 1.0, 2.0, (3 + np.sqrt(5)) / 2),
        (porous(1.0), "toy_center_of_mass", 3.0, 2.0, (5 + np.sqrt(5)) / 2),
        (repulsive(2.0), "smooth_1d_repulsive", 2.0, 1.0, (4 + np.sqrt(8)) / 2),
        (ModelSpec(2.0, interaction=Potential.quadratic(1.0)), "no_confinement", 2.0, 1.0, None),
    ],
)
def test_lyapunov_weights(spec, scenario, alpha, beta, q):
    w = lyapunov_weights(spec, scenario)
    assert_allclose((w.alpha, w.beta), (alpha, beta), rtol=1e-15)
    assert w.p <= w.q
    assert w.form_alpha * w.beta > 1
    if q is not None:
        assert_allclose(w.q, q, rtol=1e-14)
    lam = np.linalg.eigvalsh([[w.form_alpha, 1.0], [1.0, w.beta]])
    assert_allclose((w.p, w.q), lam, rtol=1e-12)


def test_repulsive_form_weights():
    w = lyapunov_weights(repulsive(2.0), "smooth_1d_repulsive")
    assert (w.form_alpha, w.beta) == (3.0, 1.0)


@pytest.mark.parametrize(
    "spec, scenario",
    [
        (repulsive(), "no_confinement"),
        (ModelSpec(1.0, interaction=Potential.quadratic(1.0)), "confinement"),
        (repulsive(), "toy_center_of_mass"),
        (attractive(), "smooth_1d_repulsive"),
    ],
)
def test_lyapunov_weights_inadmissible(spec, scenario):
    with pytest.raises(Inadmissible):
        lyapunov_weights(spec, scenario)


def test_weights_validation():
    with pytest.raises(ValueError):
        LyapunovWeights.from_form(0.5, 1.0)
    with pytest.raises(ValueError):
        lyapunov_weights(repulsive(), "bogus")


def test_lyapunov_G_examples():
    n = 64
    spec = repulsive(1.0)
    w = lyapunov_weights(spec, "smooth_1d_repulsive")
    ref = QuantileMeasure(Grid(n), uniform_chi(n))
    assert lyapunov_G(LagrangianState.at_rest(ref), ref, None, spec, w) == (0.0, 0.0, 0.0)
    c = 0.3
    e, j, g = lyapunov_G(LagrangianState(ref, np.full(n, c)), ref, np.zeros(n), spec, w)
    assert_allclose(e, c * c, rtol=1e-14)
    assert_allclose(j, w.beta * c * c, rtol=1e-14)
    # 2 beta (H - H_inf) = beta c^2: only the kinetic part differs
    assert_allclose(g, w.beta * c * c, rtol=1e-12)


@given(measure_pair(strict=True), st.data())
def test_lyapunov_sandwich(pair, data):
    a, b = pair
    n = a.n
    v = np.asarray(data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n)))
    ref_v = np.full(n, data.draw(st.floats(-1, 1)))
    for spec, scen in ((repulsive(0.5), "confinement"), (porous(2.0), "toy_center_of_mass"),
                       (SPEC_FAMILIES["no_confinement"], "no_confinement")):
        w = lyapunov_weights(spec, scen)
        e, j, _ = lyapunov_G(LagrangianState(a, v), b, ref_v, spec, w)
        tol = 1e-12 * (abs(e) * w.q + 1e-300)
        assert w.p * e <= j + tol
        assert j <= w.q * e + tol


def test_jv_jw_identities():
    rng = np.random.default_rng(11)
    n = 48
    chi = np.sort(rng.normal(size=n))
    zeta = np.sort(rng.normal(1.0, 2.0, size=n))
    assert jv_jw(state(chi), state(chi).measure, attractive()) == (0.0, 0.0)
    jv, _ = jv_jw(state(chi), QuantileMeasure(Grid(n), zeta), porous())
    assert_allclose(jv, np.mean((chi - zeta) ** 2), rtol=1e-13)
    c = 0.7
    spec = ModelSpec(1.0, confinement=Potential.quadratic(1.0), interaction=Potential.quadratic(c))
    _, jw = jv_jw(state(chi), QuantileMeasure(Grid(n), zeta), spec)
    dcom = np.mean(zeta) - np.mean(chi)
    assert_allclose(jw, c * (np.mean((chi - zeta) ** 2) - dcom**2), rtol=1e-12)


@pytest.mark.parametrize("name", sorted(SPEC_FAMILIES))
@given(pair=measure_pair(max_n=20))
def test_jw_matches_pairwise_sum(name, pair):
    a, b = pair
    spec = SPEC_FAMILIES[name]
    _, jw = jv_jw(LagrangianState.at_rest(a), b, spec)
    direct = direct_jw(a.chi, b.chi, spec.interaction)
    scale = 1 + np.mean(a.chi**2) + np.mean(b.chi**2)
    assert abs(jw - direct) <= 1e-10 * scale


@pytest.mark.parametrize("name", sorted(SPEC_FAMILIES))
@given(pair=measure_pair(strict=True))
def test_convexity_lower_bounds(name, pair):
    a, b = pair
    spec = SPEC_FAMILIES[name]
    jv, jw = jv_jw(LagrangianState.at_rest(a), b, spec)
    w2 = wasserstein2_squared(a, b)
    dcom = np.mean(a.chi) - np.mean(b.chi)
    assert jv >= spec.c_V * w2 - 1e-10 * (1 + w2)
    c_W = spec.c_W
    bound = c_W * (w2 - dcom**2) if c_W >= 0 else c_W * w2
    assert jw >= bound - 1e-10 * (1 + w2)


@given(pair=measure_pair(strict=True), m=st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_pressure_monotonicity_sign(pair, m):
    a, b = pair
    assert pressure_monotonicity(a.chi, b.chi, m) <= 0.0


def test_equivalence_constants_formula():
    p, q = equivalence_constants(1.0, 2.0)
    assert_allclose((p, q), ((3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2))
