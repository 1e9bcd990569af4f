"""Shared strategies and builders for the test suite."""

import numpy as np
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dampedeuler import Grid, ModelSpec, Potential, QuantileMeasure

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)


@st.composite
def monotone(draw, n=None, min_n=2, max_n=24, strict=False):
    """Nondecreasing vector; ``strict`` adds a positive gap floor."""
    if n is None:
        n = draw(st.integers(min_n, max_n))
    start = draw(finite)
    lo = 1e-3 if strict else 0.0
    gaps = draw(arrays(float, n - 1, elements=st.floats(lo, 2.0)))
    return start + np.concatenate([[0.0], np.cumsum(gaps)])


@st.composite
def measure_pair(draw, min_n=2, max_n=24, strict=False):
    n = draw(st.integers(min_n, max_n))
    a = draw(monotone(n=n, strict=strict))
    b = draw(monotone(n=n, strict=strict))
    g = Grid(n)
    return QuantileMeasure(g, a), QuantileMeasure(g, b)


def uniform_chi(n, a=-1.0, b=1.0):
    return a + (b - a) * Grid(n).nodes


def repulsive(gamma=1.0):
    return ModelSpec(gamma, confinement=Potential.quadratic(1.0), interaction=Potential.newtonian(-1.0))


def attractive(gamma=1.0):
    return ModelSpec(gamma, confinement=Potential.quadratic(1.0), interaction=Potential.newtonian(1.0))


def porous(gamma=1.0, m=2.0, c_V=1.0):
    return ModelSpec(gamma, pressure_exponent=m, confinement=Potential.quadratic(c_V))


def harmonic(gamma=1.0, c_V=1.0, unsafe=False):
    return ModelSpec(gamma, confinement=Potential.quadratic(c_V), unsafe=unsafe)


# V = x^2/2 + x^4/4 is 1-convex; W = x^2/2 + log cosh x is even and 1-convex
QUARTIC_V = Potential.tabulated(lambda x: x**2 / 2 + x**4 / 4, lambda x: x + x**3, 1.0)
LOGCOSH_W = Potential.tabulated(lambda x: x**2 / 2 + np.log(np.cosh(x)), lambda x: x + np.tanh(x), 1.0)

SPEC_FAMILIES = {
    "repulsive": repulsive(),
    "attractive": attractive(),
    "porous": porous(),
    "quadratic_W_attractive": ModelSpec(1.0, confinement=Potential.quadratic(1.0),
                                        interaction=Potential.quadratic(0.5)),
    "quadratic_W_repulsive": ModelSpec(1.0, confinement=Potential.quadratic(2.0),
                                       interaction=Potential.quadratic(-0.5)),
    "no_confinement": ModelSpec(1.0, interaction=Potential.quadratic(1.0)),
    "quartic_V": ModelSpec(1.0, confinement=QUARTIC_V, interaction=Potential.newtonian(1.0)),
    "logcosh_W": ModelSpec(1.0, confinement=Potential.quadratic(0.5), interaction=LOGCOSH_W),
}
