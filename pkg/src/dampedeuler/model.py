"""Free energy, forces and Lyapunov functionals in quantile coordinates.

Everything here is specialised to one space dimension, where a measure is a
nondecreasing vector ``chi`` on the mass grid and the velocity is the
Lagrangian field ``v`` on the same grid.  Integrals over the mass variable are
plain averages, written ``<a, b> = mean(a * b)``.

Sign convention: the force ``F[chi]`` is the L2 gradient of the free energy,
and the momentum balance reads ``dv/dt = -F[chi] - gamma * v``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import DegenerateDensity, GridMismatch, Inadmissible, LengthMismatch, NonFinite
from .measure import QuantileMeasure, wasserstein2_squared

SCENARIOS = ("confinement", "no_confinement", "smooth_1d_repulsive", "toy_center_of_mass")


@dataclass(frozen=True)
class Potential:
    """Descriptor for a confinement ``V`` or an even interaction ``W``.

    kinds
        ``none``; ``quadratic`` (``c x^2 / 2``); ``newtonian`` (``c |x|``,
        ``c = +1`` attractive, ``-1`` repulsive); ``tabulated`` (user
        callables for the value and derivative plus a convexity constant).
    """

    kind: str = "none"
    coefficient: float = 0.0
    value_fn: Optional[Callable] = field(default=None, compare=False)
    derivative_fn: Optional[Callable] = field(default=None, compare=False)
    convexity_constant: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "quadratic", "newtonian", "tabulated"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "tabulated" and (self.value_fn is None or self.derivative_fn is None):
            raise ValueError("tabulated potentials need value_fn and derivative_fn")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def quadratic(cls, c=1.0):
        return cls("quadratic", float(c))

    @classmethod
    def newtonian(cls, sign=1.0):
        return cls("newtonian", float(sign))

    @classmethod
    def tabulated(cls, value_fn, derivative_fn, convexity):
        return cls("tabulated", 0.0, value_fn, derivative_fn, float(convexity))

    @property
    def absent(self):
        return self.kind == "none"

    @property
    def convexity(self):
        """Uniform convexity constant ``c`` with ``(x-y)(P'(x)-P'(y)) >= c (x-y)^2``.

        Newtonian kernels get ``0``: on nondecreasing quantile vectors the
        interaction energy of ``+-|x|`` is linear, so it neither helps nor
        hurts displacement convexity.
        """
        if self.kind == "quadratic":
            return self.coefficient
        if self.kind == "tabulated":
            return self.convexity_constant
        return 0.0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "none":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return 0.5 * self.coefficient * x * x
        if self.kind == "newtonian":
            return self.coefficient * np.abs(x)
        return np.asarray(self.value_fn(x), dtype=float)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "none":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return self.coefficient * x
        if self.kind == "newtonian":
            # principal value: the kink contributes nothing at the origin
            return self.coefficient * np.sign(x)
        return np.asarray(self.derivative_fn(x), dtype=float)


def check_H1(m, d):
    """McCann's condition for power-law internal energies: ``m >= 1 - 1/d``."""
    if not np.isfinite(m) or d < 1:
        raise ValueError("need finite m and d >= 1")
    return bool(m >= 1.0 - 1.0 / d)


@dataclass(frozen=True)
class ModelSpec:
    """Damped Euler model: pressure law, potentials and damping.

    ``pressure_exponent=None`` selects the pressureless system.  The
    convexity admissibility condition is enforced at construction unless ``unsafe=True``; unsafe specs can still
    be simulated but carry no equilibration guarantee.
    """

    gamma: float
    pressure_exponent: Optional[float] = None
    confinement: Potential = Potential()
    interaction: Potential = Potential()
    dimension: int = 1
    unsafe: bool = False

    def __post_init__(self):
        if self.dimension != 1:
            raise ValueError("only dimension 1 is supported")
        if self.confinement.kind == "newtonian":
            raise ValueError("Newtonian kernels are interaction potentials only")
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be a nonnegative number, got {self.gamma!r}")
        m = self.pressure_exponent
        if m is not None and not (np.isfinite(m) and m > 0):
            raise ValueError(f"pressure exponent must be positive, got {m!r}")
        if self.unsafe:
            return
        if self.gamma == 0:
            raise Inadmissible("gamma = 0 is undamped; pass unsafe=True to simulate it")
        if m is not None and not check_H1(m, self.dimension):
            raise Inadmissible(f"McCann's condition m >= 1 - 1/d fails for m={m}")
        if not self.admissible:
            raise Inadmissible(
                f"convexity condition fails: c_V={self.c_V}, c_W={self.c_W}, "
                f"confinement {'present' if self.has_confinement else 'absent'}"
            )

    @property
    def pressureless(self):
        return self.pressure_exponent is None

    @property
    def has_confinement(self):
        return not self.confinement.absent

    @property
    def c_V(self):
        return self.confinement.convexity

    @property
    def c_W(self):
        return self.interaction.convexity

    @property
    def c_ell(self):
        if self.has_confinement:
            return self.c_V + min(self.c_W, 0.0)
        return self.c_W

    @property
    def admissible(self):
        if self.has_confinement:
            return self.c_V > 0 and self.c_V + self.c_W > 0
        return self.c_W > 0

    @property
    def nonnegative_energy(self):
        """True when every free-energy term is bounded below by zero."""
        pressure_ok = self.pressure_exponent is None or self.pressure_exponent > 1
        conf_ok = self.confinement.kind in ("none", "quadratic") and self.confinement.coefficient >= 0
        inter = self.interaction
        inter_ok = inter.kind == "none" or (
            inter.kind in ("quadratic", "newtonian") and inter.coefficient >= 0
        )
        return pressure_ok and conf_ok and inter_ok


@dataclass(frozen=True, eq=False)
class LagrangianState:
    measure: QuantileMeasure
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        if v.shape != (self.measure.n,):
            raise LengthMismatch(f"velocity has shape {v.shape}, grid has {self.measure.n} cells")
        if not np.all(np.isfinite(v)):
            raise NonFinite("velocity must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @classmethod
    def at_rest(cls, measure, t=0.0):
        return cls(measure, np.zeros(measure.n), t)

    @property
    def chi(self):
        return self.measure.chi

    @property
    def grid(self):
        return self.measure.grid


def _chi_of(obj):
    if isinstance(obj, LagrangianState):
        return obj.measure.chi
    if isinstance(obj, QuantileMeasure):
        return obj.chi
    return np.asarray(obj, dtype=float)


# -- array-level kernels (no validation; used by the integrators) ------------

def interaction_field(x, spec, weights=None, total=None):
    """``sum_j w_j W'(x_i - x_j) / total`` for the model's interaction.

    Cells use unit weights and ``total = n``; cluster states pass integer cell
    counts.
    """
    W = spec.interaction
    if W.kind == "none":
        return np.zeros_like(x)
    if weights is None:
        weights = np.ones_like(x)
        total = float(x.size)
    if W.kind == "quadratic":
        return W.coefficient * (x - np.dot(weights, x) / total)
    if W.kind == "newtonian":
        return W.coefficient * kernels.sign_sum(x, weights) / total
    return kernels.pairwise_sum(x, weights, W.derivative) / total


def internal_energy_array(chi, m):
    n = chi.size
    d = np.diff(chi)
    if not np.all(d > 0):
        raise DegenerateDensity("internal energy is infinite on a singular density")
    slope = n * d
    if m == 1:
        return float(-np.sum(np.log(slope)) / n)
    return float(np.sum(slope ** (1.0 - m)) / ((m - 1.0) * n))


def interaction_energy_array(chi, spec):
    W = spec.interaction
    n = chi.size
    if W.kind == "none":
        return 0.0
    if W.kind == "quadratic":
        return 0.5 * W.coefficient * float(np.var(chi))
    if W.kind == "newtonian":
        s = np.sort(chi)
        return W.coefficient * float(np.dot(s, 2.0 * np.arange(n) + 1.0 - n)) / (n * n)
    total = 0.0
    for start in range(0, n, 512):
        block = chi[start:start + 512, None] - chi[None, :]
        total += float(np.sum(W.value(block)))
    return total / (2.0 * n * n)


def free_energy_array(chi, spec):
    energy = float(np.mean(spec.confinement.value(chi))) + interaction_energy_array(chi, spec)
    if spec.pressure_exponent is not None:
        energy += internal_energy_array(chi, spec.pressure_exponent)
    return energy


def force_array(chi, spec):
    f = spec.confinement.derivative(chi) + interaction_field(chi, spec)
    if spec.pressure_exponent is not None:
        f = f + kernels.pressure_gradient(chi, spec.pressure_exponent)
    return f


def stiffness_bound(chi, spec):
    """Gershgorin bound on the spectral radius of the force Jacobian."""
    n = chi.size
    bound = 0.0
    V = spec.confinement
    if V.kind == "quadratic":
        bound += abs(V.coefficient)
    elif V.kind == "tabulated":
        h = 1e-6 * max(1.0, float(np.max(np.abs(chi))))
        bound += float(np.max(np.abs(V.derivative(chi + h) - V.derivative(chi - h)))) / (2 * h)
    W = spec.interaction
    if W.kind == "quadratic":
        bound += 2.0 * abs(W.coefficient)
    m = spec.pressure_exponent
    if m is not None:
        d = np.diff(chi)
        if not np.all(d > 0):
            raise DegenerateDensity("stiffness undefined on a singular density")
        rho = np.zeros(n + 1)
        rho[1:-1] = 1.0 / (n * d)
        # row i: diagonal k_l + k_r plus off-diagonals of the same size
        bound += float(np.max(2.0 * m * n * n * (rho[1:] ** (m + 1) + rho[:-1] ** (m + 1))))
    return bound


# -- public operations -------------------------------------------------------

def free_energy(s, spec):
    """Free energy of a state or measure (internal + confinement + interaction)."""
    return free_energy_array(_chi_of(s), spec)


def total_entropy(s, spec):
    """``F + |v|^2 / 2``."""
    return free_energy(s, spec) + 0.5 * float(np.mean(s.v * s.v))


def force(s, spec, ties="principal"):
    """Per-cell force ``F[chi]`` (gradient of the free energy in L2(0,1)).

    ``ties`` only matters for Newtonian kernels on coincident nodes:
    ``"principal"`` uses ``W'(0) = 0`` so a cluster feels its averaged force;
    ``"rank"`` orders tied cells by their mass label, giving the per-cell
    field ``s (2 eta - 1)`` whose cluster average is the same.
    """
    chi = _chi_of(s)
    if ties == "rank" and spec.interaction.kind == "newtonian":
        grid_nodes = (2.0 * np.arange(chi.size) + 1.0 - chi.size) / chi.size
        f = spec.confinement.derivative(chi) + spec.interaction.coefficient * grid_nodes
        if spec.pressure_exponent is not None:
            f = f + kernels.pressure_gradient(chi, spec.pressure_exponent)
        return f
    if ties not in ("principal", "rank"):
        raise ValueError("ties must be 'principal' or 'rank'")
    return force_array(chi, spec)


def pressure_monotonicity(chi, zeta, m):
    """Discrete ``int (chi' - zeta')((chi')^-m - (zeta')^-m)``; never positive."""
    chi = np.asarray(chi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    n = chi.size
    a = n * np.diff(chi)
    b = n * np.diff(zeta)
    if not (np.all(a > 0) and np.all(b > 0)):
        raise DegenerateDensity("both profiles must be strictly increasing")
    return float(np.sum((a - b) * (a ** (-m) - b ** (-m))) / n)


def equivalence_constants(alpha, beta):
    """Extreme eigenvalues of ``[[alpha, 1], [1, beta]]``."""
    root = np.sqrt(4.0 + (beta - alpha) ** 2)
    return 0.5 * ((alpha + beta) - root), 0.5 * ((alpha + beta) + root)


@dataclass(frozen=True)
class LyapunovWeights:
    """Weights of ``J = alpha W2^2 + dW2^2/dt + beta |v|^2``.

    ``p`` and ``q`` are the equivalence constants of the quadratic form
    ``[[form_alpha, 1], [1, beta]]`` that governs the decaying functional.
    ``form_alpha`` equals ``alpha`` except for the smooth repulsive example,
    where the free-energy gap is itself ``|chi - chi_inf|^2 / 2`` and adds
    ``beta`` to the distance weight.
    """

    alpha: float
    beta: float
    p: float
    q: float
    form_alpha: float
    scenario: str = "confinement"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if self.form_alpha * self.beta <= 1:
            raise ValueError("equivalence needs form_alpha * beta > 1")

    @classmethod
    def from_form(cls, alpha, beta, form_alpha=None, scenario="confinement"):
        form_alpha = alpha if form_alpha is None else form_alpha
        p, q = equivalence_constants(form_alpha, beta)
        return cls(alpha, beta, p, q, form_alpha, scenario)


def lyapunov_weights(spec, scenario):
    """The weight choices that make ``G`` (or ``J``) strictly decreasing."""
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}")
    g = spec.gamma
    if g <= 0:
        raise Inadmissible("Lyapunov weights need gamma > 0")
    if scenario == "confinement":
        if not (spec.has_confinement and spec.admissible):
            raise Inadmissible("confinement scenario needs V present and an admissible spec")
        return LyapunovWeights.from_form(g, (1.0 + spec.c_ell) / g, scenario=scenario)
    if scenario == "no_confinement":
        if spec.has_confinement or not spec.admissible:
            raise Inadmissible("no-confinement scenario needs V absent and c_W > 0")
        return LyapunovWeights.from_form(g, (1.0 + spec.c_ell) / g, scenario=scenario)
    if scenario == "toy_center_of_mass":
        if spec.confinement.kind != "quadratic" or spec.c_V <= 0 or not spec.interaction.absent:
            raise Inadmissible("toy scenario needs V = c_V x^2/2 with c_V > 0 and W = 0")
        beta = (1.0 + spec.c_V) / g
        return LyapunovWeights.from_form(beta * spec.c_V + g, beta, scenario=scenario)
    ok = (
        spec.pressureless
        and spec.confinement.kind == "quadratic"
        and spec.confinement.coefficient == 1.0
        and spec.interaction.kind == "newtonian"
        and spec.interaction.coefficient < 0
    )
    if not ok:
        raise Inadmissible("smooth repulsive example needs V = x^2/2, W = -c|x|, no pressure")
    beta = 2.0 / g
    return LyapunovWeights.from_form(g, beta, form_alpha=beta + g, scenario=scenario)


def jv_jw(s, reference, spec):
    """Convexity dissipation terms between ``s`` and a reference measure.

    With ``zeta`` the reference quantiles,
    ``J_V = <zeta - chi, V'(zeta) - V'(chi)>`` and ``J_W`` is the doubled
    mass-variable integral; the latter collapses to
    ``<zeta - chi, w(zeta) - w(chi)>`` with ``w`` the interaction field,
    because ``W'`` is odd.
    """
    chi = _chi_of(s)
    zeta = _chi_of(reference)
    if chi.shape != zeta.shape:
        raise GridMismatch("state and reference live on different grids")
    dz = zeta - chi
    V = spec.confinement
    jv = float(np.mean(dz * (V.derivative(zeta) - V.derivative(chi))))
    jw = float(np.mean(dz * (interaction_field(zeta, spec) - interaction_field(chi, spec))))
    return jv, jw


def lyapunov_G(s, reference, ref_velocity, spec, w):
    """Return ``(E, J, G)`` for the state ``s`` against a reference.

    ``E = W2^2 + |v - w|^2``, ``J = alpha W2^2 + K + beta |v - w|^2`` and
    ``G = alpha W2^2 + K + 2 beta (H(s) - H(ref))`` where ``K`` is the time
    derivative of ``W2^2``.
    """
    ref_velocity = np.zeros(s.measure.n) if ref_velocity is None else np.asarray(ref_velocity, float)
    w2 = wasserstein2_squared(s.measure, reference)
    dv = s.v - ref_velocity
    k = float(2.0 * np.mean((s.measure.chi - reference.chi) * dv))
    v2 = float(np.mean(dv * dv))
    e = w2 + v2
    j = w.alpha * w2 + k + w.beta * v2
    h_ref = free_energy(reference, spec) + 0.5 * float(np.mean(ref_velocity * ref_velocity))
    g = w.alpha * w2 + k + 2.0 * w.beta * (total_entropy(s, spec) - h_ref)
    return e, j, g
