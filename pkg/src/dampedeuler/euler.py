"""Time integration of the damped Euler system in quantile coordinates.

The state is ``(chi, v)`` with ``chi' = v`` and ``v' = -F[chi] - gamma v``.
In rescaled (overdamped) mode the momentum equation becomes
``v' = -gamma^2 (F[chi] + v)``.  Two integrators are offered:

``rk4``
    classical fourth-order Runge-Kutta on the full system;
``semi_implicit_damping``
    second-order exponential time differencing (Cox-Matthews ETD2RK): the
    linear damping is integrated exactly, the force is interpolated linearly
    in time from a predictor stage.  Stable for arbitrarily large damping.
"""

import math
from dataclasses import dataclass

import numpy as np

from .diagnostics import TraceRecorder, energy_residual
from .errors import DegenerateDensity, Inadmissible, ShockFormed
from .measure import QuantileMeasure
from .model import (
    LagrangianState,
    force_array,
    free_energy_array,
    interaction_field,
    lyapunov_weights,
    stiffness_bound,
)

METHODS = ("rk4", "semi_implicit_damping")


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    method: str = "rk4"
    monotonicity_tol: float = 0.0
    max_time: float = 1.0
    record_every: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.dt > 0 and self.max_time > 0):
            raise ValueError("dt and max_time must be positive")
        if self.dt > self.max_time * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds max_time={self.max_time}")
        if self.monotonicity_tol < 0:
            raise ValueError("monotonicity_tol must be nonnegative")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")

    @property
    def n_steps(self):
        return max(1, int(round(self.max_time / self.dt)))


def default_dt(gamma):
    return min(0.01, 0.1 / gamma) if gamma > 0 else 0.01


def damping_coefficients(spec, rescaled=False):
    """``(a, b)`` in ``v' = -a v - b F``."""
    g = spec.gamma
    return (g * g, g * g) if rescaled else (g, 1.0)


def explicit_rate(lam, a, b):
    """Fastest rate the explicit force treatment must resolve.

    For the mode ``chi'' + a chi' + b lam chi = 0`` this is the relaxation
    rate ``b lam / a`` when every mode is overdamped, else the oscillation
    frequency ``sqrt(b lam)``.
    """
    if lam <= 0:
        return 0.0
    if a * a >= 4.0 * b * lam:
        return b * lam / a
    return math.sqrt(b * lam)


def rhs(s, spec, rescaled=False):
    a, b = damping_coefficients(spec, rescaled)
    v = np.array(s.v)
    return v, -b * force_array(s.chi, spec) - a * v


def _phis(z):
    if abs(z) < 1e-2:
        # alternating Taylor series; truncation error below 1e-16
        terms = [(-z) ** k for k in range(7)]
        fact = [math.factorial(k) for k in range(10)]
        return tuple(sum(terms[k] / fact[k + j] for k in range(7)) for j in (1, 2, 3))
    em1 = math.expm1(-z)
    return -em1 / z, (z + em1) / (z * z), (0.5 * z * z - z - em1) / z ** 3


def _rk4(chi, v, spec, h, a, b):
    def acc(c, u):
        return -b * force_array(c, spec) - a * u

    k1x, k1v = v, acc(chi, v)
    k2x = v + 0.5 * h * k1v
    k2v = acc(chi + 0.5 * h * k1x, k2x)
    k3x = v + 0.5 * h * k2v
    k3v = acc(chi + 0.5 * h * k2x, k3x)
    k4x = v + h * k3v
    k4v = acc(chi + h * k3x, k4x)
    chi_new = chi + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    v_new = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    return chi_new, v_new


def _etd2(chi, v, spec, h, a, b):
    z = a * h
    p1, p2, p3 = _phis(z)
    decay = math.exp(-z)
    f0 = force_array(chi, spec)
    chi_p = chi + h * p1 * v - b * h * h * p2 * f0
    slope = (force_array(chi_p, spec) - f0) / h
    v_new = decay * v - b * (h * p1 * f0 + h * h * p2 * slope)
    chi_new = chi + h * p1 * v - b * (h * h * p2 * f0 + h ** 3 * p3 * slope)
    return chi_new, v_new


def advance(chi, v, spec, h, method="rk4", rescaled=False):
    """One step on raw arrays, no monotonicity check."""
    a, b = damping_coefficients(spec, rescaled)
    if method == "rk4":
        return _rk4(chi, v, spec, h, a, b)
    return _etd2(chi, v, spec, h, a, b)


def is_monotone(chi, tol):
    d = np.diff(chi)
    return bool(np.all(d > 0) and np.all(d >= tol / chi.size))


def step(s, spec, cfg, rescaled=False):
    chi, v = advance(np.array(s.chi), np.array(s.v), spec, cfg.dt, cfg.method, rescaled)
    if not (np.all(np.isfinite(chi)) and np.all(np.isfinite(v))):
        raise ShockFormed("state blew up (non-finite values)", time=s.t + cfg.dt)
    if not is_monotone(chi, cfg.monotonicity_tol):
        raise ShockFormed(f"quantile map lost strict monotonicity at t={s.t + cfg.dt:.6g}",
                          time=s.t + cfg.dt)
    return LagrangianState(QuantileMeasure(s.grid, chi), v, s.t + cfg.dt)


def auto_weights(spec):
    """Weights of the decaying functional the model qualifies for, or None."""
    for scenario in ("smooth_1d_repulsive", "confinement", "no_confinement"):
        try:
            return lyapunov_weights(spec, scenario)
        except Inadmissible:
            continue
    return None


class Monitor:
    """Evaluates one trace row: distances, energies and Lyapunov functionals.

    The reference is at rest with velocity ``ref_velocity`` (zero by default).
    ``energy_scale`` divides the kinetic energy in ``H``; rescaled runs use
    ``gamma^2`` so that ``dH/dt = -|v|^2``.
    """

    def __init__(self, spec, reference=None, weights=None, ref_velocity=None, energy_scale=1.0):
        self.spec = spec
        self.weights = weights
        self.energy_scale = energy_scale
        self.zeta = None if reference is None else np.array(reference.chi)
        if self.zeta is not None:
            n = self.zeta.size
            self.w_ref = np.zeros(n) if ref_velocity is None else np.asarray(ref_velocity, float)
            self.ref_force_V = spec.confinement.derivative(self.zeta)
            self.ref_field_W = interaction_field(self.zeta, spec)
            self.H_ref = free_energy_array(self.zeta, spec) + 0.5 * float(np.mean(self.w_ref ** 2))
            self.ref_com = float(np.mean(self.zeta))

    def row(self, t, chi, v):
        spec = self.spec
        F = free_energy_array(chi, spec)
        v2 = float(np.mean(v * v))
        H = F + 0.5 * v2 / self.energy_scale
        com, com_v = float(np.mean(chi)), float(np.mean(v))
        row = {"t": t, "W2sq": np.nan, "K": np.nan, "v2": v2, "F": F, "H": H,
               "E": np.nan, "J": np.nan, "G": np.nan, "JV": np.nan, "JW": np.nan,
               "com": com, "com_v": com_v, "J_com": np.nan}
        if self.zeta is None:
            return row
        dz = self.zeta - chi
        dv = v - self.w_ref
        w2 = float(np.mean(dz * dz))
        K = float(-2.0 * np.mean(dz * dv))
        dv2 = float(np.mean(dv * dv))
        row.update(W2sq=w2, K=K, E=w2 + dv2)
        row["JV"] = float(np.mean(dz * (self.ref_force_V - spec.confinement.derivative(chi))))
        row["JW"] = float(np.mean(dz * (self.ref_field_W - interaction_field(chi, spec))))
        w = self.weights
        if w is not None:
            row["J"] = w.alpha * w2 + K + w.beta * dv2
            h_full = F + 0.5 * v2
            row["G"] = w.alpha * w2 + K + 2.0 * w.beta * (h_full - self.H_ref)
            x = com - self.ref_com
            row["J_com"] = w.alpha * x * x + 2.0 * x * com_v + w.beta * com_v * com_v
        return row


def finish_trace(recorder, meta, damping, spec):
    trace = recorder.freeze(meta)
    if len(trace) == 0:
        return trace
    t = trace.t
    trace = trace.with_column("energy_residual", energy_residual(t, trace["H"], trace["v2"], damping))
    ineq = np.full(t.size, np.nan)
    if t.size > 1:
        K = trace["K"]
        dt = np.diff(t)
        ineq[:-1] = (0.5 * np.diff(K) / dt + 0.5 * spec.gamma * K[:-1]
                     + trace["JV"][:-1] + trace["JW"][:-1] - trace["v2"][:-1])
    trace = trace.with_column("ineq_residual", ineq)
    if recorder.states:
        trace.states = np.array(recorder.states)
        trace.velocities = np.array(recorder.velocities)
    return trace


def run(s0, spec, cfg, reference=None, weights=None, rescaled=False, ref_velocity=None,
        keep_states=False):
    """Integrate to ``cfg.max_time`` and return the recorded trace.

    ``weights=None`` picks the Lyapunov weights the model qualifies for.  On
    loss of monotonicity the raised :class:`ShockFormed` carries the partial
    trace.
    """
    if weights is None:
        weights = auto_weights(spec)
    a, b = damping_coefficients(spec, rescaled)
    scale = b if rescaled else 1.0
    monitor = Monitor(spec, reference, weights, ref_velocity, energy_scale=scale)
    rec = TraceRecorder(keep_states)
    meta = {"dt": cfg.dt, "method": cfg.method, "n": s0.measure.n, "gamma": spec.gamma,
            "rescaled": rescaled, "record_every": cfg.record_every,
            "weights": None if weights is None else vars(weights).copy()}
    damping = 1.0 if rescaled else spec.gamma
    chi, v = np.array(s0.chi), np.array(s0.v)
    t0 = s0.t
    rec.add(monitor.row(t0, chi, v), chi, v)
    for k in range(1, cfg.n_steps + 1):
        t = t0 + k * cfg.dt
        try:
            chi, v = advance(chi, v, spec, cfg.dt, cfg.method, rescaled)
            bad = not (np.all(np.isfinite(chi)) and np.all(np.isfinite(v)))
        except DegenerateDensity:
            # an intermediate stage already left the cone
            bad = False
            chi = np.zeros_like(chi)
        if bad or not is_monotone(chi, cfg.monotonicity_tol):
            partial = finish_trace(rec, meta, damping, spec)
            reason = "non-finite state" if bad else "loss of strict monotonicity"
            raise ShockFormed(f"{reason} at t={t:.6g}", trace=partial, time=t)
        if k % cfg.record_every == 0:
            rec.add(monitor.row(t, chi, v), chi, v)
    return finish_trace(rec, meta, damping, spec)


def final_state(trace, grid, t=None):
    """Rebuild the last recorded state of a trace run with ``keep_states``."""
    if trace.states is None:
        raise ValueError("trace was recorded without states")
    t = trace.t[-1] if t is None else t
    return LagrangianState(QuantileMeasure(grid, trace.states[-1]), trace.velocities[-1], t)


def stable_dt(chi, spec, rescaled=False, safety=0.5, cap=0.01):
    """Step size resolving the explicit force part at the state ``chi``."""
    a, b = damping_coefficients(spec, rescaled)
    r = explicit_rate(stiffness_bound(chi, spec), a, b)
    return cap if r == 0 else min(cap, safety / r)
