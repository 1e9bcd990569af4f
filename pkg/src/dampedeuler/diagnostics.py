"""Time-series monitors for Lyapunov decay.

A :class:`LyapunovTrace` is a bundle of equally long columns sampled at a
uniform cadence.  The functions here post-process traces: finite-difference
derivatives, the second-order Wasserstein inequality residual, closed-form
center-of-mass dynamics, and log-linear rate fits.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import CadenceMismatch, MissingColumn, NonPositiveData


@dataclass
class LyapunovTrace:
    columns: dict
    meta: dict = field(default_factory=dict)
    states: np.ndarray = None
    velocities: np.ndarray = None
    events: np.ndarray = None

    def __post_init__(self):
        if "t" not in self.columns:
            raise MissingColumn("a trace needs a 't' column")
        cols = {}
        for name, values in self.columns.items():
            cols[name] = np.asarray(values, dtype=float)
        lengths = {c.size for c in cols.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have different lengths: {sorted(lengths)}")
        self.columns = cols

    def __getitem__(self, name):
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumn(f"trace has no column {name!r}") from None

    def __contains__(self, name):
        return name in self.columns

    def __len__(self):
        return self.columns["t"].size

    @property
    def names(self):
        return list(self.columns)

    @property
    def t(self):
        return self.columns["t"]

    @property
    def cadence(self):
        t = self.t
        if t.size < 2:
            raise CadenceMismatch("need at least two stamps")
        steps = np.diff(t)
        dt = float(np.mean(steps))
        if np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, abs(dt)):
            raise CadenceMismatch("time stamps are not uniform")
        return dt

    def with_column(self, name, values):
        cols = dict(self.columns)
        cols[name] = values
        return LyapunovTrace(cols, dict(self.meta), self.states, self.velocities, self.events)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.names)
            data = np.column_stack([self.columns[c] for c in self.names])
            for row in data:
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(x) for x in row] for row in reader]
        data = np.array(rows, dtype=float).reshape(-1, len(header))
        return cls({name: data[:, i] for i, name in enumerate(header)})


class TraceRecorder:
    """Row-wise accumulator that freezes into a :class:`LyapunovTrace`."""

    def __init__(self, keep_states=False):
        self.rows = []
        self.keep_states = keep_states
        self.states = []
        self.velocities = []

    def add(self, row, chi=None, v=None):
        self.rows.append(row)
        if self.keep_states and chi is not None:
            self.states.append(np.array(chi))
            if v is not None:
                self.velocities.append(np.array(v))

    def freeze(self, meta=None):
        names = list(self.rows[0]) if self.rows else ["t"]
        cols = {name: np.array([r[name] for r in self.rows], dtype=float) for name in names}
        states = np.array(self.states) if self.states else None
        vels = np.array(self.velocities) if self.velocities else None
        return LyapunovTrace(cols, dict(meta or {}), states, vels)


def energy_residual(t, H, v2, damping):
    """``dH/dt + damping * |v|^2`` with a forward difference and trapezoidal ``|v|^2``.

    Second order in the cadence; the last entry is NaN.
    """
    out = np.full(t.size, np.nan)
    if t.size > 1:
        dt = np.diff(t)
        out[:-1] = np.diff(H) / dt + damping * 0.5 * (v2[1:] + v2[:-1])
    return out


def _column(trace, column):
    if isinstance(column, str):
        return trace[column]
    return np.asarray(column, dtype=float)


def symmetric_second_difference(trace, column, h):
    """``(f(t+h) - 2 f(t) + f(t-h)) / h^2`` on interior stamps (NaN at the ends)."""
    dt = trace.cadence
    k = int(round(h / dt))
    if k < 1 or abs(k * dt - h) > 1e-9 * max(h, dt):
        raise CadenceMismatch(f"h={h} is not a multiple of the cadence {dt}")
    f = _column(trace, column)
    out = np.full(f.size, np.nan)
    if f.size > 2 * k:
        out[k:-k] = (f[2 * k:] - 2.0 * f[k:-k] + f[:-2 * k]) / (h * h)
    return out


def check_second_order_inequality(trace, spec):
    """Signed residual of ``K'/2 + gamma K/2 + J_V + J_W - |v|^2 <= 0``.

    ``K`` is the time derivative of ``W2^2`` against a reference at rest;
    its derivative is a forward difference at the trace cadence, so the
    last entry is NaN.  Nonpositive entries mean the inequality holds.
    """
    for name in ("K", "v2", "JV", "JW"):
        if name not in trace:
            raise MissingColumn(f"trace has no column {name!r}")
    dt = trace.cadence
    K = trace["K"]
    out = np.full(K.size, np.nan)
    out[:-1] = (
        0.5 * np.diff(K) / dt
        + 0.5 * spec.gamma * K[:-1]
        + trace["JV"][:-1]
        + trace["JW"][:-1]
        - trace["v2"][:-1]
    )
    return out


def center_of_mass_oracle(x0, v0, gamma, t, c_V=0.0):
    """Closed-form center of mass and mean velocity at time(s) ``t``.

    Without confinement the mean velocity decays like ``exp(-gamma t)`` and
    the center drifts by ``(1 - exp(-gamma t)) v0 / gamma``.  With
    ``V = c_V x^2 / 2`` the pair solves ``x' = v, v' = -c_V x - gamma v``,
    evaluated through the exact 2x2 matrix exponential.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if c_V == 0.0:
        if gamma > 0:
            decay = -np.expm1(-gamma * t_arr)
            x = x0 + decay * v0 / gamma
        else:
            x = x0 + v0 * t_arr
        v = v0 * np.exp(-gamma * t_arr)
    else:
        A = np.array([[0.0, 1.0], [-c_V, -gamma]])
        xv = np.array([expm(A * s) @ np.array([x0, v0]) for s in t_arr])
        x, v = xv[:, 0], xv[:, 1]
    if np.ndim(t) == 0:
        return float(x[0]), float(v[0])
    return x, v


def toy_lyapunov(com, com_v, weights, center=0.0):
    """``alpha dx^2 + 2 dx v + beta v^2`` for the center-of-mass pair."""
    dx = np.asarray(com, dtype=float) - center
    v = np.asarray(com_v, dtype=float)
    return weights.alpha * dx * dx + 2.0 * dx * v + weights.beta * v * v


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    window: tuple
    residual: float


def fit_rate(trace, column, window=None, skip_fraction=0.1, rel_floor=None):
    """Least-squares fit of ``log f(t) = log A - rate * t``.

    ``window`` is ``(t_start, t_end)``; the first ``skip_fraction`` of it is
    dropped as transient.  With ``rel_floor`` the fit stops at the first
    stamp where ``f`` falls below ``rel_floor * f(t_start)``.
    """
    t = trace.t
    f = _column(trace, column)
    t0, t1 = (t[0], t[-1]) if window is None else window
    if t0 < t[0] - 1e-12 or t1 > t[-1] + 1e-12 or t1 <= t0:
        raise ValueError(f"window {window} is not inside the trace")
    t0 = t0 + skip_fraction * (t1 - t0)
    mask = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    tt, ff = t[mask], f[mask]
    if rel_floor is not None and ff.size:
        below = np.flatnonzero(ff < rel_floor * ff[0])
        if below.size:
            tt, ff = tt[:below[0]], ff[:below[0]]
    if tt.size < 2:
        raise ValueError("fit window holds fewer than two samples")
    if not np.all(ff > 0):
        raise NonPositiveData(f"column {column!r} is not positive on the fit window")
    logf = np.log(ff)
    slope, intercept = np.polyfit(tt, logf, 1)
    resid = logf - (slope * tt + intercept)
    return RateFit(float(-slope), float(intercept), (float(tt[0]), float(tt[-1])),
                   float(np.sqrt(np.mean(resid * resid))))


def decay_bound_ratio(trace, column, rate):
    """``max_t f(t) / (f(0) exp(-rate t))``; at most 1 when the bound holds."""
    f = _column(trace, column)
    t = trace.t - trace.t[0]
    return float(np.max(f / (f[0] * np.exp(-rate * t))))


def rowwise_decay(trace, column, rate):
    """Forward-difference test of ``f' <= -rate f``; returns signed residuals."""
    f = _column(trace, column)
    dt = trace.cadence
    out = np.full(f.size, np.nan)
    out[:-1] = np.diff(f) / dt + rate * f[:-1]
    return out


def observed_order(coarse, fine, ratio=2.0):
    """Convergence order from two error magnitudes at step ratio ``ratio``."""
    return math.log(abs(coarse) / abs(fine)) / math.log(ratio)


def h3_running_average(t, c_F):
    """``(1/(1+t)) int_0^t c_F(s)^2 / (1+s) ds`` by the trapezoidal rule."""
    t = np.asarray(t, dtype=float)
    integrand = np.asarray(c_F, dtype=float) ** 2 / (1.0 + t)
    acc = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (integrand[1:] + integrand[:-1]))))
    return acc / (1.0 + t)
