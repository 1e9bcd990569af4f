"""Globally sticky pressureless dynamics on clusters.

A sticky state is a list of clusters ``(x_c, v_c, s_c)`` with strictly
increasing positions and integer cell counts ``s_c`` (mass ``s_c / n``).
Holding one velocity per cluster makes the projection onto maps constant on
flat intervals the identity, so between collisions the clusters follow

    x_c' = v_c,   v_c' = -f_c - gamma v_c,

where ``f_c`` is the cell average of the force over the cluster.  After each
step adjacent clusters that touched or crossed are fused, conserving mass
and momentum; fusions are never undone.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .diagnostics import TraceRecorder, energy_residual, h3_running_average
from .errors import LengthMismatch, NonFinite, PressureNotSupported
from .measure import ClusterPartition, Grid, QuantileMeasure, clusters, default_cluster_tol, project
from .model import LagrangianState, free_energy_array, interaction_field


@dataclass(frozen=True, eq=False)
class StickyState:
    partition: ClusterPartition
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        if v.shape != (len(self.partition),):
            raise LengthMismatch("one velocity per cluster required")
        if not np.all(np.isfinite(v)):
            raise NonFinite("cluster velocities must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_lagrangian(cls, s, tol=None):
        """Group flat runs of ``s`` into clusters and average their velocities."""
        p = clusters(s.measure, tol)
        v = np.add.reduceat(project(p, s.v), p.starts) / p.sizes
        return cls(p, v, s.t)

    @classmethod
    def from_arrays(cls, grid, x, v, sizes, t=0.0):
        sizes = np.asarray(sizes, dtype=np.int64)
        stops = np.cumsum(sizes)
        return cls(ClusterPartition(grid, stops - sizes, stops, x), v, t)

    @property
    def grid(self):
        return self.partition.grid

    @property
    def x(self):
        return self.partition.positions

    @property
    def sizes(self):
        return self.partition.sizes

    @property
    def momentum(self):
        return float(np.dot(self.partition.masses, self.v))

    def to_lagrangian(self):
        p = self.partition
        return LagrangianState(p.to_measure(), p.expand(self.v), self.t)


def _check(spec):
    if spec.pressure_exponent is not None:
        raise PressureNotSupported("sticky dynamics are pressureless only")


def cluster_force_array(x, sizes, n, spec):
    """Cell-averaged force on each cluster; ``sizes`` are cell counts."""
    w = np.asarray(sizes, dtype=float)
    return spec.confinement.derivative(x) + interaction_field(x, spec, weights=w, total=float(n))


def cluster_force(st, spec):
    _check(spec)
    return cluster_force_array(np.array(st.x), st.sizes, st.grid.n, spec)


def _rk4_clusters(x, v, sizes, n, spec, h):
    g = spec.gamma

    def acc(xx, vv):
        return -cluster_force_array(xx, sizes, n, spec) - g * vv

    k1x, k1v = v, acc(x, v)
    k2x = v + 0.5 * h * k1v
    k2v = acc(x + 0.5 * h * k1x, k2x)
    k3x = v + 0.5 * h * k2v
    k3v = acc(x + 0.5 * h * k2x, k3x)
    k4x = v + h * k3v
    k4v = acc(x + h * k3x, k4x)
    return (x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x),
            v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v))


def kinetic_drop(events, n):
    """Exact kinetic energy lost by a list of binary merges.

    Each event row is ``(s1, s2, v1, v2)`` in cell counts; a merge of masses
    ``w1, w2`` loses ``w1 w2 (v1 - v2)^2 / (2 (w1 + w2))``.
    """
    if len(events) == 0:
        return 0.0
    s1, s2, v1, v2 = events.T
    w1, w2 = s1 / n, s2 / n
    return float(np.sum(w1 * w2 * (v1 - v2) ** 2 / (2.0 * (w1 + w2))))


def sticky_step(st, spec, dt, return_events=False):
    """Advance by ``dt`` and fuse every pair of clusters that met."""
    _check(spec)
    s = st.sizes.astype(float)
    x, v = _rk4_clusters(np.array(st.x), np.array(st.v), st.sizes, st.grid.n, spec, dt)
    x, v, s, events = kernels.merge_cascade(x, v, s, default_cluster_tol(x))
    new = StickyState.from_arrays(st.grid, x, v, np.rint(s).astype(np.int64), st.t + dt)
    return (new, events) if return_events else new


def _energy(x, v, sizes, n, spec):
    chi = np.repeat(x, sizes)
    F = free_energy_array(chi, spec)
    v2 = float(np.dot(sizes, v * v)) / n
    return chi, F, v2


def sticky_run(st0, spec, cfg, reference=None):
    """Integrate the sticky system and record energies, distances and merges.

    ``reference`` defaults to the point mass at the origin.  The trace has
    the usual energy columns plus ``clusters``, ``merges`` (binary merges
    since the previous row), ``W2``, the stability ratio ``cF_ratio`` =
    ``(F - F_ref) / W2``, its bound ``cF_bound`` = ``1 + sqrt(c0)/2`` with
    ``c0 = 2 H(0)``, and the running average ``h3_average``.  ``trace.events``
    lists every step with merges as rows
    ``(t, merges, kinetic_drop, formula_drop, H_before, H_after)``.
    """
    _check(spec)
    grid = st0.grid
    n = grid.n
    zeta = np.zeros(n) if reference is None else np.array(reference.chi)
    F_ref = free_energy_array(zeta, spec)
    ref_V = spec.confinement.derivative(zeta)
    ref_W = interaction_field(zeta, spec)
    g = spec.gamma

    x, v = np.array(st0.x), np.array(st0.v)
    sizes = st0.sizes.astype(np.int64)
    _, F0, v20 = _energy(x, v, sizes, n, spec)
    c0 = 2.0 * (F0 + 0.5 * v20)
    c_F = 1.0 + np.sqrt(max(c0, 0.0)) / 2.0

    rec = TraceRecorder()
    merges_since = 0

    def record(t):
        chi, F, v2 = _energy(x, v, sizes, n, spec)
        vc = np.repeat(v, sizes)
        dz = zeta - chi
        w2 = float(np.mean(dz * dz))
        w = np.sqrt(w2)
        rec.add({
            "t": t, "clusters": float(x.size), "merges": float(merges_since),
            "W2sq": w2, "W2": w, "K": float(-2.0 * np.mean(dz * vc)), "v2": v2,
            "F": F, "H": F + 0.5 * v2, "E": w2 + v2,
            "JV": float(np.mean(dz * (ref_V - spec.confinement.derivative(chi)))),
            "JW": float(np.mean(dz * (ref_W - interaction_field(chi, spec)))),
            "com": float(np.mean(chi)), "com_v": float(np.dot(sizes, v)) / n,
            "cF_ratio": (F - F_ref) / w if w > 0 else np.nan, "cF_bound": c_F,
        })

    record(st0.t)
    events = []
    for k in range(1, cfg.n_steps + 1):
        t = st0.t + k * cfg.dt
        x, v = _rk4_clusters(x, v, sizes, n, spec, cfg.dt)
        if np.any(np.diff(x) <= default_cluster_tol(x)):
            ke_before = float(np.dot(sizes, v * v)) / (2.0 * n)
            _, F_before, _ = _energy(np.sort(x), v, sizes[np.argsort(x, kind="stable")], n, spec)
            x, v, s, ev = kernels.merge_cascade(x, v, sizes.astype(float), default_cluster_tol(x))
            sizes = np.rint(s).astype(np.int64)
            _, F_after, v2_after = _energy(x, v, sizes, n, spec)
            ke_after = 0.5 * v2_after
            events.append((t, len(ev), ke_before - ke_after, kinetic_drop(ev, n),
                           F_before + ke_before, F_after + ke_after))
            merges_since += len(ev)
        if k % cfg.record_every == 0:
            record(t)
            merges_since = 0

    trace = rec.freeze({"dt": cfg.dt, "n": n, "gamma": g, "c0": c0, "c_F": c_F,
                        "solver": "sticky"})
    tt = trace.t
    trace = trace.with_column("energy_residual", energy_residual(tt, trace["H"], trace["v2"], g))
    ineq = np.full(tt.size, np.nan)
    if tt.size > 1:
        K = trace["K"]
        ineq[:-1] = (0.5 * np.diff(K) / np.diff(tt) + 0.5 * g * K[:-1]
                     + trace["JV"][:-1] + trace["JW"][:-1] - trace["v2"][:-1])
    trace = trace.with_column("ineq_residual", ineq)
    trace = trace.with_column("h3_average", h3_running_average(tt, trace["cF_bound"]))
    trace.events = np.array(events, dtype=float).reshape(-1, 6)
    trace.meta["final_state"] = StickyState.from_arrays(grid, x, v, sizes, tt[-1])
    return trace


def first_merge_time(trace):
    return float(trace.events[0, 0]) if len(trace.events) else None


def single_cluster_time(trace):
    """First recorded time with one cluster, or None."""
    idx = np.flatnonzero(trace["clusters"] == 1)
    return float(trace.t[idx[0]]) if idx.size else None


def uniform_state(n, a=-1.0, b=1.0, velocity=0.0):
    """All-singleton sticky state at the midpoint quantiles of Uniform(a, b)."""
    grid = Grid(n)
    chi = a + (b - a) * grid.nodes
    return StickyState.from_lagrangian(
        LagrangianState(QuantileMeasure(grid, chi), np.full(n, float(velocity))))
