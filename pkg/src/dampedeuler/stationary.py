"""Minimizers of the free energy in quantile form.

Pressureless Newtonian and quadratic cases have closed forms.  With a
pressure law the Euler-Lagrange equation ``F[chi] = 0`` is solved by damped
Newton iteration on the quantile vector, started from a Gaussian profile of
the matching width.
"""

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtri

from .errors import Inadmissible, NonConvergent
from .measure import QuantileMeasure
from .model import force_array


def _root(fn, lo=-1.0, hi=1.0):
    """Root of an increasing scalar function, widening the bracket as needed."""
    for _ in range(200):
        if fn(lo) <= 0 <= fn(hi):
            return brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        lo, hi = 2 * lo - 1.0, 2 * hi + 1.0
    raise NonConvergent("could not bracket the root of V'")


def potential_minimizer(V):
    if V.kind == "quadratic":
        return 0.0
    return _root(lambda x: float(V.derivative(np.array([x]))[0]))


def _pressureless(spec, grid, center):
    V, W = spec.confinement, spec.interaction
    n = grid.n
    repulsive = W.kind == "newtonian" and W.coefficient < 0
    if not spec.has_confinement:
        # every admissible interaction collapses to a point at the conserved center
        return np.full(n, float(center))
    if repulsive:
        # with distinct nodes the interaction field is exactly s (2 eta - 1)
        target = -W.coefficient * grid.centered_nodes
        if V.kind == "quadratic":
            return target / V.coefficient
        return np.array([_root(lambda x, b=b: float(V.derivative(np.array([x]))[0]) - b)
                         for b in target])
    return np.full(n, potential_minimizer(V))


def _jacobian(chi, spec, eps=1e-7):
    """Dense force Jacobian: analytic pressure band plus the potential part."""
    n = chi.size
    J = np.zeros((n, n))
    m = spec.pressure_exponent
    if m is not None:
        d = np.diff(chi)
        # dP_{i+1/2}/dchi_{i+1} = -m n (n d_i)^(-m-1) = -dP_{i+1/2}/dchi_i
        k = m * n * n * (n * d) ** (-m - 1.0)
        idx = np.arange(n - 1)
        J[idx, idx] += k
        J[idx, idx + 1] -= k
        J[idx + 1, idx] -= k
        J[idx + 1, idx + 1] += k
    V, W = spec.confinement, spec.interaction
    if V.kind == "quadratic":
        J[np.diag_indices(n)] += V.coefficient
    elif V.kind == "tabulated":
        J[np.diag_indices(n)] += (V.derivative(chi + eps) - V.derivative(chi - eps)) / (2 * eps)
    if W.kind == "quadratic":
        J += W.coefficient * (np.eye(n) - 1.0 / n)
    elif W.kind == "tabulated":
        diff = chi[:, None] - chi[None, :]
        second = (W.derivative(diff + eps) - W.derivative(diff - eps)) / (2 * eps) / n
        np.fill_diagonal(second, 0.0)
        J += np.diag(second.sum(axis=1)) - second
    return J


def _initial_width(spec):
    c = spec.c_V + max(spec.c_W, 0.0) if spec.has_confinement else spec.c_W
    return 1.0 / np.sqrt(max(c, 1e-3))


def newton_profile(spec, grid, center=0.0, chi0=None, tol=1e-10, max_iter=200):
    """Solve ``F[chi] = 0`` by damped Newton with monotone backtracking.

    Without confinement the system is translation invariant; the last
    equation is replaced by ``mean(chi) = center``.
    """
    n = grid.n
    if chi0 is None:
        base = potential_minimizer(spec.confinement) if spec.has_confinement else center
        chi0 = base + _initial_width(spec) * ndtri(grid.nodes)
    chi = np.array(chi0, dtype=float)
    pin = not spec.has_confinement

    def residual(c):
        r = force_array(c, spec)
        if pin:
            r = r.copy()
            r[-1] = np.mean(c) - center
        return r

    r = residual(chi)
    for _ in range(max_iter):
        err = float(np.max(np.abs(r)))
        if err <= tol:
            return chi, err
        J = _jacobian(chi, spec)
        if pin:
            J[-1, :] = 1.0 / n
        step = np.linalg.solve(J, -r)
        lam = 1.0
        while lam > 1e-12:
            trial = chi + lam * step
            if np.all(np.diff(trial) > 0):
                rt = residual(trial)
                if np.max(np.abs(rt)) < (1 - 1e-4 * lam) * err or lam < 1e-6:
                    break
            lam *= 0.5
        else:
            break
        chi, r = trial, rt
    err = float(np.max(np.abs(r)))
    if err <= tol:
        return chi, err
    raise NonConvergent(f"stationary profile residual {err:.3g} above target {tol:g}")


def stationary_state(spec, grid, center=0.0, tol=1e-10):
    """Quantile profile of the free-energy minimizer.

    ``center`` fixes the center of mass when there is no confinement (the
    minimizer is then only unique up to translation).
    """
    if not spec.admissible:
        raise Inadmissible("stationary states need an admissible model")
    if spec.pressureless:
        return QuantileMeasure(grid, _pressureless(spec, grid, center))
    chi, _ = newton_profile(spec, grid, center, tol=tol)
    return QuantileMeasure(grid, chi)


def support_residual(m, spec):
    """``max |F[chi]|`` over the cells, the Euler-Lagrange residual."""
    return float(np.max(np.abs(force_array(m.chi, spec))))
