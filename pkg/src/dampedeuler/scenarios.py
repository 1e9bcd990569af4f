"""Named, file-configured experiments and their persisted outputs.

A scenario file is TOML with top-level ``name``, ``solver`` and optional
``weights``, plus sections ``[model]``, ``[grid]``, ``[initial]``,
``[stepper]``, ``[reference]`` and ``[output]``.  :func:`load_config`
applies dotted ``key=value`` overrides before validation, so an invalid
override never starts a run.
"""

import copy
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .diagnostics import (
    LyapunovTrace,
    center_of_mass_oracle,
    decay_bound_ratio,
    fit_rate,
    toy_lyapunov,
)
from .errors import ConfigError, Inadmissible, NonPositiveData, ShockFormed
from .euler import StepperConfig, auto_weights, default_dt, run
from .gradient_flow import gf_rhs, gf_run, overdamped_dt, overdamped_experiment
from .measure import Grid, QuantileMeasure
from .model import LagrangianState, ModelSpec, Potential, lyapunov_weights
from .stationary import stationary_state, support_residual
from .sticky import StickyState, single_cluster_time, sticky_run

SOLVERS = ("euler_smooth", "sticky", "gradient_flow", "overdamped", "toy_oscillator")
SHIPPED_DIR = Path(__file__).with_name("scenario_files")
OUTPUT_ENV = "DAMPEDEULER_OUTPUT_DIR"


# -- configuration -----------------------------------------------------------

@dataclass
class ScenarioConfig:
    name: str
    solver: str
    model: dict
    grid_n: int
    initial: dict
    stepper: dict = field(default_factory=dict)
    reference: dict = field(default_factory=lambda: {"kind": "stationary_auto"})
    output: dict = field(default_factory=dict)
    weights: str = None
    checks: dict = field(default_factory=dict)

    @property
    def gammas(self):
        return [float(g) for g in self.model.get("gammas", [self.model.get("gamma")])]

    def spec(self, gamma=None):
        return build_spec(self.model, gamma)

    def grid(self):
        return Grid(self.grid_n)

    def stepper_config(self, gamma=None):
        g = self.gammas[0] if gamma is None else gamma
        st = self.stepper
        dt = float(st.get("dt", default_dt(g)))
        return StepperConfig(dt, st.get("method", "rk4"), float(st.get("monotonicity_tol", 0.0)),
                             float(st.get("max_time", 1.0)), int(st.get("record_every", 1)))

    def with_gamma(self, gamma):
        model = dict(self.model, gamma=float(gamma))
        model.pop("gammas", None)
        return replace(self, model=model)


def _potential(desc, where):
    if desc is None or desc == "none":
        return Potential.none()
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ConfigError("expected a table with 'kind'", where)
    kind = desc["kind"]
    c = desc.get("c", 1.0)
    if not isinstance(c, (int, float)):
        raise ConfigError("coefficient must be a number", f"{where}.c")
    if kind == "none":
        return Potential.none()
    if kind == "quadratic":
        return Potential.quadratic(float(c))
    if kind == "newtonian":
        return Potential.newtonian(float(c))
    raise ConfigError(f"unknown potential kind {kind!r} (none, quadratic, newtonian)", f"{where}.kind")


def build_spec(model, gamma=None):
    g = model.get("gamma") if gamma is None else gamma
    if g is None:
        g = model.get("gammas", [None])[0]
    if not isinstance(g, (int, float)) or not g > 0:
        raise ConfigError("gamma must be a positive number", "model.gamma")
    m = model.get("pressure_exponent", "none")
    if m == "none":
        m = None
    elif not isinstance(m, (int, float)) or m <= 0:
        raise ConfigError("must be a positive number or 'none'", "model.pressure_exponent")
    try:
        return ModelSpec(float(g), None if m is None else float(m),
                         _potential(model.get("confinement"), "model.confinement"),
                         _potential(model.get("interaction"), "model.interaction"),
                         unsafe=bool(model.get("unsafe", False)))
    except ConfigError:
        raise
    except Inadmissible as exc:
        raise ConfigError(str(exc), "model") from exc
    except ValueError as exc:
        raise ConfigError(str(exc), "model") from exc


def _set_dotted(d, key, value):
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        nxt = cur.get(p)
        if not isinstance(nxt, dict):
            nxt = {}
            cur[p] = nxt
        cur = nxt
    cur[parts[-1]] = value


def parse_override(text):
    """``"a.b=1.5"`` -> ``("a.b", 1.5)``; values are read as TOML, else string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def config_from_dict(raw):
    raw = copy.deepcopy(raw)
    for key in ("name", "solver", "model", "grid", "initial"):
        if key not in raw:
            raise ConfigError("required field missing", key)
    solver = raw["solver"]
    if solver not in SOLVERS:
        raise ConfigError(f"must be one of {SOLVERS}", "solver")
    n = raw["grid"].get("n") if isinstance(raw["grid"], dict) else None
    if not isinstance(n, int) or n < 2:
        raise ConfigError("must be an integer >= 2", "grid.n")
    cfg = ScenarioConfig(
        name=str(raw["name"]), solver=solver, model=dict(raw["model"]), grid_n=n,
        initial=dict(raw["initial"]), stepper=dict(raw.get("stepper", {})),
        reference=dict(raw.get("reference", {"kind": "stationary_auto"})),
        output=dict(raw.get("output", {})), weights=raw.get("weights"),
        checks=dict(raw.get("checks", {})),
    )
    validate_config(cfg)
    return cfg


def load_config(path_or_name, overrides=()):
    """Read a scenario file (or shipped scenario name) and apply overrides."""
    path = Path(path_or_name)
    if not path.exists():
        shipped = SHIPPED_DIR / f"{path_or_name}.toml"
        if not shipped.exists():
            raise ConfigError(f"no such config file or shipped scenario: {path_or_name}")
        path = shipped
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        _set_dotted(raw, key, value)
    return config_from_dict(raw)


def shipped_scenarios():
    return sorted(p.stem for p in SHIPPED_DIR.glob("*.toml"))


def validate_config(cfg):
    """Check solver/spec compatibility and every numeric field up front."""
    if cfg.solver == "overdamped":
        if "gammas" not in cfg.model:
            raise ConfigError("overdamped runs need a list of gammas", "model.gammas")
        if cfg.initial.get("velocity", {}).get("kind", "well_prepared") != "well_prepared":
            raise ConfigError("overdamped runs need well-prepared velocity", "initial.velocity")
    gs = cfg.model.get("gammas")
    if gs is not None and (not isinstance(gs, list) or not gs
                           or not all(isinstance(g, (int, float)) and g > 0 for g in gs)):
        raise ConfigError("must be a nonempty list of positive numbers", "model.gammas")
    spec = cfg.spec()
    if cfg.solver == "sticky" and not spec.pressureless:
        raise ConfigError("sticky dynamics are pressureless only", "model.pressure_exponent")
    if cfg.weights is not None and cfg.weights not in (
            "confinement", "no_confinement", "smooth_1d_repulsive", "toy_center_of_mass"):
        raise ConfigError(f"unknown weights {cfg.weights!r}", "weights")
    st = cfg.stepper
    for key in ("dt", "max_time"):
        if key in st and not (isinstance(st[key], (int, float)) and st[key] > 0):
            raise ConfigError("must be a positive number", f"stepper.{key}")
    if "record_every" in st and not (isinstance(st["record_every"], int) and st["record_every"] >= 1):
        raise ConfigError("must be a positive integer", "stepper.record_every")
    if cfg.solver != "overdamped":
        try:
            cfg.stepper_config()
        except ValueError as exc:
            raise ConfigError(str(exc), "stepper") from exc
    prof = cfg.initial.get("profile")
    if not isinstance(prof, dict) or "kind" not in prof:
        raise ConfigError("expected a table with 'kind'", "initial.profile")
    if prof["kind"] not in PROFILES:
        raise ConfigError(f"unknown profile {prof['kind']!r}", "initial.profile.kind")
    vel = cfg.initial.get("velocity", {"kind": "zero"})
    if vel.get("kind") not in VELOCITIES:
        raise ConfigError(f"unknown velocity {vel.get('kind')!r}", "initial.velocity.kind")
    if cfg.reference.get("kind") not in ("stationary_auto", "delta", "explicit", "none"):
        raise ConfigError("must be stationary_auto, delta, explicit or none", "reference.kind")
    return cfg


# -- initial data ------------------------------------------------------------

def _mixture_quantiles(eta, centers, sd):
    """Quantiles of an equal-weight Gaussian mixture by vectorized bisection."""
    centers = np.asarray(centers, dtype=float)
    lo = np.full(eta.size, centers.min() - 40 * sd)
    hi = np.full(eta.size, centers.max() + 40 * sd)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        cdf = np.mean(ndtr((mid[:, None] - centers[None, :]) / sd), axis=1)
        below = cdf < eta
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _profile(desc, grid, spec):
    kind = desc["kind"]
    eta = grid.nodes
    if kind == "uniform":
        a, b = float(desc.get("a", -1.0)), float(desc.get("b", 1.0))
        return a + (b - a) * eta
    if kind == "gaussian":
        return float(desc.get("mean", 0.0)) + float(desc.get("sd", 1.0)) * ndtri(eta)
    if kind == "point":
        return np.full(grid.n, float(desc.get("x", 0.0)))
    if kind == "two_bump":
        return _mixture_quantiles(eta, desc.get("centers", [-1.0, 1.0]), float(desc.get("sd", 0.3)))
    if kind == "explicit":
        vals = np.asarray(desc["values"], dtype=float)
        if vals.size != grid.n:
            raise ConfigError(f"needs {grid.n} values, got {vals.size}", "initial.profile.values")
        return vals
    # stationary profile plus a smooth monotone-preserving perturbation
    base = stationary_state(spec, grid, center=float(desc.get("center", 0.0))).chi
    mode = int(desc.get("mode", 1))
    return (base + float(desc.get("shift", 0.0))
            + float(desc.get("amplitude", 0.0)) * np.sin(2 * np.pi * mode * eta))


PROFILES = ("uniform", "gaussian", "point", "two_bump", "explicit", "stationary")
VELOCITIES = ("zero", "constant", "sine", "well_prepared", "explicit")


def _velocity(desc, grid, chi, spec):
    kind = desc.get("kind", "zero")
    if kind == "zero":
        return np.zeros(grid.n)
    if kind == "constant":
        return np.full(grid.n, float(desc.get("value", 0.0)))
    if kind == "sine":
        return (float(desc.get("offset", 0.0))
                + float(desc.get("amplitude", 0.1)) * np.sin(2 * np.pi * int(desc.get("mode", 1)) * grid.nodes))
    if kind == "well_prepared":
        return gf_rhs(chi, spec)
    vals = np.asarray(desc["values"], dtype=float)
    if vals.size != grid.n:
        raise ConfigError(f"needs {grid.n} values", "initial.velocity.values")
    return vals


def initial_state(cfg, spec=None):
    spec = spec or cfg.spec()
    grid = cfg.grid()
    chi = _profile(cfg.initial["profile"], grid, spec)
    if np.any(np.diff(chi) < 0):
        raise ConfigError("initial profile is not nondecreasing", "initial.profile")
    v = _velocity(cfg.initial.get("velocity", {"kind": "zero"}), grid, chi, spec)
    return LagrangianState(QuantileMeasure(grid, chi), v)


def reference_measure(cfg, s0, spec=None):
    spec = spec or cfg.spec()
    ref = cfg.reference
    kind = ref.get("kind", "stationary_auto")
    grid = s0.grid
    if kind == "none":
        return None
    if kind == "delta":
        return QuantileMeasure(grid, np.full(grid.n, float(ref.get("x", 0.0))))
    if kind == "explicit":
        return QuantileMeasure(grid, np.asarray(ref["values"], dtype=float))
    # without confinement the minimizer sits at the asymptotic center of mass
    center = float(np.mean(s0.chi) + np.mean(s0.v) / spec.gamma) if not spec.has_confinement else 0.0
    return stationary_state(spec, grid, center=center)


# -- running -----------------------------------------------------------------

def _weights(cfg, spec):
    if cfg.weights is None:
        return auto_weights(spec)
    return lyapunov_weights(spec, cfg.weights)


def _safe_rate(trace, column, **kw):
    try:
        return fit_rate(trace, column, **kw).rate
    except (NonPositiveData, ValueError):
        return None


def _nanmax(a):
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    return float(np.max(a)) if a.size else None


def decay_constant(spec, weights):
    """The exponent ``2 c / q`` guaranteed for the scenario's functional."""
    if weights.scenario == "toy_center_of_mass":
        c = spec.c_V
    elif weights.scenario == "smooth_1d_repulsive":
        c = 1.0
    else:
        c = spec.c_ell
    return 2.0 * c / weights.q


def _run_smooth(cfg, spec, toy=False):
    s0 = initial_state(cfg, spec)
    ref = reference_measure(cfg, s0, spec)
    weights = lyapunov_weights(spec, "toy_center_of_mass") if toy else _weights(cfg, spec)
    scfg = cfg.stepper_config(spec.gamma)
    trace = run(s0, spec, scfg, reference=ref, weights=weights)
    summary = {
        "final_W2": None if ref is None else float(np.sqrt(trace["W2sq"][-1])),
        "max_energy_residual": _nanmax(np.abs(trace["energy_residual"])),
        "max_ineq_residual": _nanmax(trace["ineq_residual"]),
        "rate_E": _safe_rate(trace, "E", rel_floor=1e-12),
    }
    if weights is not None:
        lam = decay_constant(spec, weights)
        summary.update(weights=weights.scenario, alpha=weights.alpha, beta=weights.beta,
                       p=weights.p, q=weights.q, guaranteed_rate=lam)
        col = "J_com" if toy else "G"
        summary["rate_" + col] = _safe_rate(trace, col, rel_floor=1e-12)
        f = trace[col]
        if f[0] > 0:
            summary["bound_ratio_" + col] = decay_bound_ratio(trace, col, lam)
    if toy:
        x, v = center_of_mass_oracle(float(np.mean(s0.chi)), float(np.mean(s0.v)),
                                     spec.gamma, trace.t, spec.c_V)
        summary["oracle_com_error"] = float(np.max(np.abs(x - trace["com"])))
        summary["oracle_com_v_error"] = float(np.max(np.abs(v - trace["com_v"])))
        J_exact = toy_lyapunov(x, v, weights)
        excess = trace["J_com"] - J_exact[0] * np.exp(-decay_constant(spec, weights) * trace.t)
        summary["max_J_excess"] = float(np.max(excess))
    return trace, summary


def _run_sticky(cfg, spec):
    s0 = initial_state(cfg, spec)
    st0 = StickyState.from_lagrangian(s0)
    ref = reference_measure(cfg, s0, spec)
    trace = sticky_run(st0, spec, cfg.stepper_config(spec.gamma), reference=ref)
    ev = trace.events
    drop_err = float(np.max(np.abs(ev[:, 2] - ev[:, 3]))) if len(ev) else 0.0
    h_jump = float(np.max(ev[:, 5] - ev[:, 4])) if len(ev) else 0.0
    final = trace.meta["final_state"]
    summary = {
        "final_clusters": int(trace["clusters"][-1]),
        "single_cluster_time": single_cluster_time(trace),
        "first_merge_time": float(ev[0, 0]) if len(ev) else None,
        "merge_steps": int(len(ev)),
        "final_W2": float(trace["W2"][-1]),
        "kinetic_drop_error": drop_err,
        "max_H_jump_at_merge": h_jump,
        "mass_error": abs(int(np.sum(final.sizes)) - s0.grid.n),
        "c_F": trace.meta["c_F"],
        "max_cF_ratio": _nanmax(trace["cF_ratio"]),
    }
    return trace, summary


def _run_gradient_flow(cfg, spec):
    s0 = initial_state(cfg, spec)
    ref = reference_measure(cfg, s0, spec)
    trace = gf_run(s0.measure, spec, cfg.stepper_config(spec.gamma))
    if ref is not None:
        d = trace.states - ref.chi
        trace = trace.with_column("W2sq", np.mean(d * d, axis=1))
    summary = {
        "max_energy_residual": _nanmax(np.abs(trace["energy_residual"])),
        "max_u2_rate": _nanmax(trace["u2_rate"]),
        "F_nonincreasing": bool(np.all(np.diff(trace["F"]) <= 1e-12)),
        "final_F": float(trace["F"][-1]),
    }
    if ref is not None:
        summary["final_W2"] = float(np.sqrt(trace["W2sq"][-1]))
        summary["stationary_residual"] = support_residual(ref, spec)
    return trace, summary


def _run_overdamped(cfg, spec):
    s0 = initial_state(cfg, spec)
    T = float(cfg.stepper.get("max_time", 1.0))
    gammas = cfg.gammas
    if "dt" in cfg.stepper:
        scfg = StepperConfig(float(cfg.stepper["dt"]), "semi_implicit_damping", 0.0, T,
                             int(cfg.stepper.get("record_every", 1)))
    else:
        scfg = overdamped_dt(s0.chi, spec, gammas, T, cadence=float(cfg.stepper.get("cadence", 1e-3)))
    rep = overdamped_experiment(s0.measure, s0.v, spec, gammas, T, scfg,
                                workers=int(cfg.stepper.get("workers", 1)))
    cols = {"t": rep.reference.t, "F_gf": rep.reference["F"], "G2_gf": rep.reference["G2"]}
    for g, tr in rep.traces.items():
        d = tr.states - rep.reference.states
        cols[f"W2sq_gamma_{g:g}"] = np.mean(d * d, axis=1)
    trace = LyapunovTrace(cols, {"solver": "overdamped"})
    return trace, rep.to_dict()


def run_scenario(cfg, output_dir=None, persist=True):
    """Build, run and (optionally) persist one scenario.

    Returns the trace; the summary record is at ``trace.meta['summary']``
    and the written paths at ``trace.meta['paths']``.
    """
    spec = cfg.spec()
    if cfg.solver == "euler_smooth":
        trace, summary = _run_smooth(cfg, spec)
    elif cfg.solver == "toy_oscillator":
        trace, summary = _run_smooth(cfg, spec, toy=True)
    elif cfg.solver == "sticky":
        trace, summary = _run_sticky(cfg, spec)
    elif cfg.solver == "gradient_flow":
        trace, summary = _run_gradient_flow(cfg, spec)
    else:
        trace, summary = _run_overdamped(cfg, spec)
    summary = {"name": cfg.name, "solver": cfg.solver, "n": cfg.grid_n,
               "gamma": spec.gamma, **summary}
    trace.meta["summary"] = summary
    if persist:
        trace.meta["paths"] = persist_outputs(cfg, trace, summary, output_dir)
    return trace


def output_directory(cfg, output_dir=None):
    return Path(output_dir or cfg.output.get("dir") or os.environ.get(OUTPUT_ENV) or "out")


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_summary(summary, path):
    with open(path, "w") as fh:
        json.dump(jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def persist_outputs(cfg, trace, summary, output_dir=None):
    out = output_directory(cfg, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.name}.csv"
    summary_path = out / f"{cfg.name}_summary.json"
    trace.to_csv(csv_path)
    write_summary(summary, summary_path)
    return {"trace": str(csv_path), "summary": str(summary_path)}


# -- validation suites -------------------------------------------------------

DEFAULT_CHECKS = {
    "euler_smooth": {"max_energy_residual": 1e-3, "max_ineq_residual": 5e-3, "bound_ratio_G": 1.05},
    "toy_oscillator": {"max_J_excess": 1e-6, "oracle_com_error": 1e-8, "bound_ratio_J_com": 1.0 + 1e-6},
    "sticky": {"kinetic_drop_error": 1e-12, "max_H_jump_at_merge": 1e-12, "mass_error": 0},
    "gradient_flow": {"max_energy_residual": 1e-3, "max_u2_rate": 1e-3},
    "overdamped": {},
}


def validate_summary(cfg, summary):
    """Compare summary fields with upper tolerances; return the failures.

    Tolerances come from ``DEFAULT_CHECKS`` merged with the config's
    ``[checks]`` table.  Overdamped runs additionally require ``I``
    decreasing in gamma and ``I <= M`` wherever a bound exists.
    """
    checks = dict(DEFAULT_CHECKS.get(cfg.solver, {}), **cfg.checks)
    failures = []
    for key, tol in checks.items():
        if key.startswith("min_"):
            val = summary.get(key[4:])
            if val is None or val < tol:
                failures.append({"check": key[4:], "value": val, "lower": tol})
            continue
        val = summary.get(key)
        if val is None:
            continue
        if val > tol:
            failures.append({"check": key, "value": val, "tolerance": tol})
    if cfg.solver == "overdamped":
        if not summary["I_decreasing"]:
            failures.append({"check": "I_decreasing", "value": summary["I"]})
        for g, ok in zip(summary["gammas"], summary["I_le_M"]):
            if ok is False:
                failures.append({"check": "I_le_M", "gamma": g})
    if cfg.solver == "sticky" and "expect_single_cluster" in cfg.checks and summary["final_clusters"] != 1:
        failures.append({"check": "final_clusters", "value": summary["final_clusters"]})
    return failures


def sweep_gamma(cfg, gammas, column=None, workers=1):
    """Fitted decay rate of ``column`` for each damping value, ordered by gamma."""
    column = column or ("J_com" if cfg.solver == "toy_oscillator" else "E")
    jobs = [(cfg.with_gamma(g), column) for g in sorted(float(g) for g in gammas)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    return rows


def _sweep_one(job):
    cfg, column = job
    try:
        trace = run_scenario(cfg, persist=False)
    except ShockFormed as exc:
        return {"gamma": cfg.gammas[0], "rate": None, "error": str(exc)}
    fit = fit_rate(trace, column, rel_floor=1e-12)
    return {"gamma": cfg.gammas[0], "rate": fit.rate, "residual": fit.residual,
            "window": list(fit.window)}


def toy_rate_theory(gamma, c_V=1.0):
    """Slowest decay rate of ``x'' + gamma x' + c_V x = 0`` (mode of ``|x|^2``)."""
    disc = gamma * gamma - 4.0 * c_V
    return gamma if disc <= 0 else gamma - math.sqrt(disc)


__all__ = [
    "ScenarioConfig", "load_config", "config_from_dict", "run_scenario", "stationary_state",
    "initial_state", "reference_measure", "validate_summary", "sweep_gamma", "shipped_scenarios",
]
