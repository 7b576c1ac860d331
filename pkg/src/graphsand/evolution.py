"""Time integrators: p-Laplacian flows, the two slope-constrained growth
models, collapse of unstable data, and the convergence experiments.

All schemes are proximal/projected backward Euler with a fixed step.  The
exact solutions of the growth models are piecewise linear in time, so the
global error is O(dt) and concentrated at the critical times where the
active edge set changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import WeightedGraph, field_values, nu_norm
from .proximal import ConstraintSet, DykstraProjector, is_stable, \
    max_relative_slope, resolvent_p

__all__ = [
    "SourceSchedule",
    "Trajectory",
    "MassBalanceReport",
    "TruncationError",
    "solve_p_flow",
    "solve_growth",
    "solve_collapse",
    "mass_balance",
    "converge_p_experiment",
    "collapse_via_p_experiment",
]

# an edge counts as binding when its gap is within this many projection
# tolerances of the bound; activation flips are recorded as events
_EVENT_BAND = 10.0


class TruncationError(RuntimeError):
    """The active support reached the guard band of a truncated lattice."""


@dataclass(frozen=True)
class SourceSchedule:
    """Piecewise-constant-in-time vertex source f(t, .).

    Segments are (t_start, t_end, values); f(t) is the field of the segment
    containing t and zero outside all segments.  Segment ends are open so
    adjacent segments do not overlap.
    """

    graph: WeightedGraph
    segments: tuple[tuple[float, float, np.ndarray], ...]

    def __post_init__(self):
        segs = []
        for t0, t1, vals in self.segments:
            t0, t1 = float(t0), float(t1)
            if not (t0 < t1):
                raise ValueError(f"segment [{t0}, {t1}) is empty")
            segs.append((t0, t1, field_values(self.graph, vals)))
        segs.sort(key=lambda s: s[0])
        for (_, e0, _), (s1, _, _) in zip(segs, segs[1:]):
            if s1 < e0 - 1e-15:
                raise ValueError("source segments overlap")
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def zero(cls, graph: WeightedGraph) -> "SourceSchedule":
        return cls(graph, ())

    @classmethod
    def constant(cls, graph: WeightedGraph, values, t_start: float = 0.0,
                 t_end: float = math.inf) -> "SourceSchedule":
        return cls(graph, ((t_start, t_end, field_values(graph, values)),))

    def __call__(self, t: float) -> np.ndarray:
        for t0, t1, vals in self.segments:
            if t0 <= t < t1:
                return vals
        return np.zeros(self.graph.n_vertices)

    def boundaries(self) -> list[float]:
        out = set()
        for t0, t1, _ in self.segments:
            out.add(t0)
            if math.isfinite(t1):
                out.add(t1)
        return sorted(out)


@dataclass
class Trajectory:
    """Ordered (time, state) samples plus per-step bookkeeping.

    states[k] is the vertex field at times[k].  step_times/mass_residuals
    hold one entry per integrator step: the residual of the discrete mass
    balance over that step.  events lists (time, edge, "activated" |
    "deactivated") markers for slope constraints switching state.
    """

    graph: WeightedGraph
    times: np.ndarray
    states: np.ndarray
    step_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    mass_residuals: np.ndarray = field(default_factory=lambda: np.empty(0))
    events: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def state_at(self, t: float, atol: float = 1e-9) -> np.ndarray:
        """State at a sampled time (nearest sample within atol)."""
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > atol:
            raise KeyError(f"no sample within {atol} of t={t}")
        return self.states[k]

    def first_time(self, vertex, threshold: float, slack: float = 1e-9) -> float:
        """First sampled time with state[vertex] >= threshold - slack."""
        col = self.graph.vertex_id(vertex)
        hits = np.flatnonzero(self.states[:, col] >= threshold - slack)
        if len(hits) == 0:
            raise ValueError(f"{vertex!r} never reaches {threshold}")
        return float(self.times[hits[0]])


@dataclass(frozen=True)
class MassBalanceReport:
    step_times: np.ndarray
    residuals: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residuals))) if len(self.residuals) else 0.0


def time_grid(t_start: float, t_end: float, dt: float,
              breakpoints=()) -> np.ndarray:
    """Step grid from t_start to t_end with fixed dt, split at breakpoints.

    Within each span the step count is rounded when dt (nearly) divides the
    span so that critical times are hit exactly; otherwise the last step of
    the span is shortened.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not t_end > t_start:
        raise ValueError("need t_end > t_start")
    marks = [t_start]
    for b in sorted(set(float(b) for b in breakpoints)):
        if t_start + 1e-12 < b < t_end - 1e-12:
            marks.append(b)
    marks.append(t_end)
    times = [t_start]
    for a, b in zip(marks, marks[1:]):
        span = b - a
        m = span / dt
        exact_fit = abs(m - round(m)) < 1e-9 * max(1.0, m)
        steps = max(1, int(round(m))) if exact_fit else int(math.ceil(m - 1e-12))
        h = span / steps if exact_fit else dt
        for k in range(1, steps):
            times.append(a + k * h)
        times.append(b)
    return np.asarray(times)


def _binding_set(proj: DykstraProjector, values: np.ndarray, tol: float) -> np.ndarray:
    return proj.binding_mask(values, _EVENT_BAND * tol)


def _check_guard(g: WeightedGraph, values: np.ndarray, exact: bool):
    if not g.guard_vertices:
        return
    idx = [g.vertex_id(v) for v in sorted(g.guard_vertices)]
    band = np.abs(values[idx])
    bad = band > 0.0 if exact else band > 1e-12
    if np.any(bad):
        raise TruncationError(
            "truncation too small: the active support reached the guard band "
            f"(max |u| there {band.max():.3e})")


def solve_growth(g: WeightedGraph, K: ConstraintSet, u0, f: SourceSchedule,
                 T: float, dt: float, tol: float = 1e-10,
                 max_iter: int = 100_000) -> Trajectory:
    """Projected backward Euler for the slope-constrained growth model.

    Parameters
    ----------
    g, K : graph and the stable set to project onto.
    u0 : initial datum; must be stable for K.
    f : piecewise-constant source schedule, sampled at the left endpoint of
        every step (the grid is split at segment boundaries).
    T, dt : final time and step size.

    Returns
    -------
    Trajectory with one sample per step, per-step mass residuals, and
    activation events.
    """
    u = field_values(g, u0).copy()
    if not is_stable(u, K, 1e-8):
        raise ValueError("initial datum not stable for the constraint set")
    grid = time_grid(0.0, T, dt, f.boundaries())
    proj = DykstraProjector(g, K)
    deg = g.degrees

    states = np.empty((len(grid), g.n_vertices))
    states[0] = u
    residuals = np.empty(len(grid) - 1)
    events: list = []
    binding = _binding_set(proj, u, tol)
    for n in range(len(grid) - 1):
        t0, t1 = grid[n], grid[n + 1]
        h = t1 - t0
        fv = f(t0)
        z = u + h * fv
        u = proj.project(z, tol=tol, max_iter=max_iter, warm=True)
        residuals[n] = float(np.dot(deg, u - states[n]) - h * np.dot(deg, fv))
        now = _binding_set(proj, u, tol)
        if not np.array_equal(now, binding):
            for e in np.flatnonzero(now != binding):
                kind = "activated" if now[e] else "deactivated"
                events.append((float(t1), g.edges[e], kind))
            binding = now
        states[n + 1] = u
    _check_guard(g, u, exact=True)
    return Trajectory(g, grid, states, grid[1:], residuals, events)


def solve_collapse(g: WeightedGraph, K: ConstraintSet, u0, dt: float,
                   tol: float = 1e-10,
                   max_iter: int = 100_000) -> tuple[np.ndarray, Trajectory]:
    """Collapse of an unstable datum through the rescaled projected flow.

    With L the maximal relative slope of u0, integrates the projected flow
    driven by the source v/t from v(1/L) = u0/L up to t = 1 and returns
    (v(1), trajectory).  A datum that is already stable (L <= 1) is returned
    unchanged with a single-sample trajectory.
    """
    u0v = field_values(g, u0).copy()
    L = max_relative_slope(u0v, K)
    if L <= 1.0:
        empty = Trajectory(g, np.array([1.0]), u0v[None, :].copy())
        return u0v, empty
    tau = 1.0 / L
    grid = time_grid(tau, 1.0, dt)
    proj = DykstraProjector(g, K)
    deg = g.degrees

    v = tau * u0v
    states = np.empty((len(grid), g.n_vertices))
    states[0] = v
    residuals = np.empty(len(grid) - 1)
    events: list = []
    binding = _binding_set(proj, v, tol)
    for n in range(len(grid) - 1):
        t0, t1 = grid[n], grid[n + 1]
        h = t1 - t0
        fv = v / t0  # semi-implicit: source evaluated at the step start
        z = v + h * fv
        v = proj.project(z, tol=tol, max_iter=max_iter, warm=True)
        residuals[n] = float(np.dot(deg, v - states[n]) - h * np.dot(deg, fv))
        now = _binding_set(proj, v, tol)
        if not np.array_equal(now, binding):
            for e in np.flatnonzero(now != binding):
                kind = "activated" if now[e] else "deactivated"
                events.append((float(t1), g.edges[e], kind))
            binding = now
        states[n + 1] = v
    _check_guard(g, v, exact=True)
    traj = Trajectory(g, grid, states, grid[1:], residuals, events)
    return v, traj


def solve_p_flow(g: WeightedGraph, p: float, model: str, u0, f: SourceSchedule,
                 T: float, dt: float, tol: float = 1e-10) -> Trajectory:
    """Backward Euler for the p-Laplacian flow u' = Delta_p u + f.

    Each step is one resolvent evaluation with lambda equal to the step
    length.  The smooth flow has no finite propagation speed, so on
    truncated lattices the guard check allows magnitudes up to 1e-12.
    """
    u = field_values(g, u0).copy()
    grid = time_grid(0.0, T, dt, f.boundaries())
    deg = g.degrees
    states = np.empty((len(grid), g.n_vertices))
    states[0] = u
    residuals = np.empty(len(grid) - 1)
    for n in range(len(grid) - 1):
        t0, t1 = grid[n], grid[n + 1]
        h = t1 - t0
        fv = f(t0)
        u = resolvent_p(g, p, model, h, u + h * fv, tol=tol)
        residuals[n] = float(np.dot(deg, u - states[n]) - h * np.dot(deg, fv))
        states[n + 1] = u
    _check_guard(g, u, exact=False)
    return Trajectory(g, grid, states, grid[1:], residuals)


def mass_balance(traj: Trajectory, f: SourceSchedule | None,
                 g: WeightedGraph) -> MassBalanceReport:
    """Recompute per-step mass residuals from the sampled trajectory.

    r_n = sum_x (u^{n+1} - u^n) d_x  -  h * sum_x f(t_n) d_x; for collapse
    trajectories pass f=None and the source is the rescaled state v^n / t_n.
    """
    deg = g.degrees
    times, states = traj.times, traj.states
    res = np.empty(len(times) - 1)
    for n in range(len(times) - 1):
        h = times[n + 1] - times[n]
        if f is None:
            fv = states[n] / times[n]
        else:
            fv = f(times[n])
        res[n] = float(np.dot(deg, states[n + 1] - states[n]) - h * np.dot(deg, fv))
    return MassBalanceReport(times[1:], res)


def converge_p_experiment(g: WeightedGraph, model: str, u0, f: SourceSchedule,
                          p_list, T: float, dt: float,
                          tol: float = 1e-10) -> list[tuple[float, float]]:
    """sup-in-time nu-norm gap between the p-flow and the limit growth model.

    Runs the growth model once and one p-flow per entry of the increasing
    p_list, comparing states at the shared step times.
    """
    p_list = list(p_list)
    if any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError("p_list must be increasing")
    K = ConstraintSet.uniform(g) if model == "G" \
        else ConstraintSet.inverse_sqrt_weight(g)
    if not is_stable(u0, K, 1e-8):
        raise ValueError("initial datum not stable for the matching constraint set")
    limit = solve_growth(g, K, u0, f, T, dt, tol=tol)
    out = []
    for p in p_list:
        flow = solve_p_flow(g, p, model, u0, f, T, dt, tol=tol)
        if len(flow.times) != len(limit.times):  # pragma: no cover
            raise RuntimeError("flows sampled on different grids")
        errs = [nu_norm(g, flow.states[k] - limit.states[k])
                for k in range(len(limit.times))]
        out.append((float(p), float(max(errs))))
    return out


def collapse_via_p_experiment(g: WeightedGraph, K: ConstraintSet, u0, p: float,
                              t_probe_list, dt: float,
                              tol: float = 1e-10) -> list[tuple[float, float]]:
    """Distance of the source-free p-flow to the collapse limit at probe times."""
    probes = sorted(float(t) for t in t_probe_list)
    if not probes or probes[0] <= 0:
        raise ValueError("probe times must be positive")
    u_inf, _ = solve_collapse(g, K, u0, dt, tol=tol)
    model = K.model()
    flow = solve_p_flow(g, p, model, u0, SourceSchedule.zero(g), probes[-1], dt,
                        tol=tol)
    return [(t, nu_norm(g, flow.state_at(t, atol=dt) - u_inf)) for t in probes]
