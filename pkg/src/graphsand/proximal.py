"""Slope-constraint sets, weighted projection onto them, and the p-energy
resolvent: the two backward-Euler building blocks.

The projection is Dykstra's cyclic scheme over the per-edge interval
constraints in the degree-weighted inner product.  Each single-edge
projection has a closed form, and the per-edge correction memory is kept as
a scalar multiplier mu_e with v = z - D^{-1} A' mu maintained exactly, which
makes the iteration mass-conserving to machine precision and lets solvers
warm-start the multipliers across time steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .calculus import abs_power, model_weight_factor, signed_power
from .graph import WeightedGraph, field_values

__all__ = [
    "ConstraintSet",
    "ProjectionError",
    "ResolventError",
    "is_stable",
    "max_relative_slope",
    "DykstraProjector",
    "project",
    "project_oracle",
    "resolvent_p",
]

KINDS = ("uniform", "inverse_sqrt_weight", "inverse_weight", "custom")


class ProjectionError(RuntimeError):
    """Dykstra failed to reach the requested tolerance."""


class ResolventError(RuntimeError):
    """Newton iteration for the p-energy resolvent failed."""


@dataclass(frozen=True)
class ConstraintSet:
    """Per-edge slope bounds c_xy > 0 encoding a stable-configuration set.

    kind "uniform" bounds every slope by 1; "inverse_sqrt_weight" by
    1/sqrt(w_xy); "inverse_weight" by 1/w_xy; "custom" takes a user table.
    """

    graph: WeightedGraph
    kind: str
    bounds: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        b = np.asarray(self.bounds, dtype=float)
        if b.shape != (self.graph.n_edges,):
            raise ValueError(f"expected {self.graph.n_edges} bounds, got {b.shape}")
        if np.any(b <= 0) or not np.all(np.isfinite(b)):
            raise ValueError("slope bounds must be strictly positive")
        object.__setattr__(self, "bounds", b)

    @classmethod
    def uniform(cls, g: WeightedGraph) -> "ConstraintSet":
        return cls(g, "uniform", np.ones(g.n_edges))

    @classmethod
    def inverse_sqrt_weight(cls, g: WeightedGraph) -> "ConstraintSet":
        return cls(g, "inverse_sqrt_weight", 1.0 / np.sqrt(g.weights))

    @classmethod
    def inverse_weight(cls, g: WeightedGraph) -> "ConstraintSet":
        return cls(g, "inverse_weight", 1.0 / g.weights)

    @classmethod
    def custom(cls, g: WeightedGraph, bounds) -> "ConstraintSet":
        from .graph import _edge_lengths
        return cls(g, "custom", _edge_lengths(g, bounds))

    @classmethod
    def from_kind(cls, g: WeightedGraph, kind: str) -> "ConstraintSet":
        aliases = {"uniform": cls.uniform,
                   "inverse_sqrt_weight": cls.inverse_sqrt_weight,
                   "inv-sqrt-w": cls.inverse_sqrt_weight,
                   "inverse_weight": cls.inverse_weight,
                   "inv-w": cls.inverse_weight}
        try:
            return aliases[kind](g)
        except KeyError:
            raise ValueError(f"unknown constraint kind {kind!r}")

    def model(self) -> str:
        """p-energy model whose limit this constraint set is."""
        if self.kind == "uniform":
            return "G"
        if self.kind == "inverse_sqrt_weight":
            return "w"
        raise ValueError(f"no p-energy model matches constraint kind {self.kind!r}")

    def gaps(self, values: np.ndarray) -> np.ndarray:
        idx = self.graph.edge_index
        return values[idx[:, 1]] - values[idx[:, 0]]


def is_stable(u, K: ConstraintSet, tol: float = 1e-9) -> bool:
    """True iff |u(y) - u(x)| <= c_xy + tol on every edge."""
    vals = field_values(K.graph, u)
    return bool(np.all(np.abs(K.gaps(vals)) <= K.bounds + tol))


def max_relative_slope(u, K: ConstraintSet) -> float:
    """max over edges of |u(y) - u(x)| / c_xy: the L of the collapse setup."""
    vals = field_values(K.graph, u)
    return float(np.max(np.abs(K.gaps(vals)) / K.bounds))


class DykstraProjector:
    """Cyclic Dykstra projection onto a slope polytope, with reusable state.

    A fresh instance performs the standard cold-start iteration.  Solvers
    keep one instance per run and pass warm=True so the multipliers carry
    over between consecutive, nearly identical projections.
    """

    def __init__(self, g: WeightedGraph, K: ConstraintSet):
        if K.graph is not g:
            raise ValueError("constraint set belongs to a different graph")
        self.graph = g
        self.K = K
        idx = g.edge_index
        self._i = idx[:, 0]
        self._j = idx[:, 1]
        deg = g.degrees
        inv_di = 1.0 / deg[self._i]
        inv_dj = 1.0 / deg[self._j]
        self._invsum = inv_di + inv_dj
        self._coef = 1.0 / self._invsum
        self._bounds = K.bounds
        # plain-float copies for the sweep loop
        self._il = [int(k) for k in self._i]
        self._jl = [int(k) for k in self._j]
        self._invdil = [float(x) for x in inv_di]
        self._invdjl = [float(x) for x in inv_dj]
        self._invsuml = [float(x) for x in self._invsum]
        self._coefl = [float(x) for x in self._coef]
        self._cl = [float(x) for x in K.bounds]
        self.mu = [0.0] * g.n_edges

    def reset(self):
        self.mu = [0.0] * self.graph.n_edges

    def binding_mask(self, values: np.ndarray, band: float) -> np.ndarray:
        """Edges whose gap magnitude is within `band` of the bound (or past it)."""
        gaps = np.abs(values[self._j] - values[self._i])
        return gaps >= self._bounds - band

    def _violations(self, values: np.ndarray, tol: float) -> np.ndarray:
        gaps = values[self._j] - values[self._i]
        return np.abs(gaps) > self._bounds + tol

    def project(self, z, tol: float = 1e-10, max_iter: int = 100_000,
                warm: bool = False) -> np.ndarray:
        """Weighted projection of z onto the polytope.

        Returns argmin over the polytope of (1/2) sum_x d_x (v_x - z_x)^2.
        Stops when a full sweep moves the iterate by at most tol in the
        weighted norm and the result is stable at tol.
        """
        zv = field_values(self.graph, z)
        if not warm:
            self.reset()
            if not np.any(self._violations(zv, tol)):
                # tolerance-inclusive membership: binding input is returned as is
                return zv.copy()

        v = zv.copy()
        mu = self.mu
        if warm and any(m != 0.0 for m in mu):
            np.add.at(v, self._i, np.asarray(mu) / self.graph.degrees[self._i])
            np.add.at(v, self._j, -np.asarray(mu) / self.graph.degrees[self._j])

        active = sorted(set(
            [k for k, m in enumerate(mu) if m != 0.0]
            + [int(k) for k in np.flatnonzero(self._violations(v, tol))]))
        if not active:
            self.mu = mu
            return v

        il, jl = self._il, self._jl
        invdi, invdj = self._invdil, self._invdjl
        invsum, coef, cl = self._invsuml, self._coefl, self._cl
        vl = [float(x) for x in v]
        tol_sq = tol * tol
        sweeps = 0
        change = np.inf
        while True:
            # inner sweeps over the current active list, canonical order
            while True:
                if sweeps >= max_iter:
                    raise ProjectionError(
                        f"projection did not converge within {max_iter} sweeps "
                        f"(residual change {np.sqrt(change):.3e})")
                sweeps += 1
                change = 0.0
                for e in active:
                    i = il[e]
                    j = jl[e]
                    m = mu[e]
                    gap = vl[j] - vl[i] + m * invsum[e]
                    c = cl[e]
                    if gap > c:
                        m_new = (gap - c) * coef[e]
                    elif gap < -c:
                        m_new = (gap + c) * coef[e]
                    else:
                        m_new = 0.0
                    dmu = m_new - m
                    if dmu != 0.0:
                        vl[i] += dmu * invdi[e]
                        vl[j] -= dmu * invdj[e]
                        change += dmu * dmu * invsum[e]
                        mu[e] = m_new
                if change <= tol_sq:
                    break
            # constraints outside the active list may have been pushed past
            # their bound; fold them in and continue until globally stable
            v = np.asarray(vl)
            newly = np.flatnonzero(self._violations(v, tol))
            fresh = [int(k) for k in newly if k not in set(active)]
            if not fresh:
                break
            active = sorted(set(active).union(fresh))
        self.mu = mu
        return v


def project(g: WeightedGraph, K: ConstraintSet, z, tol: float = 1e-10,
            max_iter: int = 100_000) -> np.ndarray:
    """Cold-start Dykstra projection of z onto the constraint polytope."""
    return DykstraProjector(g, K).project(z, tol=tol, max_iter=max_iter)


def project_oracle(g: WeightedGraph, K: ConstraintSet, z) -> np.ndarray:
    """Exact projection by enumerating active-set sign patterns.

    Every subset of edge constraints that can be active at the minimizer
    (independent gradients, hence forests) is solved as an
    equality-constrained weighted least-squares system for each sign
    assignment, and the KKT point that is primal and dual feasible with the
    smallest objective wins.  Independent of the Dykstra path; supports at
    most 12 edges.
    """
    if g.n_edges > 12:
        raise ValueError(f"oracle supports at most 12 edges, graph has {g.n_edges}")
    zv = field_values(g, z)
    n, E = g.n_vertices, g.n_edges
    idx = g.edge_index
    c = K.bounds
    D = g.degrees

    gaps0 = zv[idx[:, 1]] - zv[idx[:, 0]]
    if np.all(np.abs(gaps0) <= c + 1e-12):
        return zv.copy()

    def objective(v):
        return 0.5 * float(np.dot(D, (v - zv) ** 2))

    def is_forest(edges):
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in edges:
            ra, rb = find(int(idx[e, 0])), find(int(idx[e, 1]))
            if ra == rb:
                return False
            parent[ra] = rb
        return True

    best_v = None
    best_obj = np.inf
    feas_tol = 1e-9
    for k in range(1, min(E, n - 1) + 1):
        for subset in combinations(range(E), k):
            if not is_forest(subset):
                continue
            rows = np.zeros((k, n))
            for r, e in enumerate(subset):
                rows[r, idx[e, 0]] = -1.0
                rows[r, idx[e, 1]] = 1.0
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = np.diag(D)
            kkt[:n, n:] = rows.T
            kkt[n:, :n] = rows
            # one rhs column per sign assignment on the subset
            signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * k), indexing="ij"))
            signs = signs.reshape(k, -1)
            rhs = np.zeros((n + k, signs.shape[1]))
            rhs[:n, :] = (D * zv)[:, None]
            rhs[n:, :] = signs * c[list(subset), None]
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            vs = sol[:n, :]
            mus = sol[n:, :]
            gaps = vs[idx[:, 1], :] - vs[idx[:, 0], :]
            primal_ok = np.all(np.abs(gaps) <= c[:, None] + feas_tol, axis=0)
            dual_ok = np.all(mus * signs >= -feas_tol, axis=0)
            for col in np.flatnonzero(primal_ok & dual_ok):
                obj = objective(vs[:, col])
                if obj < best_obj - 1e-15:
                    best_obj = obj
                    best_v = vs[:, col].copy()
    if best_v is None:
        raise RuntimeError("oracle found no feasible KKT point")  # pragma: no cover
    return best_v


def resolvent_p(g: WeightedGraph, p: float, model: str, lam: float, z,
                tol: float = 1e-10, max_iter: int = 500) -> np.ndarray:
    """Resolvent of the p-energy: minimize (1/2)||v - z||_nu^2 + lam * J_p(v).

    Damped Newton with Armijo backtracking; stops once the gradient in the
    nu-weighted norm is below tol.  lam == 0 returns z itself.
    """
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    zv = field_values(g, z)
    if lam == 0.0:
        return zv.copy()

    i, j = g.edge_index[:, 0], g.edge_index[:, 1]
    D = g.degrees
    wf = model_weight_factor(g, p, model)
    n = g.n_vertices

    def energy(v):
        gaps = v[j] - v[i]
        jp = np.sum(wf * abs_power(gaps, float(p))) / p
        return 0.5 * float(np.dot(D, (v - zv) ** 2)) + lam * float(jp)

    def grad(v):
        gaps = v[j] - v[i]
        flux = wf * signed_power(gaps, p - 1.0)
        eg = np.zeros(n)
        np.add.at(eg, i, flux)
        np.add.at(eg, j, -flux)
        return D * (v - zv) - lam * eg, gaps

    v = zv.copy()
    scale = max(1.0, float(np.sqrt(np.dot(D, zv * zv))))
    for _ in range(max_iter):
        gr, gaps = grad(v)
        if not np.all(np.isfinite(gr)):
            raise ResolventError(f"nonfinite gradient at p={p}, lam={lam}")
        # gradient in L^2(nu) is D^{-1} gr
        gn = float(np.sqrt(np.dot(gr * gr, 1.0 / D)))
        if gn <= tol * scale:
            return v
        coeff = lam * (p - 1.0) * wf * abs_power(gaps, p - 2.0)
        hess = np.zeros((n, n))
        np.add.at(hess, (i, i), coeff)
        np.add.at(hess, (j, j), coeff)
        np.add.at(hess, (i, j), -coeff)
        np.add.at(hess, (j, i), -coeff)
        hess[np.arange(n), np.arange(n)] += D
        eps = 1e-12 * (1.0 + np.max(np.abs(np.diag(hess))))
        hess[np.arange(n), np.arange(n)] += eps
        try:
            step = np.linalg.solve(hess, -gr)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise ResolventError(f"singular Hessian at p={p}: {exc}")
        slope = float(np.dot(gr, step))
        if slope >= 0:  # numerical loss of descent; fall back to -gradient
            step = -gr / np.max(np.abs(gr))
            slope = float(np.dot(gr, step))
        phi0 = energy(v)
        t = 1.0
        accepted = None
        for _ in range(70):
            cand = v + t * step
            if np.array_equal(cand, v):
                break  # step underflowed: nothing representable is left to try
            phi = energy(cand)
            if np.isfinite(phi) and phi <= phi0 + 1e-4 * t * slope:
                accepted = cand
                break
            t *= 0.5
        made_progress = (accepted is not None
                         and energy(accepted) < phi0 - 1e-15 * max(1.0, abs(phi0)))
        if not made_progress:
            # stationary at floating-point accuracy: the gradient floor of
            # the log-form powers can sit above an absolute tolerance
            if gn <= 1e-6 * scale:
                return accepted if accepted is not None else v
            raise ResolventError(
                f"line search stalled at p={p}, lam={lam}: phi0={phi0:.6e}, "
                f"|grad|_nu={gn:.3e}, last step {t:.1e}")
        v = accepted
    raise ResolventError(f"Newton did not converge in {max_iter} iterations "
                         f"(p={p}, lam={lam})")
