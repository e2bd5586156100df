"""Independent oracles and property checkers.

Closed-form fixed-point sets for the built-in test problems, a brute-force
grid projection oracle, T-class and coherence diagnostics, and random
batteries for the inequalities the convergence proofs rely on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import null_space

from .algorithms import IterationTrace, Problem
from .hilbert import AffineSubspace, ConvexSet, as_vector
from .operators import FixedPointSet, GammaTower, Mapping, Semigroup, halve

NORM_RTOL = 1e-8


def _norm(v) -> float:
    return float(np.linalg.norm(v))


# ---------------------------------------------------------------------------
# closed-form fixed-point sets


def oracle_subspace_intersection(subspaces: Sequence[AffineSubspace], tol: float = 1e-10
                                 ) -> FixedPointSet:
    """Intersection of linear subspaces, with its exact projection.

    Each subspace contributes the rows of ``I - P_i``; the intersection is
    their common null space, computed by SVD.
    """
    subspaces = list(subspaces)
    if not subspaces:
        raise ValueError("need at least one subspace")
    d = subspaces[0].dim
    rows = []
    for S in subspaces:
        if S.dim != d:
            raise ValueError("subspaces of different dimension")
        if _norm(S.basepoint) > tol:
            raise ValueError("subspaces must pass through the origin")
        rows.append(np.eye(d) - S.basis @ S.basis.T)
    basis = null_space(np.vstack(rows), rcond=tol)
    return FixedPointSet.affine(np.zeros(d), basis)


def oracle_affine_intersection(subspaces: Sequence[AffineSubspace], tol: float = 1e-10
                               ) -> FixedPointSet | None:
    """Intersection of affine subspaces, or ``None`` when it is empty."""
    subspaces = list(subspaces)
    d = subspaces[0].dim
    A = np.vstack([np.eye(d) - S.basis @ S.basis.T for S in subspaces])
    b = np.concatenate([(np.eye(d) - S.basis @ S.basis.T) @ S.basepoint for S in subspaces])
    p, *_ = np.linalg.lstsq(A, b, rcond=None)
    if _norm(A @ p - b) > tol * (1 + _norm(b)):
        return None
    basis = null_space(A, rcond=tol)
    # basepoint orthogonal to the directions keeps it canonical
    p = p - basis @ (basis.T @ p)
    return FixedPointSet.affine(p, basis)


def oracle_semigroup_fixset(S: Semigroup, eig_tol: float = 1e-10) -> FixedPointSet:
    """Common fixed points of a linear-PSD or rotation semigroup."""
    d = S.dim
    if S.generator == "linear_psd":
        lam = np.asarray(S.info["eigenvalues"])
        V = np.asarray(S.info["eigenvectors"])
        return FixedPointSet.affine(np.zeros(d), V[:, lam <= eig_tol])
    if S.generator == "rotation":
        rates = S.info["rates"]
        cols = [c for i, r in enumerate(rates) if r == 0 for c in (2 * i, 2 * i + 1)]
        cols += list(range(2 * len(rates), d))
        return FixedPointSet.affine(np.zeros(d), np.eye(d)[:, cols])
    raise NotImplementedError(f"no closed-form fixed set for {S.generator!r} semigroups")


@dataclass
class OracleProblem:
    """A problem bundled with its exact fixed-point set and ``P_F x0``."""

    name: str
    problem: Problem
    exact_f: FixedPointSet
    exact_pf_x0: np.ndarray = None

    def __post_init__(self):
        pf = self.exact_f.project(self.problem.x0)
        if self.exact_pf_x0 is None:
            self.exact_pf_x0 = pf
        elif _norm(pf - self.exact_pf_x0) > 1e-10 * (1 + _norm(pf)):
            raise ValueError("exact_pf_x0 does not match the projection of x0 onto F")


# ---------------------------------------------------------------------------
# brute-force projection


class NoFeasiblePoint(RuntimeError):
    pass


def brute_force_projection(x0, membership: Callable, seed, radius: float, *, levels: int = 3,
                           vectorized: bool = False, spacing_aware: bool = False,
                           half_width: int = 30, slack: float = 4.0,
                           bisections: int = 60, extrapolations: int = 2,
                           pairs: int = 24, thin: bool = False) -> np.ndarray:
    """Approximate projection of ``x0`` by local grid refinement.

    The first level is a grid of spacing ``radius / 10`` covering the cube of
    half-side ``radius`` around ``seed`` (made denser if it contains no
    feasible point); each later level divides the spacing by 10 and
    re-centres a grid of ``2 * half_width + 1`` points per axis on the
    previous estimate.  Final resolution is ``radius / 10**levels``.

    Distances are nearly flat along the boundary, so an arg-min over grid
    points alone can sit far from the projection.  The nearest feasible grid
    points (those within ``slack`` spacings of the best distance) are
    therefore pushed toward ``x0`` by bisection on membership along the
    segment to ``x0``.  Those boundary points are only as close to an edge or
    vertex of the set as the grid allows, so lines through pairs of the best
    ones are extended (again by bisection) until they leave the set; on a flat
    face this lands on the edge.  The estimate is the closest point found.

    Parameters
    ----------
    membership : callable
        ``z -> bool``.  With ``vectorized=True`` it maps an ``(m, d)`` array
        to a boolean array.  With ``spacing_aware=True`` it is called as
        ``membership(points, spacing)`` so that thin sets can be thickened to
        the current grid spacing.
    thin : bool
        The set has empty interior and ``membership`` thickens it to a tube
        of width comparable to the spacing.  The final estimate is then the
        middle of the feasible chord along the ray from ``x0``, which removes
        the tube radius from the error.
    """
    x0 = as_vector(x0)
    seed = as_vector(seed, x0.shape[0])
    d = x0.shape[0]
    if d > 3:
        raise ValueError("brute force projection is for d <= 3")

    def feasible(Z, h):
        if spacing_aware:
            out = membership(Z, h)
        elif vectorized:
            out = membership(Z)
        else:
            out = [bool(membership(z)) for z in Z]
        return np.asarray(out, dtype=bool).reshape(len(Z))

    if feasible(x0[None, :], radius / 10 ** levels)[0]:
        return x0.copy()

    def grid(centre, h, k):
        ticks = np.arange(-k, k + 1) * h
        return np.stack(np.meshgrid(*([ticks] * d), indexing="ij"), -1).reshape(-1, d) + centre

    centre = seed
    for level in range(levels):
        h = radius / 10 ** (level + 1)
        if feasible(x0[None, :], h)[0]:
            # only possible for thickened sets: x0 is within a spacing of them
            centre = x0
            continue
        if level == 0:
            # denser first level until something feasible shows up
            for k in (10, 20, 40, 80):
                hk = radius / k
                pts = grid(centre, hk, k)
                ok = feasible(pts, h)
                if ok.any():
                    break
            else:
                raise NoFeasiblePoint("no feasible grid point in the search cube")
        else:
            pts = grid(centre, h, half_width)
            ok = feasible(pts, h)
            if not ok.any():
                raise NoFeasiblePoint(f"no feasible grid point at level {level + 1}")
        pts = pts[ok]
        dist = np.linalg.norm(pts - x0, axis=1)
        # candidates: feasible points within a few spacings of the best one
        pts = pts[dist <= dist.min() + slack * h]
        bnd = _push_to_boundary(pts, x0, lambda Z: feasible(Z, h), bisections)
        reach = 2 * h * (half_width if level else 10)
        if thin:
            bnd = _chord_middles(x0, bnd, lambda Z: feasible(Z, h), 2 * h * half_width,
                                 bisections)
        for _ in range(0 if thin else extrapolations):
            bnd = np.vstack([bnd, _extrapolate_pairs(bnd, x0, lambda Z: feasible(Z, h),
                                                     reach, pairs, bisections)])
        centre = bnd[np.argmin(np.linalg.norm(bnd - x0, axis=1))]
    return centre


def _chord_middles(x0, entries, feasible, width, bisections):
    """Middle of the feasible chord on each ray from ``x0`` through an entry
    point; for a tube around an affine set this is the ray's closest point to
    the set."""
    u = entries - x0
    u /= np.linalg.norm(u, axis=1)[:, None]
    lo = np.zeros(len(entries))
    hi = np.full(len(entries), float(width))
    # grazing rays may cross the tube over more than ``width``; cap them
    lo[feasible(entries + hi[:, None] * u)] = width
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        inside = feasible(entries + mid[:, None] * u)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return entries + 0.5 * lo[:, None] * u


def _push_to_boundary(pts, x0, feasible, bisections):
    """Last feasible point on each segment ``pts -> x0`` (``x0`` infeasible)."""
    lo = np.zeros(len(pts))
    hi = np.ones(len(pts))
    step = x0 - pts
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        inside = feasible(pts + mid[:, None] * step)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return pts + lo[:, None] * step


def _extrapolate_pairs(bnd, x0, feasible, reach, pairs, bisections):
    """Extend the lines through pairs of the best boundary points as far as
    they stay feasible (at most ``reach``)."""
    best = bnd[np.argsort(np.linalg.norm(bnd - x0, axis=1), kind="stable")[:pairs]]
    i, j = np.where(~np.eye(len(best), dtype=bool))
    direc = best[j] - best[i]
    length = np.linalg.norm(direc, axis=1)
    keep = length > 1e-12 * (1 + reach)
    start, direc = best[j][keep], direc[keep] / length[keep, None]
    if not len(start):
        return np.empty((0, bnd.shape[1]))
    lo = np.zeros(len(start))
    hi = np.full(len(start), float(reach))
    far_ok = feasible(start + hi[:, None] * direc)
    lo[far_ok] = hi[far_ok]
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        inside = feasible(start + mid[:, None] * direc)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return start + lo[:, None] * direc


# ---------------------------------------------------------------------------
# T-class and halving


@dataclass
class CheckReport:
    name: str
    passed: bool
    max_violation: float
    trials: int
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"name": self.name, "passed": bool(self.passed),
               "max_violation": float(self.max_violation), "trials": int(self.trials)}
        out.update({k: (v.tolist() if isinstance(v, np.ndarray) else v)
                    for k, v in self.detail.items()})
        return out


def check_tc_class(T: Mapping, fixed_samples, trials: int = 1000, rng=None, scale: float = 3.0,
                   tol: float = 1e-9) -> CheckReport:
    """Sample ``<p - Tx, x - Tx> <= 0`` over random ``x`` and fixed ``p``.

    The violation is normalised by ``1 + |p - Tx| |x - Tx|``.
    """
    rng = np.random.default_rng(rng)
    P = np.atleast_2d(np.asarray(fixed_samples, dtype=np.float64))
    for p in P:
        res = _norm(T(p) - p)
        if res > 1e-10 * (1 + _norm(p)):
            raise ValueError(f"fixed sample has residual {res:.3e}")
    worst, worst_x, worst_p = -np.inf, None, None
    for _ in range(trials):
        x = scale * rng.standard_normal(T.dim)
        tx = T(x)
        for p in P:
            a, b = p - tx, x - tx
            v = float(a @ b) / (1 + _norm(a) * _norm(b))
            if v > worst:
                worst, worst_x, worst_p = v, x, p
    return CheckReport(f"tc_class[{T.name}]", bool(worst <= tol), max(worst, 0.0), trials,
                       {"worst_x": worst_x, "worst_p": worst_p})


def halving_identity_violation(R: Mapping, x, z) -> float:
    """Relative gap in ``4 <z - Tx, x - Tx> = |Rx - z|^2 - |x - z|^2`` for
    ``T = (R + Id) / 2``."""
    x = as_vector(x)
    z = as_vector(z)
    rx = R(x)
    tx = halve(R)(x)
    lhs = 4 * float((z - tx) @ (x - tx))
    rhs = _norm(rx - z) ** 2 - _norm(x - z) ** 2
    return abs(lhs - rhs) / (1 + _norm(rx - z) ** 2 + _norm(x - z) ** 2)


def halving_battery(maps: Sequence[Mapping], trials: int, rng=None, scale: float = 3.0,
                    tol: float = NORM_RTOL) -> CheckReport:
    rng = np.random.default_rng(rng)
    maps = list(maps)
    worst = 0.0
    for i in range(trials):
        R = maps[i % len(maps)]
        x, z = scale * rng.standard_normal((2, R.dim))
        worst = max(worst, halving_identity_violation(R, x, z))
    return CheckReport("halving_identity", worst <= tol, worst, trials)


# ---------------------------------------------------------------------------
# lemma batteries


@dataclass
class LemmaReport:
    trials: int
    max_violation: dict
    tol: float = NORM_RTOL

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.max_violation.values())

    def to_dict(self):
        return {"trials": self.trials, "tol": self.tol, "passed": self.passed,
                "max_violation": dict(self.max_violation)}


def relaxed(T: Mapping, beta: float) -> Mapping:
    """``T_beta = beta Id + (1 - beta) T``."""
    return Mapping(lambda x: beta * x + (1 - beta) * T(x), T.dim, T.kind, T.fixed,
                   f"{T.name}_{beta:g}")


def lemma_battery(T: Mapping, S: Mapping, F: FixedPointSet, betas: Sequence[float],
                  trials: int = 1000, rng=None, scale: float = 3.0) -> LemmaReport:
    """Random evaluation of the three averaged-map inequalities.

    With ``T_beta = beta Id + (1 - beta) T`` and ``p`` in ``F``:

    * ``beta (1-beta) |x - Tx|^2 <= 2 (|x - p| - |T_beta x - p|) |x - p|``
    * ``beta (1-beta) |x - Tx|^2 <= 2 |x - S T_beta x| |x - p|``
    * ``|x - Sx| <= |x - S T_beta x| + |Tx - x|``

    Squared inequalities are normalised by ``1 + |x - p|^2 + |x - Tx|^2``,
    the last one by ``1 + |x - Sx| + |Tx - x|``.
    """
    betas = [float(b) for b in betas]
    for b in betas:
        if not 0 < b < 1:
            raise ValueError(f"beta must lie in the open interval (0, 1), got {b}")
    rng = np.random.default_rng(rng)
    worst = {"averaged_decrease": 0.0, "composition_bound": 0.0, "outer_residual": 0.0}
    count = 0
    for i in range(trials):
        beta = betas[i % len(betas)]
        x = scale * rng.standard_normal(T.dim)
        p = F.sample(rng, 1)[0]
        tx = T(x)
        tbx = beta * x + (1 - beta) * tx
        stbx = S(tbx)
        sx = S(x)
        dxp = _norm(x - p)
        res = _norm(x - tx)
        lhs = beta * (1 - beta) * res ** 2
        norm2 = 1 + dxp ** 2 + res ** 2
        v1 = (lhs - 2 * (dxp - _norm(tbx - p)) * dxp) / norm2
        v2 = (lhs - 2 * _norm(x - stbx) * dxp) / norm2
        v3 = (_norm(x - sx) - _norm(x - stbx) - res) / (1 + _norm(x - sx) + res)
        worst["averaged_decrease"] = max(worst["averaged_decrease"], v1)
        worst["composition_bound"] = max(worst["composition_bound"], v2)
        worst["outer_residual"] = max(worst["outer_residual"], v3)
        count += 1
    return LemmaReport(count, worst)


# ---------------------------------------------------------------------------
# orbit diagnostics


@dataclass
class CoherenceReport:
    orbit_source: str
    sum_squared_steps: float
    sum_squared_residuals: float
    cluster_estimate: np.ndarray
    cluster_residuals: list
    residuals_decayed: bool
    tol: float

    @property
    def evidence(self) -> bool:
        """All probes fix the cluster estimate, given finite sums and decayed
        residuals."""
        finite = np.isfinite(self.sum_squared_steps) and np.isfinite(self.sum_squared_residuals)
        return bool(finite and self.residuals_decayed
                    and all(r < self.tol for r in self.cluster_residuals))

    def to_dict(self):
        return {"orbit_source": self.orbit_source,
                "sum_squared_steps": self.sum_squared_steps,
                "sum_squared_residuals": self.sum_squared_residuals,
                "cluster_estimate": self.cluster_estimate.tolist(),
                "cluster_residuals": list(self.cluster_residuals),
                "residuals_decayed": self.residuals_decayed, "evidence": self.evidence}


def _tail(k: int, fraction: float = 0.1, minimum: int = 10) -> int:
    return min(k, max(minimum, int(np.ceil(fraction * k))))


def check_nst_on_orbit(trace: IterationTrace, probes: Sequence[Mapping], tol: float = 1e-6
                       ) -> CoherenceReport:
    """Orbit-level evidence that vanishing residuals force vanishing probe
    residuals.

    The cluster estimate is the mean of the last 10% of iterates (at least
    10, or all of them for short orbits).
    """
    if not trace.steps:
        raise ValueError("empty trace")
    X = trace.iterates()
    tail = _tail(len(X))
    z = X[-tail:].mean(axis=0)
    ss, rs = trace.partial_sums()
    res = trace.residuals()
    decayed = bool(res[-tail:].min() < tol)
    probe_res = [_norm(z - T(z)) for T in probes]
    return CoherenceReport(trace.algorithm, ss, rs, z, probe_res, decayed, tol)


def check_gamma_cascade(trace: IterationTrace, tower: GammaTower, tol: float = 1e-5,
                        tail_fraction: float = 0.1) -> CheckReport:
    """Per-level residuals ``|x_n - T_n^(k) x_n|`` along the orbit tail.

    Also records the composite residuals ``|x_n - T_n^(k) Gamma_n^(k+1) x_n|``.
    Passes when every level's tail maximum is below ``tol``.
    """
    if not trace.steps:
        raise ValueError("empty trace")
    if trace.steps[0].x.shape[0] != tower.dim:
        raise ValueError("trace and tower dimensions differ")
    steps = trace.steps[-_tail(len(trace.steps), tail_fraction):]
    N = tower.depth
    level = np.zeros(N)
    composite = np.zeros(N)
    for s in steps:
        for k in range(1, N + 1):
            level[k - 1] = max(level[k - 1], _norm(s.x - tower.level_map(s.n, k)(s.x)))
            composite[k - 1] = max(composite[k - 1], _norm(s.x - tower.inner_map(s.n, k)(s.x)))
    worst = float(level.max())
    return CheckReport("gamma_cascade", worst < tol, worst, len(steps),
                       {"level_tail_max": level.tolist(), "composite_tail_max": composite.tolist()})


# ---------------------------------------------------------------------------
# semigroups


def check_semigroup_axioms(S: Semigroup, times: Sequence[float] = (0.3, 1.0, 2.5), trials: int = 50,
                           rng=None, tol: float = 1e-9) -> CheckReport:
    """Identity at 0, the semigroup law, nonexpansiveness and orbit
    continuity near 0, on random vectors."""
    rng = np.random.default_rng(rng)
    worst = {"identity": 0.0, "law": 0.0, "nonexpansive": 0.0, "continuity": 0.0}
    for _ in range(trials):
        x, y = rng.standard_normal((2, S.dim))
        worst["identity"] = max(worst["identity"], _norm(S.at(0.0)(x) - x) / (1 + _norm(x)))
        for s, t in itertools.product(times, repeat=2):
            gap = _norm(S.at(s + t)(x) - S.at(s)(S.at(t)(x)))
            worst["law"] = max(worst["law"], gap / (1 + _norm(x)))
        for t in times:
            grow = _norm(S.at(t)(x) - S.at(t)(y)) - _norm(x - y)
            worst["nonexpansive"] = max(worst["nonexpansive"], grow / (1 + _norm(x - y)))
        # orbit moves by O(h) for small h
        h = 1e-7
        worst["continuity"] = max(worst["continuity"],
                                  max(0.0, _norm(S.at(h)(x) - x) / (1 + _norm(x)) - 1e-5))
    m = max(worst.values())
    return CheckReport(f"semigroup[{S.generator}]", m <= tol, m, trials, {"by_axiom": worst})


# ---------------------------------------------------------------------------
# projector agreement


def thickened_membership(C: ConvexSet) -> Callable:
    """``(points, spacing) -> bool`` membership with thin sets widened to the
    grid spacing, for :func:`brute_force_projection`."""
    if isinstance(C, AffineSubspace) and C.codim > 0:
        return lambda Z, h: C.distance_many(Z) <= h * np.sqrt(C.dim) / 2
    return lambda Z, h: C.contains_many(Z, 0.0)


def projector_agreement(C: ConvexSet, x0, seed, radius: float) -> CheckReport:
    """Compare ``C.project`` with the grid oracle; passes within twice the
    final grid resolution."""
    exact = C.project(x0)
    thin = isinstance(C, AffineSubspace) and C.codim > 0
    approx = brute_force_projection(x0, thickened_membership(C), seed, radius, spacing_aware=True,
                                    thin=thin)
    resolution = radius / 1e3
    err = _norm(exact - approx)
    return CheckReport(f"projector[{C.kind}]", err <= 2 * resolution, err, 1,
                       {"resolution": resolution})


__all__ = [
    "oracle_subspace_intersection", "oracle_affine_intersection", "oracle_semigroup_fixset",
    "OracleProblem", "brute_force_projection", "NoFeasiblePoint", "check_tc_class",
    "halving_identity_violation", "halving_battery", "lemma_battery", "LemmaReport", "relaxed",
    "CoherenceReport", "check_nst_on_orbit", "check_gamma_cascade", "check_semigroup_axioms",
    "thickened_membership", "projector_agreement", "CheckReport",
]
