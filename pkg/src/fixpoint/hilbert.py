"""Euclidean-space primitives: half-spaces, convex sets and metric projections.

Vectors are plain 1-D ``float64`` numpy arrays.  Everything here is a pure
function of its inputs; set objects are immutable after construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

# relative slack used when deciding membership of a computed point
FEAS_RTOL = 1e-12


class DimensionError(ValueError):
    pass


class InvalidSetError(ValueError):
    pass


@dataclass(frozen=True)
class Infeasible:
    """Returned by the projectors when the target set is empty."""

    reason: str = ""

    def __bool__(self):
        return False


def as_vector(x, dim: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionError(f"expected dimension {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite coordinates")
    return v


def inner(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(a @ b)


def norm(a) -> float:
    return float(np.linalg.norm(a))


# ---------------------------------------------------------------------------
# half-spaces


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Closed half-space ``{z : <z, normal> <= offset}``.

    ``whole=True`` marks the degenerate H(x, x), which is the whole space;
    the normal is then zero and ignored.
    """

    normal: np.ndarray
    offset: float
    whole: bool = False

    def __post_init__(self):
        n = as_vector(self.normal)
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))
        if not self.whole and not np.any(n):
            raise InvalidSetError("zero normal on a half-space not flagged as whole space")

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    def violation(self, z) -> float:
        """Signed constraint value ``<z, normal> - offset`` (<= 0 inside)."""
        if self.whole:
            return -np.inf
        return float(np.asarray(z) @ self.normal) - self.offset

    def contains(self, z, tol: float = 0.0) -> bool:
        if self.whole:
            return True
        z = np.asarray(z, dtype=np.float64)
        # homogeneous in (normal, offset) so tiny cuts are judged like big ones
        scale = abs(self.offset) + norm(self.normal) * (1.0 + norm(z))
        return self.violation(z) <= tol * scale

    def __repr__(self):
        if self.whole:
            return f"HalfSpace(whole, dim={self.dim})"
        return f"HalfSpace(normal={self.normal.tolist()}, offset={self.offset!r})"


def whole_halfspace(dim: int) -> HalfSpace:
    return HalfSpace(np.zeros(dim), 0.0, whole=True)


def halfspace_from_pair(x, y) -> HalfSpace:
    """H(x, y) = {z : <z - y, x - y> <= 0}.

    ``y`` always lies on the boundary and is the projection of ``x`` onto the
    result.  For ``x == y`` the whole space is returned.
    """
    x = as_vector(x)
    y = as_vector(y, x.shape[0])
    n = x - y
    if not np.any(n):
        return whole_halfspace(x.shape[0])
    return HalfSpace(n, float(y @ n))


def project_halfspace(w, h: HalfSpace) -> np.ndarray:
    w = as_vector(w, h.dim)
    if h.whole:
        return w.copy()
    excess = float(w @ h.normal) - h.offset
    if excess <= 0.0:
        return w.copy()
    return w - (excess / float(h.normal @ h.normal)) * h.normal


def project_two_halfspaces(x0, h1: HalfSpace, h2: HalfSpace, rtol: float = FEAS_RTOL):
    """Exact projection of ``x0`` onto ``h1 ∩ h2`` by KKT case enumeration.

    Returns an :class:`Infeasible` value when the intersection is empty.
    """
    x0 = as_vector(x0, h1.dim)
    if h2.dim != h1.dim:
        raise DimensionError("half-spaces of different dimension")
    if h1.whole:
        return project_halfspace(x0, h2)
    if h2.whole:
        return project_halfspace(x0, h1)

    if h1.contains(x0, rtol) and h2.contains(x0, rtol):
        return x0.copy()

    # one constraint active
    p1 = project_halfspace(x0, h1)
    if h2.contains(p1, rtol):
        return p1
    p2 = project_halfspace(x0, h2)
    if h1.contains(p2, rtol):
        return p2

    # both active: x = x0 - l1 a1 - l2 a2 with G l = A x0 - b
    a1, a2 = h1.normal, h2.normal
    g11, g12, g22 = a1 @ a1, a1 @ a2, a2 @ a2
    det = g11 * g22 - g12 * g12
    if det <= 1e-14 * g11 * g22:
        # parallel normals and neither single projection works: opposite
        # directions with an empty slab between them
        return Infeasible("inconsistent parallel half-spaces")
    r1 = x0 @ a1 - h1.offset
    r2 = x0 @ a2 - h2.offset
    l1 = (g22 * r1 - g12 * r2) / det
    l2 = (g11 * r2 - g12 * r1) / det
    if l1 < -1e-12 * abs(l2) or l2 < -1e-12 * abs(l1):
        return Infeasible("no KKT point with nonnegative multipliers")
    return x0 - l1 * a1 - l2 * a2


# ---------------------------------------------------------------------------
# convex sets


class ConvexSet:
    """Closed convex set with an exact metric projection."""

    kind = "abstract"

    def __init__(self, dim: int):
        self.dim = int(dim)

    def project(self, w) -> np.ndarray:
        raise NotImplementedError

    def contains(self, z, tol: float = 1e-10) -> bool:
        z = as_vector(z, self.dim)
        return norm(self.project(z) - z) <= tol * (1.0 + norm(z))

    def contains_many(self, zs: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Vectorised membership for an ``(m, d)`` array of points."""
        return np.array([self.contains(z, tol) for z in zs], dtype=bool)

    def halfspaces(self) -> list[HalfSpace] | None:
        """Half-space description when the set is polyhedral, else None."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


class WholeSpace(ConvexSet):
    kind = "whole"

    def project(self, w):
        return as_vector(w, self.dim).copy()

    def contains(self, z, tol=1e-10):
        return True

    def contains_many(self, zs, tol=0.0):
        return np.ones(len(zs), dtype=bool)

    def halfspaces(self):
        return []

    def to_dict(self):
        return {"kind": "whole"}


class Ball(ConvexSet):
    kind = "ball"

    def __init__(self, center, radius: float):
        self.center = as_vector(center)
        super().__init__(self.center.shape[0])
        if not radius > 0:
            raise InvalidSetError(f"ball radius must be positive, got {radius}")
        self.radius = float(radius)

    def project(self, w):
        w = as_vector(w, self.dim)
        d = w - self.center
        r = norm(d)
        if r <= self.radius:
            return w.copy()
        return self.center + (self.radius / r) * d

    def contains_many(self, zs, tol=0.0):
        return np.linalg.norm(zs - self.center, axis=1) <= self.radius * (1 + tol)

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


class Box(ConvexSet):
    kind = "box"

    def __init__(self, lower, upper):
        self.lower = as_vector(lower)
        self.upper = as_vector(upper, self.lower.shape[0])
        super().__init__(self.lower.shape[0])
        if np.any(self.lower > self.upper):
            raise InvalidSetError("box needs lower <= upper")

    def project(self, w):
        return np.clip(as_vector(w, self.dim), self.lower, self.upper)

    def contains_many(self, zs, tol=0.0):
        return np.all((zs >= self.lower - tol) & (zs <= self.upper + tol), axis=1)

    def halfspaces(self):
        out = []
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            out.append(HalfSpace(e, self.upper[i]))
            out.append(HalfSpace(-e, -self.lower[i]))
        return out

    def to_dict(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class AffineSubspace(ConvexSet):
    """``basepoint + span(directions)``; directions are the columns of an
    orthonormal ``(d, k)`` matrix (``k = 0`` gives a single point)."""

    kind = "affine"

    def __init__(self, basepoint, directions, check: bool = True):
        self.basepoint = as_vector(basepoint)
        super().__init__(self.basepoint.shape[0])
        U = np.asarray(directions, dtype=np.float64)
        if U.size == 0:
            U = np.zeros((self.dim, 0))
        if U.ndim == 1:
            U = U.reshape(-1, 1)
        if U.shape[0] != self.dim:
            raise DimensionError(f"directions must have {self.dim} rows, got {U.shape}")
        if check and not np.allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-10):
            raise InvalidSetError("affine subspace directions are not orthonormal")
        self.basis = U

    @classmethod
    def spanned_by(cls, basepoint, vectors):
        """Build from arbitrary spanning vectors (columns), orthonormalised."""
        V = np.asarray(vectors, dtype=np.float64)
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        if V.size == 0:
            return cls(basepoint, np.zeros((len(basepoint), 0)))
        U, s, _ = np.linalg.svd(V, full_matrices=False)
        rank = int(np.sum(s > 1e-10 * max(s.max(), 1.0)))
        return cls(basepoint, U[:, :rank])

    @property
    def codim(self) -> int:
        return self.dim - self.basis.shape[1]

    def project(self, w):
        w = as_vector(w, self.dim)
        d = w - self.basepoint
        return self.basepoint + self.basis @ (self.basis.T @ d)

    def distance_many(self, zs):
        d = zs - self.basepoint
        return np.linalg.norm(d - (d @ self.basis) @ self.basis.T, axis=1)

    def contains_many(self, zs, tol=0.0):
        return self.distance_many(zs) <= tol

    def to_dict(self):
        return {
            "kind": "affine",
            "basepoint": self.basepoint.tolist(),
            "directions": self.basis.T.tolist(),
        }


class HalfSpaceList(ConvexSet):
    """Finite intersection of half-spaces, projected via :func:`project_polyhedron`."""

    kind = "halfspaces"

    def __init__(self, halfspaces: Sequence[HalfSpace], dim: int | None = None,
                 tol: float = 1e-12, max_inner: int = 100_000):
        hs = tuple(halfspaces)
        if dim is None:
            if not hs:
                raise InvalidSetError("empty half-space list needs an explicit dim")
            dim = hs[0].dim
        if any(h.dim != dim for h in hs):
            raise DimensionError("half-spaces of mixed dimension")
        super().__init__(dim)
        self.items = hs
        self.tol = tol
        self.max_inner = max_inner

    def project(self, w):
        acc = PolyhedralAccumulator(WholeSpace(self.dim), self.items)
        p = project_polyhedron(w, acc, self.tol, self.max_inner)
        if isinstance(p, Infeasible):
            raise InvalidSetError(f"half-space list is empty: {p.reason}")
        return p

    def contains(self, z, tol=1e-10):
        return all(h.contains(z, tol) for h in self.items)

    def contains_many(self, zs, tol=0.0):
        ok = np.ones(len(zs), dtype=bool)
        for h in self.items:
            if not h.whole:
                ok &= zs @ h.normal <= h.offset + tol
        return ok

    def halfspaces(self):
        return [h for h in self.items if not h.whole]

    def to_dict(self):
        return {
            "kind": "halfspaces",
            "halfspaces": [
                {"normal": h.normal.tolist(), "offset": h.offset} for h in self.halfspaces()
            ],
        }


def project_convex(w, c: ConvexSet) -> np.ndarray:
    return c.project(w)


def convex_set_from_dict(node: dict, dim: int) -> ConvexSet:
    kind = node.get("kind", "whole")
    if kind == "whole":
        return WholeSpace(dim)
    if kind == "ball":
        return Ball(as_vector(node["center"], dim), node["radius"])
    if kind == "box":
        return Box(as_vector(node["lower"], dim), as_vector(node["upper"], dim))
    if kind == "affine":
        dirs = np.asarray(node.get("directions", []), dtype=np.float64).reshape(-1, dim).T
        return AffineSubspace.spanned_by(as_vector(node["basepoint"], dim), dirs)
    if kind == "halfspaces":
        hs = [HalfSpace(as_vector(h["normal"], dim), h["offset"]) for h in node["halfspaces"]]
        return HalfSpaceList(hs, dim=dim)
    raise InvalidSetError(f"unknown set kind {kind!r}")


# ---------------------------------------------------------------------------
# polyhedral accumulator and projection


class PolyhedralAccumulator:
    """``base ∩ cuts`` with an append-only cut list.

    :meth:`with_cut` returns a new accumulator; the stacked constraint
    arrays and the parallel-conflict flag are maintained incrementally so
    appending costs ``O(m d)``.
    """

    def __init__(self, base: ConvexSet, cuts: Sequence[HalfSpace] = (), witness=None):
        self.base = base
        self.cuts = ()
        self.witness = None if witness is None else as_vector(witness, base.dim)
        d = base.dim
        self._A = np.zeros((0, d))
        self._b = np.zeros(0)
        # unit normals / offsets of base facets and cuts, for conflict checks
        self._U = np.zeros((0, d))
        self._c = np.zeros(0)
        self.conflict = False
        # active rows of the last projection (base facets first, then cuts);
        # a warm-start cache only, never affects the result's meaning
        self.active_hint = None
        for h in base.halfspaces() or []:
            self._add_unit(h)
        for h in cuts:
            self._append(h)

    def _add_unit(self, h: HalfSpace):
        nn = norm(h.normal)
        u, c = h.normal / nn, h.offset / nn
        if self._U.shape[0]:
            opp = self._U @ u < -1 + 1e-12
            if np.any(opp & (self._c + c < -1e-12 * (1 + np.abs(self._c) + abs(c)))):
                self.conflict = True
        self._U = np.vstack([self._U, u])
        self._c = np.append(self._c, c)

    def _append(self, h: HalfSpace):
        if h.whole:
            return
        if h.dim != self.base.dim:
            raise DimensionError("cut dimension mismatch")
        self.cuts = self.cuts + (h,)
        self._A = np.vstack([self._A, h.normal])
        self._b = np.append(self._b, h.offset)
        self._add_unit(h)
        if self.witness is not None and not h.contains(self.witness, 1e-9):
            self.witness = None

    def _copy(self):
        new = object.__new__(PolyhedralAccumulator)
        new.__dict__.update(self.__dict__)
        return new

    @property
    def dim(self):
        return self.base.dim

    @property
    def arrays(self):
        """Stacked cut constraints ``(A, b)`` with ``A z <= b``."""
        return self._A, self._b

    def with_cut(self, h: HalfSpace) -> "PolyhedralAccumulator":
        if h.whole:
            return self
        new = self._copy()
        new._append(h)
        return new

    def with_witness(self, w) -> "PolyhedralAccumulator":
        w = as_vector(w, self.dim)
        if not self.contains(w, 1e-9):
            raise ValueError("witness is not a feasible point")
        new = self._copy()
        new.witness = w
        return new

    def contains(self, z, tol: float = 1e-9) -> bool:
        return self.base.contains(z, tol) and all(h.contains(z, tol) for h in self.cuts)

    def max_violation(self, z) -> float:
        """Largest normalised cut violation at ``z`` (<= 0 when feasible)."""
        if not self.cuts:
            return 0.0
        A, b = self._A, self._b
        return float(np.max((A @ z - b) / np.linalg.norm(A, axis=1)))

    def __repr__(self):
        return f"PolyhedralAccumulator(base={self.base.kind}, cuts={len(self.cuts)})"


def _stack(hs: Sequence[HalfSpace]):
    hs = [h for h in hs if not h.whole]
    if not hs:
        return None, None
    A = np.array([h.normal for h in hs])
    b = np.array([h.offset for h in hs])
    return A, b


def parallel_conflict(cuts: Sequence[HalfSpace]) -> bool:
    """Certified emptiness test: two half-spaces with opposite parallel
    normals and an empty slab between them."""
    if not cuts:
        return False
    return PolyhedralAccumulator(WholeSpace(cuts[0].dim), cuts).conflict


def _active_set_project(x0, A, b, max_iter=None, warm=None, out_active=None):
    """Exact projection of ``x0`` onto ``{z : A z <= b}``.

    Goldfarb-Idnani dual active-set method specialised to the identity
    Hessian: start from the unconstrained minimiser ``x0`` and add the most
    violated constraint until all hold, dropping constraints whose
    multipliers would turn negative.  Emptiness is certified when a violated
    constraint's normal lies in the span of the active ones with no
    multiplier able to absorb it (Farkas).

    ``warm`` is an optional list of row indices to start from; it is used
    only if those rows are independent with nonnegative equality
    multipliers.  The final active set is written into ``out_active``.
    """
    nrm = np.linalg.norm(A, axis=1)
    N = A / nrm[:, None]
    c = b / nrm
    d = x0.shape[0]
    m = N.shape[0]
    x = x0.copy()
    scale = 1.0 + norm(x0) + float(np.abs(c).max(initial=0.0))
    feas_tol = 1e-13 * scale
    active: list[int] = []
    u = np.zeros(0)
    max_iter = max_iter or 20 * (m + d) + 100
    Q = R = None
    if warm:
        active, u, x = _warm_start(x0, N, c, [i for i in warm if i < m])

    def done(result):
        if out_active is not None and not isinstance(result, Infeasible):
            out_active[:] = active
        return result

    def factor():
        if not active:
            return None, None
        return np.linalg.qr(N[active].T, mode="complete")

    for _ in range(max_iter):
        viol = N @ x - c
        p = int(np.argmax(viol))
        if viol[p] <= feas_tol or p in active:
            # (an active row can only show up here through rounding)
            return done(_refine(x0, N, c, x, active, feas_tol))
        up = 0.0
        while True:
            q = len(active)
            Q, R = factor()
            if q:
                J1, J2 = Q[:, :q], Q[:, q:]
                z = -(J2 @ (J2.T @ N[p]))
                r = np.linalg.solve(R[:q, :q], J1.T @ N[p])
            else:
                z = -N[p]
                r = np.zeros(0)
            # dual (partial) step length
            t1, drop = np.inf, -1
            for k in range(q):
                if r[k] > 1e-14:
                    tk = u[k] / r[k]
                    if tk < t1:
                        t1, drop = tk, k
            zz = float(z @ z)
            if zz > 1e-24:
                t2 = (N[p] @ x - c[p]) / zz
            else:
                t2 = np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                return Infeasible("active-set dual certifies empty polyhedron")
            if np.isfinite(t2):
                x = x + t * z
            u = u - t * r
            up += t
            if t2 <= t1:
                active.append(p)
                u = np.append(u, up)
                break
            del active[drop]
            u = np.delete(u, drop)
    log.warning("active-set projection hit its iteration cap; returning last iterate")
    return done(x)


def _warm_start(x0, N, c, S):
    S = list(dict.fromkeys(S))[: x0.shape[0]]
    while S:
        Ns = N[S]
        _, R = np.linalg.qr(Ns.T)
        if np.min(np.abs(np.diag(R))) < 1e-10:
            break
        lam = np.linalg.solve(Ns @ Ns.T, Ns @ x0 - c[S])
        k = int(np.argmin(lam))
        if lam[k] >= 0:
            return S, lam, x0 - Ns.T @ lam
        del S[k]
    return [], np.zeros(0), x0.copy()


def _refine(x0, N, c, x, active, tol):
    # re-solve the equality-constrained projection on the final active set
    if not active:
        return x
    Na = N[active]
    try:
        lam = np.linalg.solve(Na @ Na.T, Na @ x0 - c[active])
    except np.linalg.LinAlgError:
        return x
    if np.any(lam < -1e-10):
        return x
    xr = x0 - Na.T @ lam
    if np.max(N @ xr - c) <= tol and norm(xr - x) <= 1e-8 * (1.0 + norm(x)):
        return xr
    return x


def _dykstra_cycles(x0, projectors: Sequence[Callable]):
    """Yield ``(x, move)`` after each full Dykstra cycle."""
    x = as_vector(x0).copy()
    incs = [np.zeros_like(x) for _ in projectors]
    while True:
        x_prev = x
        for i, P in enumerate(projectors):
            y = P(x + incs[i])
            incs[i] = x + incs[i] - y
            x = y
        yield x, norm(x - x_prev)


def dykstra(x0, projectors: Sequence[Callable], tol: float = 1e-12, max_cycles: int = 100_000):
    """Dykstra's cyclic projection onto the intersection of convex sets.

    Returns ``(x, cycles, converged)``.  Stops when the iterate moves less
    than ``tol * (1 + |x0|)`` over a full cycle.
    """
    scale = 1.0 + norm(as_vector(x0))
    x = as_vector(x0)
    for cycle, (x, move) in enumerate(_dykstra_cycles(x0, projectors), start=1):
        if move <= tol * scale:
            return x, cycle, True
        if cycle == max_cycles:
            break
    return x, max_cycles, False


def project_polyhedron(x0, acc: PolyhedralAccumulator, tol: float = 1e-12,
                       max_inner: int = 100_000, method: str = "auto"):
    """Metric projection of ``x0`` onto ``acc.base ∩ acc.cuts``.

    ``method="dykstra"`` runs Dykstra's cyclic scheme over the base projector
    and every cut projector.  ``method="auto"`` takes exact routes where one
    exists (no cuts, two cuts over the whole space, polyhedral or affine
    base) and only falls back on Dykstra for a curved base, alternating
    between the base and the exact cut polyhedron.

    Returns an :class:`Infeasible` value when the set is (detected) empty.
    """
    x0 = as_vector(x0, acc.dim)
    base = acc.base
    cuts = list(acc.cuts)
    if not cuts:
        return base.project(x0)
    if acc.witness is None and acc.conflict:
        return Infeasible("contradictory parallel cuts")

    if method == "dykstra":
        projectors = [base.project] + [lambda w, h=h: project_halfspace(w, h) for h in cuts]
        return _dykstra_checked(x0, acc, projectors, tol, max_inner)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")

    if isinstance(base, WholeSpace) and len(cuts) <= 2:
        if len(cuts) == 1:
            return project_halfspace(x0, cuts[0])
        return project_two_halfspaces(x0, cuts[0], cuts[1])

    base_hs = base.halfspaces()
    if base_hs is not None:
        A, b = acc.arrays
        if base_hs:
            Ab, bb = _stack(base_hs)
            A, b = np.vstack([Ab, A]), np.concatenate([bb, b])
        active = []
        z = _active_set_project(x0, A, b, warm=acc.active_hint, out_active=active)
        acc.active_hint = active
        return z

    if isinstance(base, AffineSubspace):
        # z = p + U c reduces to a least-distance problem in c-space
        A, b = acc.arrays
        U, p = base.basis, base.basepoint
        if U.shape[1] == 0:
            return p.copy() if np.all(A @ p <= b + 1e-12 * (1 + np.abs(b))) else Infeasible(
                "affine point violates cuts")
        c0 = U.T @ (x0 - p)
        AU = A @ U
        keep = np.linalg.norm(AU, axis=1) > 1e-14 * np.linalg.norm(A, axis=1)
        bb = b - A @ p
        if np.any(~keep & (bb < -1e-12 * (1 + np.abs(b)))):
            return Infeasible("cut orthogonal to affine base excludes it")
        if not np.any(keep):
            return base.project(x0)
        c = _active_set_project(c0, AU[keep], bb[keep])
        if isinstance(c, Infeasible):
            return c
        return p + U @ c

    # curved base: two-set Dykstra between base and the exact cut polyhedron
    A, b = acc.arrays
    probe = _active_set_project(x0, A, b)
    if isinstance(probe, Infeasible):
        return probe
    if base.contains(probe, 1e-12):
        return probe

    def cut_projector(w):
        z = _active_set_project(w, A, b)
        if isinstance(z, Infeasible):
            raise _EmptyCuts
        return z

    try:
        return _dykstra_checked(x0, acc, [base.project, cut_projector], tol, max_inner)
    except _EmptyCuts:
        return Infeasible("cut polyhedron is empty")


class _EmptyCuts(Exception):
    pass


class ProjectionNotConverged(RuntimeError):
    """Dykstra ran out of cycles while still approaching the set."""


def _dykstra_checked(x0, acc, projectors, tol, max_inner):
    def gap_at(x):
        return max(acc.max_violation(x), norm(acc.base.project(x) - x))

    scale = 1.0 + norm(x0)
    x, converged, half_gap = as_vector(x0), False, None
    for cycle, (x, move) in enumerate(_dykstra_cycles(x0, projectors), start=1):
        if move <= tol * scale:
            converged = True
            break
        if cycle == max(1, max_inner // 2):
            half_gap = gap_at(x)
        if cycle >= max_inner:
            break
    gap = gap_at(x)
    sep = max(1e3 * tol, 1e-9) * scale
    if gap > sep:
        # an empty intersection leaves a gap that settles at the separation
        # distance; a gap still shrinking is slow convergence, not emptiness
        if not converged and half_gap is not None and gap < (1 - 1e-9) * half_gap:
            raise ProjectionNotConverged(
                f"dykstra gap {gap:.3e} still shrinking after {max_inner} cycles")
        log.debug("dykstra: gap %.3e after %d cycles (converged=%s)", gap, cycle, converged)
        return Infeasible(f"alternating projections stalled with gap {gap:.3e}")
    if not converged:
        log.warning("dykstra hit %d cycles without meeting tol %.1e", max_inner, tol)
    return x
