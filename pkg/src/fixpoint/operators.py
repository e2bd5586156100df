"""Operator constructions.

Mappings are immutable callables on ``R^d``.  Linear (and affine) mappings
carry their matrix so compositions and averages stay cheap; everything
else falls back on closures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad_vec

from .hilbert import AffineSubspace, Ball, ConvexSet, as_vector


class OpClass(str, Enum):
    NONEXPANSIVE = "nonexpansive"
    QUASI_NONEXPANSIVE = "quasi-nonexpansive"
    FIRMLY_NONEXPANSIVE = "firmly-nonexpansive"
    TC = "tc-class"
    UNKNOWN = "unknown"


# ---------------------------------------------------------------------------
# fixed-point sets


class FixedPointSet:
    """A closed convex set given by its exact projection.

    Use the constructors :meth:`affine`, :meth:`singleton`, :meth:`explicit`.
    """

    def __init__(self, kind: str, dim: int, project: Callable, subspace: AffineSubspace | None = None,
                 sampler: Callable | None = None):
        self.kind = kind
        self.dim = dim
        self._project = project
        self.subspace = subspace
        self._sampler = sampler

    @classmethod
    def affine(cls, basepoint, directions=None):
        base = as_vector(basepoint)
        if directions is None:
            directions = np.zeros((base.shape[0], 0))
        S = AffineSubspace(base, directions)

        def sample(rng, k):
            c = rng.standard_normal((k, S.basis.shape[1]))
            return S.basepoint + c @ S.basis.T

        return cls("affine", S.dim, S.project, subspace=S, sampler=sample)

    @classmethod
    def from_subspace(cls, S: AffineSubspace):
        return cls.affine(S.basepoint, S.basis)

    @classmethod
    def singleton(cls, p):
        return cls.affine(p)

    @classmethod
    def explicit(cls, dim: int, project: Callable, scale: float = 3.0):
        def sample(rng, k):
            return np.array([project(scale * rng.standard_normal(dim)) for _ in range(k)])

        return cls("explicit", dim, project, sampler=sample)

    def project(self, x) -> np.ndarray:
        return self._project(as_vector(x, self.dim))

    def contains(self, x, tol: float = 1e-10) -> bool:
        x = as_vector(x, self.dim)
        return float(np.linalg.norm(self.project(x) - x)) <= tol * (1 + float(np.linalg.norm(x)))

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return self._sampler(rng, k)

    @property
    def is_singleton(self) -> bool:
        return self.subspace is not None and self.subspace.basis.shape[1] == 0

    def __repr__(self):
        if self.subspace is not None:
            return f"FixedPointSet(affine, dim={self.dim}, k={self.subspace.basis.shape[1]})"
        return f"FixedPointSet({self.kind}, dim={self.dim})"


# ---------------------------------------------------------------------------
# mappings


@dataclass(frozen=True, eq=False)
class Mapping:
    """``x -> apply(x)`` on R^dim with a declared regularity class.

    ``matrix``/``shift`` are set when the map is affine (``M x + c``).
    The declared class is a claim; :mod:`fixpoint.verify` checks it.
    """

    apply: Callable[[np.ndarray], np.ndarray]
    dim: int
    kind: OpClass = OpClass.NONEXPANSIVE
    fixed: FixedPointSet | None = None
    name: str = "T"
    matrix: np.ndarray | None = field(default=None, repr=False)
    shift: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)

    @property
    def is_affine(self) -> bool:
        return self.matrix is not None


def affine_map(M, c=None, kind=OpClass.NONEXPANSIVE, fixed=None, name="affine") -> Mapping:
    M = np.array(M, dtype=np.float64)
    d = M.shape[0]
    if M.shape != (d, d):
        raise ValueError(f"square matrix required, got {M.shape}")
    M.setflags(write=False)
    if c is None:
        c = np.zeros(d)
        apply = M.__matmul__
    else:
        c = as_vector(c, d)
        c.setflags(write=False)

        def apply(x):
            return M @ x + c

    return Mapping(apply, d, kind, fixed, name, M, c)


def identity(dim: int) -> Mapping:
    I = np.eye(dim)
    return Mapping(lambda x: np.array(x, dtype=np.float64), dim, OpClass.FIRMLY_NONEXPANSIVE,
                   FixedPointSet.affine(np.zeros(dim), I), "Id", I, np.zeros(dim))


def scaled_identity(dim: int, factor: float) -> Mapping:
    """``factor * Id``.  Nonexpansive iff ``|factor| <= 1``."""
    kind = OpClass.NONEXPANSIVE if abs(factor) <= 1 else OpClass.UNKNOWN
    if factor == 1:
        return identity(dim)
    return affine_map(factor * np.eye(dim), None, kind, FixedPointSet.singleton(np.zeros(dim)),
                      f"{factor:g}*Id")


def constant_map(point) -> Mapping:
    p = as_vector(point)
    d = p.shape[0]
    return affine_map(np.zeros((d, d)), p, OpClass.NONEXPANSIVE, FixedPointSet.singleton(p),
                      "const")


def subspace_projection(S: AffineSubspace) -> Mapping:
    U, p = S.basis, S.basepoint
    P = U @ U.T
    return affine_map(P, p - P @ p, OpClass.FIRMLY_NONEXPANSIVE, FixedPointSet.from_subspace(S),
                      "P_L")


def subspace_reflection(S: AffineSubspace) -> Mapping:
    U, p = S.basis, S.basepoint
    Rm = 2 * (U @ U.T) - np.eye(S.dim)
    return affine_map(Rm, p - Rm @ p, OpClass.NONEXPANSIVE, FixedPointSet.from_subspace(S), "refl_L")


def convex_projection(C: ConvexSet) -> Mapping:
    return Mapping(C.project, C.dim, OpClass.FIRMLY_NONEXPANSIVE,
                   FixedPointSet.explicit(C.dim, C.project), f"P_{C.kind}")


def rotation_matrix(angles: Sequence[float], fixed_dims: int) -> np.ndarray:
    d = 2 * len(angles) + fixed_dims
    M = np.eye(d)
    for i, th in enumerate(angles):
        c, s = math.cos(th), math.sin(th)
        M[2 * i:2 * i + 2, 2 * i:2 * i + 2] = [[c, -s], [s, c]]
    return M


def rotation(angles: Sequence[float], fixed_dims: int = 0) -> Mapping:
    """Block rotation; its fixed set is the trailing ``fixed_dims`` axes plus
    blocks whose angle is a multiple of 2π."""
    M = rotation_matrix(angles, fixed_dims)
    d = M.shape[0]
    return affine_map(M, None, OpClass.NONEXPANSIVE,
                      FixedPointSet.affine(np.zeros(d), _rotation_fixed_basis(angles, fixed_dims)),
                      "rot")


def _rotation_fixed_basis(angles, fixed_dims, tol=1e-12):
    d = 2 * len(angles) + fixed_dims
    cols = []
    for i, th in enumerate(angles):
        if abs(math.remainder(th, 2 * math.pi)) <= tol:
            cols += [2 * i, 2 * i + 1]
    cols += list(range(2 * len(angles), d))
    return np.eye(d)[:, cols]


def compose(outer: Mapping, inner: Mapping, kind: OpClass | None = None) -> Mapping:
    if outer.dim != inner.dim:
        raise ValueError("dimension mismatch in composition")
    if kind is None:
        ne = {OpClass.NONEXPANSIVE, OpClass.FIRMLY_NONEXPANSIVE}
        kind = OpClass.NONEXPANSIVE if outer.kind in ne and inner.kind in ne else OpClass.UNKNOWN
    name = f"{outer.name}∘{inner.name}"
    if outer.is_affine and inner.is_affine:
        return affine_map(outer.matrix @ inner.matrix, outer.matrix @ inner.shift + outer.shift,
                          kind, None, name)
    return Mapping(lambda x: outer(inner(x)), outer.dim, kind, None, name)


def combine(a: float, first: Mapping, second: Mapping, kind: OpClass | None = None,
            fixed: FixedPointSet | None = None, name: str | None = None) -> Mapping:
    """``x -> a * first(x) + (1 - a) * second(x)``."""
    if kind is None:
        ne = {OpClass.NONEXPANSIVE, OpClass.FIRMLY_NONEXPANSIVE}
        kind = (OpClass.NONEXPANSIVE if 0 <= a <= 1 and first.kind in ne and second.kind in ne
                else OpClass.UNKNOWN)
    name = name or f"({a:g}·{first.name}+{1 - a:g}·{second.name})"
    if first.is_affine and second.is_affine:
        return affine_map(a * first.matrix + (1 - a) * second.matrix,
                          a * first.shift + (1 - a) * second.shift, kind, fixed, name)
    return Mapping(lambda x: a * first(x) + (1 - a) * second(x), first.dim, kind, fixed, name)


def _halved_kind(kind: OpClass) -> OpClass:
    if kind in (OpClass.NONEXPANSIVE, OpClass.FIRMLY_NONEXPANSIVE):
        return OpClass.FIRMLY_NONEXPANSIVE
    if kind in (OpClass.QUASI_NONEXPANSIVE, OpClass.TC):
        return OpClass.TC
    return OpClass.UNKNOWN


def _unhalved_kind(kind: OpClass) -> OpClass:
    if kind == OpClass.FIRMLY_NONEXPANSIVE:
        return OpClass.NONEXPANSIVE
    if kind == OpClass.TC:
        return OpClass.QUASI_NONEXPANSIVE
    return OpClass.UNKNOWN


def halve(R: Mapping) -> Mapping:
    """``T = (R + Id) / 2``.

    Firmly nonexpansive when ``R`` is nonexpansive; in the T-class whenever
    ``R`` is quasi-nonexpansive.  Fixed points are those of ``R``.
    """
    return combine(0.5, R, identity(R.dim), _halved_kind(R.kind), R.fixed, f"½({R.name}+Id)")


def unhalve(T: Mapping) -> Mapping:
    """Inverse of :func:`halve`: ``R = 2T - Id``."""
    return combine(2.0, T, identity(T.dim), _unhalved_kind(T.kind), T.fixed, f"(2{T.name}-Id)")


# ---------------------------------------------------------------------------
# families


class OperatorFamily:
    """Indexed sequence ``n -> T_n`` of mappings of one dimension and class."""

    def __init__(self, at: Callable[[int], Mapping], dim: int, kind: OpClass,
                 description: str = "", fixed: FixedPointSet | None = None,
                 constant: bool = False, period: int | None = None):
        self._at = at
        self._cached = None
        # constant families evaluate their member once
        self.constant = constant
        self.dim = dim
        self.kind = kind
        self.description = description
        # common fixed-point set when known in closed form
        self.fixed = fixed
        # T_{n+period} = T_n for all n, when known; constant families have period 1
        self.period = 1 if constant else period

    def at(self, n: int) -> Mapping:
        if self.constant:
            if self._cached is None:
                self._cached = self._at(0)
            return self._cached
        return self._at(n)

    def __repr__(self):
        return f"OperatorFamily({self.description or '?'}, dim={self.dim}, {self.kind.value})"


def constant_family(T: Mapping, description: str | None = None) -> OperatorFamily:
    return OperatorFamily(lambda n: T, T.dim, T.kind, description or f"const {T.name}", T.fixed,
                          constant=True)


def cyclic_family(maps: Sequence[Mapping], fixed: FixedPointSet | None = None,
                  description: str = "cyclic", kind: OpClass | None = None) -> OperatorFamily:
    maps = list(maps)
    kinds = {m.kind for m in maps}
    if kind is None:
        kind = kinds.pop() if len(kinds) == 1 else OpClass.NONEXPANSIVE
    return OperatorFamily(lambda n: maps[n % len(maps)], maps[0].dim, kind, description, fixed,
                          period=len(maps))


def map_family(f: Callable[[Mapping], Mapping], fam: OperatorFamily, kind: OpClass,
               description: str) -> OperatorFamily:
    return OperatorFamily(lambda n: f(fam.at(n)), fam.dim, kind, description, fam.fixed,
                          constant=fam.constant, period=fam.period)


def halve_family(fam: OperatorFamily) -> OperatorFamily:
    return map_family(halve, fam, _halved_kind(fam.kind), f"½({fam.description}+Id)")


def unhalve_family(fam: OperatorFamily) -> OperatorFamily:
    return map_family(unhalve, fam, _unhalved_kind(fam.kind), f"2·({fam.description})-Id")


def relax(T: Mapping | OperatorFamily, lam: Callable[[int], float] | float,
          delta: float = 1e-3, check_prefix: int = 1000) -> OperatorFamily:
    """``T'_n x = x + lam_n (T_n x - x)`` with ``lam_n`` in ``[delta, 1]``."""
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    lam_fn = lam if callable(lam) else (lambda n, v=float(lam): v)
    for n in range(check_prefix):
        v = lam_fn(n)
        if not delta <= v <= 1:
            raise ValueError(f"relaxation lambda_{n} = {v} outside [{delta}, 1]")
    fam = T if isinstance(T, OperatorFamily) else constant_family(T)
    Id = identity(fam.dim)

    def at(n):
        v = lam_fn(n)
        if not delta <= v <= 1:
            raise ValueError(f"relaxation lambda_{n} = {v} outside [{delta}, 1]")
        Tn = fam.at(n)
        if v == 1.0:
            return Tn
        return combine(v, Tn, Id, Tn.kind, Tn.fixed, f"relax({Tn.name},{v:g})")

    return OperatorFamily(at, fam.dim, fam.kind, f"relax({fam.description})", fam.fixed,
                          constant=fam.constant and not callable(lam),
                          period=None if callable(lam) else fam.period)


# ---------------------------------------------------------------------------
# alpha schedules and the Gamma tower


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class AlphaSchedule:
    """Per-level mixing weights ``alpha_n^(j)``, level 1 first.

    Level 1 must stay in ``[0, b)``; deeper levels in ``(a, b)`` with
    ``0 < a < b < 1``.
    """

    levels: tuple
    a: float = 0.1
    b: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "constant", not any(callable(f) for f in self.levels))
        lv = tuple(f if callable(f) else _const(f) for f in self.levels)
        object.__setattr__(self, "levels", lv)
        if not 0 < self.a < self.b < 1:
            raise ScheduleError(f"need 0 < a < b < 1, got a={self.a}, b={self.b}")

    @classmethod
    def constant(cls, values: Sequence[float], a: float = 0.1, b: float = 0.9):
        return cls(tuple(float(v) for v in values), a, b)

    def __len__(self):
        return len(self.levels)

    def value(self, j: int, n: int) -> float:
        """``alpha_n^(j)`` with 1-based level ``j``."""
        return float(self.levels[j - 1](n))

    def validate(self, prefix: int = 1000):
        for j in range(1, len(self.levels) + 1):
            for n in range(prefix):
                v = self.value(j, n)
                if j == 1:
                    ok = 0 <= v < self.b
                else:
                    ok = self.a < v < self.b
                if not ok:
                    raise ScheduleError(f"alpha^({j})_{n} = {v} violates bounds (a={self.a}, b={self.b})")
        return self


def _const(v):
    v = float(v)
    return lambda n: v


class GammaTower(OperatorFamily):
    """``n -> Gamma_n^(1)`` for the backward recursion

    ``Gamma^(j) x = alpha^(j) x + (1 - alpha^(j)) T^(j) Gamma^(j+1) x``,
    ``Gamma^(N+1) = Id``.

    Per-level pieces stay accessible for cascade diagnostics.
    """

    def __init__(self, families: Sequence[OperatorFamily], alphas: AlphaSchedule,
                 fixed: FixedPointSet | None = None, check_prefix: int = 1000):
        families = list(families)
        if not families:
            raise ValueError("gamma tower needs at least one level")
        if len(families) != len(alphas):
            raise ValueError(f"{len(families)} levels but {len(alphas)} alpha schedules")
        dims = {f.dim for f in families}
        if len(dims) != 1:
            raise ValueError("levels of different dimension")
        ne = {OpClass.NONEXPANSIVE, OpClass.FIRMLY_NONEXPANSIVE}
        if any(f.kind not in ne for f in families):
            raise ValueError("gamma tower levels must be nonexpansive families")
        alphas.validate(check_prefix)
        self.families = families
        self.alphas = alphas
        d = dims.pop()
        super().__init__(lambda n: self.gamma(n, 1), d, OpClass.NONEXPANSIVE,
                         f"gamma[{', '.join(f.description for f in families)}]", fixed,
                         constant=alphas.constant and all(f.constant for f in families),
                         period=_common_period([f.period for f in families]) if alphas.constant
                         else None)

    @property
    def depth(self) -> int:
        return len(self.families)

    def gamma(self, n: int, j: int) -> Mapping:
        N = self.depth
        g = identity(self.dim)
        for level in range(N, j - 1, -1):
            a = self.alphas.value(level, n)
            Tj = self.families[level - 1].at(n)
            inner = compose(Tj, g, OpClass.NONEXPANSIVE)
            g = inner if a == 0 else combine(a, identity(self.dim), inner, OpClass.NONEXPANSIVE)
        return Mapping(g.apply, g.dim, OpClass.NONEXPANSIVE, self.fixed, f"Γ{j}_{n}", g.matrix,
                       g.shift)

    def level_map(self, n: int, j: int) -> Mapping:
        """``T_n^(j)``."""
        return self.families[j - 1].at(n)

    def inner_map(self, n: int, j: int) -> Mapping:
        """``T_n^(j) Gamma_n^(j+1)``."""
        nxt = self.gamma(n, j + 1) if j < self.depth else identity(self.dim)
        return compose(self.level_map(n, j), nxt, OpClass.NONEXPANSIVE)


def _common_period(periods):
    if any(p is None for p in periods):
        return None
    return math.lcm(*periods)


def gamma_tower(families: Sequence[OperatorFamily], alphas: AlphaSchedule,
                fixed: FixedPointSet | None = None) -> GammaTower:
    return GammaTower(families, alphas, fixed)


# ---------------------------------------------------------------------------
# time schedules


class TimeSchedule:
    """``n -> t_n``.  Kinds: ``triangular`` (sweeps), ``divergent``
    (``t_n = scale * (n + 1)``) and ``custom`` (a list, cycled)."""

    def __init__(self, kind: str, times: Sequence[float] | None = None, scale: float = 1.0):
        if kind not in ("triangular", "divergent", "custom"):
            raise ScheduleError(f"unknown schedule kind {kind!r}")
        if kind == "custom":
            if not times:
                raise ScheduleError("custom schedule needs a non-empty time list")
            times = [float(t) for t in times]
            if any(t < 0 for t in times):
                raise ScheduleError("times must be nonnegative")
        if kind == "divergent" and not scale > 0:
            raise ScheduleError("divergent schedule needs a positive scale")
        self.kind = kind
        self.times = times
        self.scale = float(scale)

    @classmethod
    def triangular(cls):
        return cls("triangular")

    @classmethod
    def divergent(cls, scale: float = 1.0):
        return cls("divergent", scale=scale)

    @classmethod
    def custom(cls, times):
        return cls("custom", times)

    def __call__(self, n: int) -> float:
        if n < 0:
            raise IndexError(n)
        if self.kind == "triangular":
            return triangular_time(n)
        if self.kind == "divergent":
            return self.scale * (n + 1)
        return self.times[n % len(self.times)]

    def prefix(self, length: int) -> np.ndarray:
        return np.array([self(n) for n in range(length)])

    def to_dict(self):
        if self.kind == "custom":
            return {"kind": "custom", "times": list(self.times)}
        if self.kind == "divergent":
            return {"kind": "divergent", "scale": self.scale}
        return {"kind": "triangular"}


def triangular_time(n: int) -> float:
    # block k (k >= 1) covers indices [k^2 - 1, (k+1)^2 - 1) and walks
    # 0 -> 1 -> 0 in steps of 1/k
    k = math.isqrt(n + 1)
    j = n - (k * k - 1)
    return (k - abs(j - k)) / k


def check_sweep_prefix(sched: TimeSchedule, length: int = 10_000) -> dict:
    """Prefix evidence for the sweep conditions: liminf 0, limsup > 0,
    increments vanishing."""
    t = sched.prefix(length)
    tail = t[length // 2:]
    inc = np.abs(np.diff(t))
    half = len(inc) // 2
    return {
        "tail_min": float(tail.min()),
        "tail_max": float(tail.max()),
        "head_max_increment": float(inc[:max(half, 1)].max()),
        "tail_max_increment": float(inc[half:].max()),
        "ok": bool(tail.min() == 0.0 and tail.max() > 0 and inc[half:].max() < inc[:max(half, 1)].max()),
    }


def check_divergent_prefix(sched: TimeSchedule, length: int = 1000) -> bool:
    t = sched.prefix(length)
    return bool(np.all(t > 0) and np.all(np.diff(t) > 0))


# ---------------------------------------------------------------------------
# semigroups


class Semigroup:
    """Nonexpansive one-parameter semigroup ``t -> T(t)``.

    ``generator`` is ``"linear_psd"`` (``T(t) = exp(-tA)``), ``"rotation"``
    or ``"custom"``; the first two give closed-form Cesàro averages.
    """

    def __init__(self, dim: int, at: Callable[[float], Mapping], generator: str = "custom",
                 cesaro: Callable[[float], Mapping] | None = None, info: dict | None = None,
                 fixed: FixedPointSet | None = None):
        self.dim = dim
        self._at = at
        self._cesaro = cesaro
        self.generator = generator
        self.info = info or {}
        self.fixed = fixed

    def at(self, t: float) -> Mapping:
        if t < 0:
            raise ValueError(f"semigroup time must be >= 0, got {t}")
        return self._at(float(t))

    def cesaro(self, t: float) -> Mapping:
        """``x -> (1/t) ∫_0^t T(s) x ds``."""
        if not t > 0:
            raise ValueError(f"Cesàro average needs t > 0, got {t}")
        if self._cesaro is not None:
            return self._cesaro(float(t))
        return cesaro_by_quadrature(self, float(t))


def cesaro_by_quadrature(S: Semigroup, t: float, tol: float = 1e-10) -> Mapping:
    def apply(x):
        x = np.asarray(x, dtype=np.float64)
        val, _ = quad_vec(lambda s: S.at(s)(x), 0.0, t, epsabs=tol, epsrel=tol)
        return val / t

    return Mapping(apply, S.dim, OpClass.NONEXPANSIVE, S.fixed, f"cesaro({t:g})")


def _psd_filter(lam, t):
    # (1 - exp(-t lam)) / (t lam), = 1 at lam = 0
    x = t * lam
    out = np.ones_like(x)
    nz = x > 1e-12
    out[nz] = -np.expm1(-x[nz]) / x[nz]
    out[~nz] = 1 - x[~nz] / 2
    return out


def semigroup_linear_psd(A, eig_tol: float = 1e-10) -> Semigroup:
    """``T(t) = exp(-tA)`` for a symmetric positive semidefinite ``A``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"square matrix required, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if not np.allclose(A, A.T, atol=1e-12 * scale, rtol=0):
        raise ValueError("generator matrix is not symmetric")
    lam, V = np.linalg.eigh((A + A.T) / 2)
    if lam.min(initial=0.0) < -eig_tol:
        raise ValueError(f"generator matrix is indefinite (eigenvalue {lam.min():.3e})")
    lam = np.where(lam < 0, 0.0, lam)
    d = A.shape[0]
    kernel = V[:, lam <= eig_tol]
    fixed = FixedPointSet.affine(np.zeros(d), kernel)

    def at(t):
        if t == 0:
            return identity(d)
        return affine_map((V * np.exp(-t * lam)) @ V.T, None, OpClass.FIRMLY_NONEXPANSIVE,
                          fixed, f"exp(-{t:g}A)")

    def cesaro(t):
        return affine_map((V * _psd_filter(lam, t)) @ V.T, None, OpClass.FIRMLY_NONEXPANSIVE,
                          fixed, f"cesaro_A({t:g})")

    return Semigroup(d, at, "linear_psd", cesaro, {"A": A, "eigenvalues": lam, "eigenvectors": V},
                     fixed)


def _rotation_cesaro_block(theta):
    if abs(theta) < 1e-8:
        s = 1 - theta * theta / 6
        c = theta / 2
    else:
        s = math.sin(theta) / theta
        c = (1 - math.cos(theta)) / theta
    return np.array([[s, -c], [c, s]])


def semigroup_rotation(rates: Sequence[float], fixed_dims: int) -> Semigroup:
    """Block rotations by ``rate * t``; identity on the trailing ``fixed_dims``."""
    rates = [float(r) for r in rates]
    d = 2 * len(rates) + fixed_dims
    cols = [c for i, r in enumerate(rates) if r == 0 for c in (2 * i, 2 * i + 1)]
    cols += list(range(2 * len(rates), d))
    fixed = FixedPointSet.affine(np.zeros(d), np.eye(d)[:, cols])

    def at(t):
        if t == 0:
            return identity(d)
        return affine_map(rotation_matrix([r * t for r in rates], fixed_dims), None,
                          OpClass.NONEXPANSIVE, fixed, f"rot({t:g})")

    def cesaro(t):
        M = np.eye(d)
        for i, r in enumerate(rates):
            M[2 * i:2 * i + 2, 2 * i:2 * i + 2] = _rotation_cesaro_block(r * t)
        return affine_map(M, None, OpClass.NONEXPANSIVE, fixed, f"cesaro_rot({t:g})")

    return Semigroup(d, at, "rotation", cesaro, {"rates": rates, "fixed_dims": fixed_dims}, fixed)


def semigroup_family_at_times(S: Semigroup, sched: TimeSchedule, check: bool = True) -> OperatorFamily:
    """``n -> T(t_n)``; the schedule must sweep (liminf 0, limsup > 0,
    vanishing increments)."""
    if check and sched.kind != "triangular" and not check_sweep_prefix(sched)["ok"]:
        raise ScheduleError("time schedule does not sweep (liminf 0, limsup > 0, increments -> 0)")
    kind = OpClass.NONEXPANSIVE
    return OperatorFamily(lambda n: S.at(sched(n)), S.dim, kind,
                          f"{S.generator}@{sched.kind}", S.fixed)


def cesaro_family(S: Semigroup, sched: TimeSchedule) -> OperatorFamily:
    """``n -> (1/t_n) ∫_0^{t_n} T(s) ds`` for a positive divergent schedule."""
    if sched.kind != "divergent" and not check_divergent_prefix(sched):
        raise ScheduleError("Cesàro family needs a positive, increasing, divergent schedule")

    def at(n):
        t = sched(n)
        if not t > 0:
            raise ScheduleError(f"t_{n} = {t} is not positive")
        return S.cesaro(t)

    return OperatorFamily(at, S.dim, OpClass.NONEXPANSIVE, f"cesaro[{S.generator}]", S.fixed)


# ---------------------------------------------------------------------------
# zoo


def random_subspace(rng: np.random.Generator, dim: int, k: int) -> AffineSubspace:
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return AffineSubspace(np.zeros(dim), Q[:, :k])


def random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((dim, dim)))
    return Q * np.sign(np.diag(R))


def random_nonexpansive_affine(rng: np.random.Generator, dim: int, n_fixed: int | None = None) -> Mapping:
    """``R x = p + M (x - p)`` with ``|M| <= 1`` and ``Fix(R) = p + span(U)``.

    ``M`` is the identity on a random ``n_fixed``-dimensional subspace ``U``
    and a shrunken random orthogonal map on its complement.
    """
    if n_fixed is None:
        n_fixed = int(rng.integers(0, dim))
    Q = random_orthogonal(rng, dim)
    U, W = Q[:, :n_fixed], Q[:, n_fixed:]
    m = dim - n_fixed
    inner_M = random_orthogonal(rng, m) * rng.uniform(0.3, 0.95, size=m) if m else np.zeros((0, 0))
    M = U @ U.T + W @ inner_M @ W.T
    p = rng.standard_normal(dim)
    fixed = FixedPointSet.affine(p, U)
    return affine_map(M, p - M @ p, OpClass.NONEXPANSIVE, fixed, "rand_affine")


def zoo(dim: int, rng: np.random.Generator) -> list[Mapping]:
    """Built-in nonexpansive mappings with known fixed-point sets."""
    out = []
    L = random_subspace(rng, dim, max(1, dim // 2))
    out.append(subspace_projection(L))
    out.append(subspace_reflection(L))
    if dim >= 3:
        Q = random_orthogonal(rng, dim)
        angles = rng.uniform(0.3, 2.5, size=(dim - 1) // 2)
        fixed_dims = dim - 2 * len(angles)
        Rm = Q @ rotation_matrix(angles, fixed_dims) @ Q.T
        F = FixedPointSet.affine(np.zeros(dim), Q[:, 2 * len(angles):])
        out.append(affine_map(Rm, None, OpClass.NONEXPANSIVE, F, "rotation"))
    elif dim == 2:
        th = rng.uniform(0.3, 2.5)
        out.append(affine_map(rotation_matrix([th], 0), None, OpClass.NONEXPANSIVE,
                              FixedPointSet.singleton(np.zeros(2)), "rotation"))
    out.append(random_nonexpansive_affine(rng, dim, n_fixed=0))
    out.append(random_nonexpansive_affine(rng, dim))
    out.append(scaled_identity(dim, -1.0))
    out.append(convex_projection(Ball(rng.standard_normal(dim), 1.0 + rng.uniform())))
    return out
