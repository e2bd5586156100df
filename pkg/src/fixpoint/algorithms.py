"""Iteration drivers: Haugazeau (T-class), CQ and shrinking projection.

All three produce an :class:`IterationTrace`.  Stopping rules are explicit
:class:`RunConfig` fields; the oracle never steers an iteration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .hilbert import (
    ConvexSet,
    HalfSpace,
    Infeasible,
    PolyhedralAccumulator,
    WholeSpace,
    as_vector,
    halfspace_from_pair,
    project_polyhedron,
    project_two_halfspaces,
)
from .operators import FixedPointSet, OperatorFamily, OpClass, halve_family

log = logging.getLogger(__name__)

CONVERGED = "converged"
TERMINATED = "terminated"
DIVERGENT = "divergent"
MAX_ITER = "max_iter"


@dataclass(frozen=True)
class RunConfig:
    """Stopping and projection parameters.

    An iteration is *quiet* when its residual ``|x_n - T_n x_n|`` is below
    ``residual_tol`` or the step it takes is below ``step_tol``.  For the
    Haugazeau and CQ drivers, which keep no cuts, residuals below the
    rounding resolution ``sqrt(eps (1 + |x_n|) |x_n - x0|)`` are also quiet.
    Convergence is declared after ``patience`` consecutive quiet iterations.
    """

    max_iter: int = 100_000
    residual_tol: float = 1e-8
    step_tol: float = 1e-12
    norm_cap: float = 1e8
    proj_tol: float = 1e-12
    proj_max_inner: int = 100_000
    patience: int = 1

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        for name in ("residual_tol", "step_tol", "norm_cap", "proj_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.proj_max_inner < 1 or self.patience < 1:
            raise ValueError("proj_max_inner and patience must be >= 1")


@dataclass
class Step:
    n: int
    x: np.ndarray
    tx: np.ndarray
    dist_from_start: float
    residual: float
    step_norm: float | None = None
    cut_count: int | None = None


@dataclass
class Outcome:
    status: str
    n: int
    x: np.ndarray | None = None
    reason: str = ""

    def to_dict(self):
        return {"status": self.status, "n": self.n,
                "x": None if self.x is None else self.x.tolist(), "reason": self.reason}


@dataclass
class IterationTrace:
    algorithm: str
    x0: np.ndarray
    steps: list = field(default_factory=list)
    outcome: Outcome | None = None

    @property
    def converged(self) -> bool:
        return self.outcome is not None and self.outcome.status == CONVERGED

    @property
    def final(self) -> np.ndarray:
        if self.outcome is not None and self.outcome.x is not None:
            return self.outcome.x
        return self.steps[-1].x

    def iterates(self) -> np.ndarray:
        return np.array([s.x for s in self.steps])

    def dists(self) -> np.ndarray:
        return np.array([s.dist_from_start for s in self.steps])

    def residuals(self) -> np.ndarray:
        return np.array([s.residual for s in self.steps])

    def step_norms(self) -> np.ndarray:
        return np.array([s.step_norm for s in self.steps if s.step_norm is not None])

    def partial_sums(self) -> tuple[float, float]:
        """``(sum |x_{n+1} - x_n|^2, sum |x_n - T_n x_n|^2)``."""
        return float(np.sum(self.step_norms() ** 2)), float(np.sum(self.residuals() ** 2))


@dataclass(frozen=True)
class Problem:
    C: ConvexSet
    x0: np.ndarray
    family: OperatorFamily
    oracle: FixedPointSet | None = None

    def __post_init__(self):
        x0 = as_vector(self.x0, self.C.dim)
        if self.family.dim != self.C.dim:
            raise ValueError(f"family dimension {self.family.dim} != set dimension {self.C.dim}")
        if not self.C.contains(x0, 1e-12):
            log.warning("x0 lies outside C; projecting it onto C")
            x0 = self.C.project(x0)
        object.__setattr__(self, "x0", x0)


def _norm(v) -> float:
    return float(np.linalg.norm(v))


_EPS = float(np.finfo(np.float64).eps)


def _resolution(x, x0) -> float:
    """Smallest residual whose cut still carries information for a
    memoryless driver.

    ``x - Tx`` is computed with absolute error about ``eps |x|``, so the
    normal of ``H(x, Tx)`` tilts by ``eps |x| / r`` and the cut moves by
    ``eps |x| D / r`` at distance ``D ~ |x - x0|`` while the step gains
    only ``r``.  Below ``sqrt(eps |x| D)`` the error grows with every step.
    """
    return float(np.sqrt(_EPS * (1.0 + _norm(x)) * _norm(x - x0)))


class _Driver:
    """Shared bookkeeping: residual/step records, stopping, outcomes."""

    def __init__(self, name, problem: Problem, cfg: RunConfig, period: int | None = None,
                 memoryless: bool = False):
        self.p = problem
        self.cfg = cfg
        self.memoryless = memoryless
        self.trace = IterationTrace(name, problem.x0.copy())
        self.quiet = 0
        # a periodic family must stay quiet over a whole period, so that a
        # point fixed by one member only is never reported as a limit
        self.patience = max(cfg.patience, period or 1)

    def record(self, n, x, tx, cut_count=None) -> Step:
        st = Step(n, x, tx, _norm(x - self.p.x0), _norm(x - tx), cut_count=cut_count)
        self.trace.steps.append(st)
        return st

    def quiet_below(self, st: Step) -> float:
        if self.memoryless:
            return max(self.cfg.residual_tol, _resolution(st.x, self.p.x0))
        return self.cfg.residual_tol

    def stop_before_step(self, st: Step) -> bool:
        cfg = self.cfg
        if st.dist_from_start > cfg.norm_cap:
            self.finish(DIVERGENT, st.n, reason=f"|x_n - x0| = {st.dist_from_start:.3e} > cap")
            return True
        if st.residual < self.quiet_below(st):
            self.quiet += 1
        else:
            self.quiet = 0
        if self.quiet >= self.patience:
            self.finish(CONVERGED, st.n, st.x)
            return True
        return False

    def stop_after_step(self, st: Step, x_next) -> bool:
        st.step_norm = _norm(x_next - st.x)
        if st.residual >= self.quiet_below(st) and st.step_norm < self.cfg.step_tol:
            # step smallness counts as quiet on its own
            self.quiet += 1
            if self.quiet >= self.patience:
                self.finish(CONVERGED, st.n, st.x)
                return True
        return False

    def finish(self, status, n, x=None, reason=""):
        self.trace.outcome = Outcome(status, n, None if x is None else x.copy(), reason)
        log.info("%s: %s at n=%d %s", self.trace.algorithm, status, n, reason)


def haugazeau_step(x0, x, tx, C: ConvexSet, cfg: RunConfig):
    """``Q_C(x0, x, tx)``: projection of ``x0`` onto ``C ∩ H(x0, x) ∩ H(x, tx)``."""
    h1 = halfspace_from_pair(x0, x)
    h2 = halfspace_from_pair(x, tx)
    return _project_two_on(x0, h1, h2, C, cfg)


def _project_two_on(x0, h1: HalfSpace, h2: HalfSpace, C: ConvexSet, cfg: RunConfig):
    z = project_two_halfspaces(x0, h1, h2)
    if isinstance(C, WholeSpace):
        return z
    if not isinstance(z, Infeasible) and C.contains(z, 1e-12):
        return z
    # the closed form leaves C (or the pair is empty): project on all three
    acc = PolyhedralAccumulator(C).with_cut(h1).with_cut(h2)
    return project_polyhedron(x0, acc, cfg.proj_tol, cfg.proj_max_inner)


def run_haugazeau(p: Problem, cfg: RunConfig = RunConfig()) -> IterationTrace:
    """``x_{n+1} = Q_C(x0, x_n, T_n x_n)`` for a T-class family."""
    _require_tc(p.family)
    drv = _Driver("haugazeau", p, cfg, p.family.period, memoryless=True)
    x = p.x0.copy()
    for n in range(cfg.max_iter):
        tx = np.asarray(p.family.at(n)(x), dtype=np.float64)
        st = drv.record(n, x, tx)
        if drv.stop_before_step(st):
            return drv.trace
        x_next = haugazeau_step(p.x0, x, tx, p.C, cfg)
        if isinstance(x_next, Infeasible):
            drv.finish(TERMINATED, n, reason=x_next.reason)
            return drv.trace
        if drv.stop_after_step(st, x_next):
            return drv.trace
        x = x_next
    drv.finish(MAX_ITER, cfg.max_iter - 1, x)
    return drv.trace


def cq_halfspaces(x0, x, y):
    """The two CQ sets as half-spaces.

    ``{z : |y - z| <= |x - z|}`` is ``<z, x - y> <= (|x|^2 - |y|^2) / 2`` and
    ``{z : <x - z, x0 - x> >= 0}`` is ``<z, x0 - x> <= <x, x0 - x>``.
    """
    d = x.shape[0]
    n1 = x - y
    # <(x + y)/2, x - y> avoids the cancellation in |x|^2 - |y|^2
    h_c = (HalfSpace(n1, 0.5 * ((x + y) @ n1)) if np.any(n1)
           else HalfSpace(np.zeros(d), 0.0, whole=True))
    n2 = x0 - x
    h_d = HalfSpace(n2, x @ n2) if np.any(n2) else HalfSpace(np.zeros(d), 0.0, whole=True)
    return h_c, h_d


def run_cq(p: Problem, R: OperatorFamily, cfg: RunConfig = RunConfig()) -> IterationTrace:
    """CQ iteration driven by the quasi-nonexpansive ``R_n``.

    The trace records ``T_n x_n = (x_n + R_n x_n) / 2`` so residuals are
    comparable with :func:`run_haugazeau` on ``halve(R_n)``.
    ``p.family`` is ignored.
    """
    if R.dim != p.C.dim:
        raise ValueError("R family dimension mismatch")
    drv = _Driver("cq", p, cfg, R.period, memoryless=True)
    x = p.x0.copy()
    for n in range(cfg.max_iter):
        y = np.asarray(R.at(n)(x), dtype=np.float64)
        st = drv.record(n, x, 0.5 * (x + y))
        if drv.stop_before_step(st):
            return drv.trace
        h_c, h_d = cq_halfspaces(p.x0, x, y)
        x_next = _project_two_on(p.x0, h_d, h_c, p.C, cfg)
        if isinstance(x_next, Infeasible):
            drv.finish(TERMINATED, n, reason=x_next.reason)
            return drv.trace
        if drv.stop_after_step(st, x_next):
            return drv.trace
        x = x_next
    drv.finish(MAX_ITER, cfg.max_iter - 1, x)
    return drv.trace


def run_shrinking(p: Problem, cfg: RunConfig = RunConfig(), *, keep_accumulator: bool = False):
    """Shrinking projection: ``C_{n+1} = C_n ∩ H(x_n, T_n x_n)``,
    ``x_{n+1} = P_{C_{n+1}} x0``.

    With ``keep_accumulator=True`` returns ``(trace, accumulator)``.
    """
    _require_tc(p.family)
    drv = _Driver("shrinking", p, cfg, p.family.period)
    acc = PolyhedralAccumulator(p.C)
    x = p.x0.copy()
    for n in range(cfg.max_iter):
        tx = np.asarray(p.family.at(n)(x), dtype=np.float64)
        st = drv.record(n, x, tx, cut_count=len(acc.cuts))
        if drv.stop_before_step(st):
            break
        cut = halfspace_from_pair(x, tx)
        if cut.whole:
            x_next = x.copy()
        else:
            acc = acc.with_cut(cut)
            x_next = project_polyhedron(p.x0, acc, cfg.proj_tol, cfg.proj_max_inner)
        if isinstance(x_next, Infeasible):
            drv.finish(TERMINATED, n, reason=x_next.reason)
            break
        if drv.stop_after_step(st, x_next):
            break
        x = x_next
    else:
        drv.finish(MAX_ITER, cfg.max_iter - 1, x)
    return (drv.trace, acc) if keep_accumulator else drv.trace


def _require_tc(fam: OperatorFamily):
    if fam.kind not in (OpClass.TC, OpClass.FIRMLY_NONEXPANSIVE):
        raise ValueError(
            f"driver needs a T-class family (declared {fam.kind.value}); wrap R_n with halve()")


def run_all(p: Problem, R: OperatorFamily | None, algorithms, cfg: RunConfig) -> dict:
    """Run the named algorithms on one problem.  ``p.family`` is the T-form;
    ``R`` (the un-halved family) is needed only for ``"cq"``."""
    out = {}
    for name in algorithms:
        if name == "haugazeau":
            out[name] = run_haugazeau(p, cfg)
        elif name == "shrinking":
            out[name] = run_shrinking(p, cfg)
        elif name == "cq":
            if R is None:
                raise ValueError("cq needs the R family")
            out[name] = run_cq(p, R, cfg)
        else:
            raise ValueError(f"unknown algorithm {name!r}")
    return out


def problem_from_r(C: ConvexSet, x0, R: OperatorFamily, oracle: FixedPointSet | None = None) -> Problem:
    """Problem whose T-family is ``halve(R_n)``."""
    return Problem(C, x0, halve_family(R), oracle if oracle is not None else R.fixed)


# ---------------------------------------------------------------------------
# outcome classification


@dataclass
class OutcomeReport:
    status: str
    error_vs_oracle: float | None
    oracle_ok: bool | None
    limit_bound_ok: bool | None
    monotone_ok: bool
    distance_bound_ok: bool | None
    summability_ok: bool | None
    step_residual_ok: bool
    early_stop_ok: bool
    breaches: list = field(default_factory=list)

    @property
    def invariants_ok(self) -> bool:
        return not self.breaches

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items()}


def classify_outcome(trace: IterationTrace, oracle: FixedPointSet | None = None,
                     tol: float = 1e-6, slack: float = 1e-8, family: OperatorFamily | None = None
                     ) -> OutcomeReport:
    """Check a finished trace against the convergence theory.

    Always checked: distances from ``x0`` never decrease, every step is at
    least as long as the residual it answers, and returning to ``x0`` only
    happens through a fixed point.  With an oracle: the error of the limit,
    the bound ``|x_n - x0| <= |x0 - P_F x0|`` and the partial-sum bounds.
    """
    breaches = []
    x0 = trace.x0
    d = trace.dists()
    mono = bool(np.all(np.diff(d) >= -slack * (1 + d[:-1]))) if len(d) > 1 else True
    if not mono:
        i = int(np.argmin(np.diff(d)))
        breaches.append(f"distance from x0 decreased at n={i + 1}")

    sr_ok = True
    for s in trace.steps:
        if s.step_norm is not None and s.step_norm ** 2 < s.residual ** 2 - 1e-9:
            sr_ok = False
            breaches.append(f"step shorter than residual at n={s.n}")
            break

    early_ok = True
    if family is not None:
        for s in trace.steps[1:]:
            if _norm(s.x - x0) == 0.0:
                if not any(_norm(family.at(k)(x0) - x0) <= 1e-9 for k in range(s.n)):
                    early_ok = False
                    breaches.append(f"x_{s.n} = x0 without x0 fixed by an earlier T_k")
                break

    err = oracle_ok = bound_ok = dist_ok = sum_ok = None
    if oracle is not None:
        pfx = oracle.project(x0)
        radius = _norm(x0 - pfx)
        dist_ok = bool(np.all(d <= radius + slack))
        if not dist_ok:
            breaches.append(f"|x_n - x0| exceeded |x0 - P_F x0| = {radius:.6g}")
        ss, rs = trace.partial_sums()
        cap = (radius + 1e-6) ** 2
        sum_ok = ss <= cap and rs <= cap
        if not sum_ok:
            breaches.append(f"partial sums ({ss:.3e}, {rs:.3e}) exceed {cap:.3e}")
        if trace.outcome is not None and trace.outcome.x is not None:
            err = _norm(trace.outcome.x - pfx)
            bound_ok = _norm(x0 - trace.outcome.x) <= radius + tol
            # the limit is only judged when convergence was declared
            if trace.outcome.status == CONVERGED:
                oracle_ok = err < tol
    status = trace.outcome.status if trace.outcome else "incomplete"
    return OutcomeReport(status, err, oracle_ok, bound_ok, mono, dist_ok, sum_ok, sr_ok, early_ok,
                         breaches)


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})


__all__ = [
    "RunConfig", "Step", "Outcome", "IterationTrace", "Problem", "run_haugazeau", "run_cq",
    "run_shrinking", "run_all", "classify_outcome", "OutcomeReport", "problem_from_r",
    "haugazeau_step", "cq_halfspaces", "CONVERGED", "TERMINATED", "DIVERGENT", "MAX_ITER",
]
