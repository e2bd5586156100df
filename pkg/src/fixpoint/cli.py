"""Command-line front end.

``fixpoint run|verify|compare <config.json>`` and ``fixpoint example <name>``.

Config files are JSON with ``"schema": 1``.  Families are config trees whose
nesting mirrors the Gamma recursion::

    {"type": "gamma_tower", "alphas": [0, 0.5],
     "levels": [{"type": "map", "map": {"kind": "random_projection", "rank": 3}},
                {"type": "map", "map": {"kind": "random_projection", "rank": 3}}]}

All randomness comes from the config ``seed`` through
``numpy.random.SeedSequence(seed, spawn_key=(i,))`` with stream ``i = 0``
for problem construction, ``1`` for a random ``x0`` and ``2`` for the
verification batteries.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import (
    CONVERGED,
    IterationTrace,
    Outcome,
    Problem,
    RunConfig,
    Step,
    classify_outcome,
    run_all,
)
from .hilbert import (
    AffineSubspace,
    ConvexSet,
    ProjectionNotConverged,
    WholeSpace,
    convex_set_from_dict,
)
from .operators import (
    AlphaSchedule,
    FixedPointSet,
    Mapping,
    OperatorFamily,
    OpClass,
    ScheduleError,
    Semigroup,
    TimeSchedule,
    affine_map,
    cesaro_family,
    constant_family,
    constant_map,
    convex_projection,
    cyclic_family,
    gamma_tower,
    halve,
    halve_family,
    identity,
    random_nonexpansive_affine,
    random_subspace,
    relax,
    rotation,
    scaled_identity,
    semigroup_family_at_times,
    semigroup_linear_psd,
    semigroup_rotation,
    subspace_projection,
    subspace_reflection,
    zoo,
)
from .verify import (
    CheckReport,
    check_semigroup_axioms,
    check_tc_class,
    halving_battery,
    lemma_battery,
    oracle_affine_intersection,
    oracle_semigroup_fixset,
    projector_agreement,
)

log = logging.getLogger("fixpoint")

SCHEMA_VERSION = 1
ALGORITHMS = ("haugazeau", "cq", "shrinking")
BATTERIES = ("tc_class", "lemmas", "halving", "semigroup", "projector")
STREAM_PROBLEM, STREAM_X0, STREAM_VERIFY = 0, 1, 2

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_NOT_CONVERGED = 0, 1, 2, 3
TRACE_COLUMNS = ("n", "residual", "stepNorm", "distFromStart", "cutCount")
SIDECAR_MAX_DIM = 20


class ConfigError(ValueError):
    def __init__(self, message, path=(), line=None):
        self.path = tuple(path)
        self.line = line
        super().__init__(message)

    def __str__(self):
        where = ".".join(str(p) for p in self.path) or "<root>"
        line = f"line {self.line}: " if self.line else ""
        return f"{line}{where}: {self.args[0]}"


def stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


# ---------------------------------------------------------------------------
# config loading


def _locate(text: str, path) -> int | None:
    """Line of the last key in ``path``, found by walking the keys in order."""
    pos, found = 0, None
    for key in path:
        if isinstance(key, int):
            continue
        i = text.find(f'"{key}"', pos)
        if i < 0:
            break
        pos, found = i, i
    return None if found is None else text.count("\n", 0, found) + 1


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg} (column {e.colno})", line=e.lineno) from None
    if not isinstance(cfg, dict):
        raise ConfigError("top level must be an object", line=1)
    cfg.setdefault("_text", text)
    return cfg


def _get(node, key, path, default=..., kind=None):
    if not isinstance(node, dict):
        raise ConfigError("expected an object", path)
    if key not in node:
        if default is ...:
            raise ConfigError(f"missing field {key!r}", path)
        return default
    v = node[key]
    if kind is not None and not isinstance(v, kind):
        raise ConfigError(f"field {key!r} has the wrong type", (*path, key))
    return v


@dataclass
class Experiment:
    name: str
    dim: int
    seed: int
    C: ConvexSet
    x0: np.ndarray
    family: OperatorFamily          # as given by the config tree
    form: str                       # "R" or "T"
    algorithms: list
    run: RunConfig
    out_dir: Path
    timestamps: bool
    oracle: FixedPointSet | None
    oracle_tol: float = 1e-6
    semigroups: list = field(default_factory=list)
    maps: list = field(default_factory=list)
    verify: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)

    @property
    def t_family(self) -> OperatorFamily:
        return halve_family(self.family) if self.form == "R" else self.family

    @property
    def r_family(self) -> OperatorFamily | None:
        return self.family if self.form == "R" else None

    def problem(self) -> Problem:
        return Problem(self.C, self.x0, self.t_family, self.oracle)


class _Builder:
    """Turns config trees into families, keeping track of oracles."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.dim = dim
        self.rng = rng
        self.semigroups: list[Semigroup] = []
        self.maps: list[Mapping] = []

    # -- mappings
    def mapping(self, node, path) -> Mapping:
        d = self.dim
        kind = _get(node, "kind", path, kind=str)
        try:
            if kind == "identity":
                m = identity(d)
            elif kind == "scaled_identity":
                m = scaled_identity(d, float(_get(node, "factor", path)))
            elif kind == "constant":
                m = constant_map(_get(node, "point", path))
            elif kind in ("projection", "reflection"):
                C = convex_set_from_dict(_get(node, "set", path, kind=dict), d)
                if kind == "reflection":
                    if not isinstance(C, AffineSubspace):
                        raise ConfigError("reflection needs an affine set", path)
                    m = subspace_reflection(C)
                else:
                    m = subspace_projection(C) if isinstance(C, AffineSubspace) else convex_projection(C)
            elif kind in ("random_projection", "random_reflection"):
                S = random_subspace(self.rng, d, int(_get(node, "rank", path)))
                m = subspace_projection(S) if kind == "random_projection" else subspace_reflection(S)
            elif kind == "rotation":
                m = rotation(_get(node, "angles", path, kind=list), int(node.get("fixed_dims", 0)))
            elif kind == "affine":
                fixed = None
                if "fixed" in node:
                    f = node["fixed"]
                    fixed = FixedPointSet.affine(f["basepoint"],
                                                 np.asarray(f.get("directions", []),
                                                            dtype=np.float64).reshape(-1, d).T)
                m = affine_map(_get(node, "matrix", path), node.get("shift"),
                               OpClass(node.get("class", "nonexpansive")), fixed)
            elif kind == "random_affine":
                nf = node.get("n_fixed")
                m = random_nonexpansive_affine(self.rng, d, None if nf is None else int(nf))
            else:
                raise ConfigError(f"unknown map kind {kind!r}", (*path, "kind"))
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(str(e), path) from None
        if m.dim != d:
            raise ConfigError(f"map has dimension {m.dim}, expected {d}", path)
        self.maps.append(m)
        return m

    def semigroup(self, node, path) -> Semigroup:
        kind = _get(node, "kind", path, kind=str)
        try:
            if kind == "linear_psd":
                S = semigroup_linear_psd(_get(node, "A", path))
            elif kind == "rotation":
                S = semigroup_rotation(_get(node, "rates", path, kind=list),
                                       int(node.get("fixed_dims", 0)))
            else:
                raise ConfigError(f"unknown semigroup kind {kind!r}", (*path, "kind"))
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(str(e), path) from None
        if S.dim != self.dim:
            raise ConfigError(f"semigroup has dimension {S.dim}, expected {self.dim}", path)
        self.semigroups.append(S)
        return S

    @staticmethod
    def schedule(node, path) -> TimeSchedule:
        try:
            return TimeSchedule(_get(node, "kind", path, kind=str), node.get("times"),
                                float(node.get("scale", 1.0)))
        except ValueError as e:
            raise ConfigError(str(e), path) from None

    # -- families; each returns (family, oracle fixed set or None, has_oracle)
    def family(self, node, path):
        t = _get(node, "type", path, kind=str)
        try:
            if t == "map":
                m = self.mapping(_get(node, "map", path, kind=dict), (*path, "map"))
                return constant_family(m), m.fixed
            if t == "alternating":
                items = _get(node, "maps", path, kind=list)
                if not items:
                    raise ConfigError("needs at least one map", (*path, "maps"))
                maps = [self.mapping(s, (*path, "maps", i)) for i, s in enumerate(items)]
                F = _intersect([m.fixed for m in maps])
                return cyclic_family(maps, F), F
            if t in ("semigroup_at_times", "cesaro"):
                S = self.semigroup(_get(node, "semigroup", path, kind=dict), (*path, "semigroup"))
                sched = self.schedule(_get(node, "schedule", path, kind=dict), (*path, "schedule"))
                fam = (semigroup_family_at_times(S, sched) if t == "semigroup_at_times"
                       else cesaro_family(S, sched))
                return fam, oracle_semigroup_fixset(S)
            if t == "gamma_tower":
                levels = _get(node, "levels", path, kind=list)
                built = [self.family(s, (*path, "levels", i)) for i, s in enumerate(levels)]
                F = _intersect([f for _, f in built])
                try:
                    alphas = AlphaSchedule.constant(_get(node, "alphas", path, kind=list),
                                                    float(node.get("a", 0.1)),
                                                    float(node.get("b", 0.9)))
                    alphas.validate()
                except ScheduleError as e:
                    raise ConfigError(str(e), (*path, "alphas")) from None
                return gamma_tower([f for f, _ in built], alphas, F), F
            if t == "relax":
                inner, F = self.family(_get(node, "family", path, kind=dict), (*path, "family"))
                return relax(inner, float(_get(node, "lambda", path))), F
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(str(e), path) from None
        raise ConfigError(f"unknown family type {t!r}", (*path, "type"))


def _intersect(sets):
    if any(s is None for s in sets):
        return None
    if all(s.subspace is not None for s in sets):
        return oracle_affine_intersection([s.subspace for s in sets])
    if len(sets) == 1:
        return sets[0]
    return None


def _oracle_on(C: ConvexSet, F: FixedPointSet | None):
    if F is None:
        return None
    if isinstance(C, WholeSpace):
        return F
    if isinstance(C, AffineSubspace) and F.subspace is not None:
        return oracle_affine_intersection([C, F.subspace])
    return None


def _x0(node, dim, seed, path, scale) -> np.ndarray:
    if isinstance(node, list):
        x = np.asarray(node, dtype=np.float64)
        if x.shape != (dim,) or not np.all(np.isfinite(x)):
            raise ConfigError(f"x0 must be a finite vector of length {dim}", path)
        return x
    if isinstance(node, str):
        m = re.fullmatch(r"random(?:\((\d+)\))?", node.strip())
        if m:
            rng = (np.random.default_rng(int(m.group(1))) if m.group(1)
                   else stream(seed, STREAM_X0))
            return scale * rng.standard_normal(dim)
    raise ConfigError('x0 must be a vector, "random" or "random(<seed>)"', path)


def build_experiment(cfg: dict, *, seed=None, max_iter=None, out=None, timestamps=None
                     ) -> Experiment:
    """Validate a config dict and build everything before any run starts."""
    text = cfg.get("_text", "")
    try:
        return _build(cfg, seed, max_iter, out, timestamps)
    except ConfigError as e:
        if e.line is None:
            e.line = _locate(text, e.path)
        raise


def _build(cfg, seed, max_iter, out, timestamps) -> Experiment:
    if "catalog" in cfg:
        base = catalog(_get(cfg, "catalog", (), kind=str))
        cfg = _merge(base, {k: v for k, v in cfg.items() if k != "catalog"})
    schema = cfg.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {schema!r} (expected {SCHEMA_VERSION})", ("schema",))
    dim = _get(cfg, "dimension", (), kind=int)
    if dim < 1:
        raise ConfigError("dimension must be >= 1", ("dimension",))
    seed = int(seed if seed is not None else cfg.get("seed", 0))
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer", ("seed",))
    try:
        C = convex_set_from_dict(cfg.get("set", {"kind": "whole"}), dim)
    except KeyError as e:
        raise ConfigError(f"missing field {e.args[0]!r}", ("set",)) from None
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), ("set",)) from None

    builder = _Builder(dim, stream(seed, STREAM_PROBLEM))
    family, F = builder.family(_get(cfg, "family", (), kind=dict), ("family",))
    form = cfg.get("form", "R")
    if form not in ("R", "T"):
        raise ConfigError('form must be "R" or "T"', ("form",))
    x0 = _x0(cfg.get("x0", "random"), dim, seed, ("x0",), float(cfg.get("x0_scale", 3.0)))

    algs = cfg.get("algorithms", list(ALGORITHMS))
    if not isinstance(algs, list) or any(a not in ALGORITHMS for a in algs):
        raise ConfigError(f"algorithms must be a list drawn from {ALGORITHMS}", ("algorithms",))
    if "cq" in algs and form != "R":
        raise ConfigError("cq needs the R form of the family", ("algorithms",))

    run = dict(cfg.get("run", {}))
    if max_iter is not None:
        run["max_iter"] = max_iter
    try:
        rc = RunConfig(**run)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), ("run",)) from None
    output = cfg.get("output", {})
    out_dir = Path(out if out is not None else output.get("dir", "fixpoint-out"))
    ts = output.get("timestamps", True) if timestamps is None else timestamps
    return Experiment(cfg.get("name", "experiment"), dim, seed, C, x0, family, form, algs, rc,
                      out_dir, bool(ts), _oracle_on(C, F), float(cfg.get("oracle_tol", 1e-6)),
                      builder.semigroups, builder.maps, cfg.get("verify", {}),
                      cfg.get("compare", {}))


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


# ---------------------------------------------------------------------------
# built-in catalog


def catalog(name: str) -> dict:
    """Built-in experiment configs (``fixpoint example <name>`` prints them)."""
    proj3 = {"type": "map", "map": {"kind": "random_projection", "rank": 3}}
    entries = {
        "h1": {"name": "h1", "dimension": 5, "seed": 1, "x0": "random",
               "family": {"type": "gamma_tower", "alphas": [0.0, 0.5], "levels": [proj3, proj3]},
               "run": {"max_iter": 10000}},
        "h2": {"name": "h2", "dimension": 3, "seed": 2, "x0": "random",
               "family": {"type": "gamma_tower", "alphas": [0.0], "levels": [
                   {"type": "semigroup_at_times",
                    "semigroup": {"kind": "rotation", "rates": [1.0], "fixed_dims": 1},
                    "schedule": {"kind": "triangular"}}]},
               "algorithms": ["haugazeau", "shrinking"],
               "run": {"max_iter": 10000, "patience": 3}, "oracle_tol": 1e-5},
        "h3": {"name": "h3", "dimension": 4, "seed": 3, "x0": "random",
               "family": {"type": "gamma_tower", "alphas": [0.0], "levels": [
                   {"type": "cesaro",
                    "semigroup": {"kind": "linear_psd",
                                  "A": [[1, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]},
                    "schedule": {"kind": "divergent", "scale": 1.0}}]},
               "run": {"max_iter": 10000}, "oracle_tol": 1e-5},
        "identity": {"name": "identity", "dimension": 3, "seed": 0, "x0": [1.0, 2.0, 3.0],
                     "family": {"type": "map", "map": {"kind": "identity"}}},
        "contradictory": {"name": "contradictory", "dimension": 2, "seed": 0, "x0": [0.3, -0.2],
                          "family": {"type": "alternating", "maps": [
                              {"kind": "constant", "point": [1.0, 0.0]},
                              {"kind": "constant", "point": [-1.0, 0.0]}]},
                          "algorithms": ["haugazeau", "shrinking"],
                          "run": {"max_iter": 2000}},
        "agreement": {"name": "agreement", "dimension": 4, "seed": 4, "x0": "random",
                      "family": {"type": "map", "map": {"kind": "random_affine"}},
                      "algorithms": ["haugazeau", "cq"],
                      "run": {"max_iter": 50, "residual_tol": 1e-300, "step_tol": 1e-300},
                      "compare": {"agreement_tol": 1e-8}},
        "zoo": {"name": "zoo", "dimension": 3, "seed": 5, "x0": "random",
                "family": {"type": "map", "map": {"kind": "random_affine"}},
                "verify": {"zoo": True, "batteries": list(BATTERIES), "trials": 500}},
        "non_tc": {"name": "non_tc", "dimension": 2, "seed": 6, "x0": [1.0, 1.0], "form": "T",
                   "family": {"type": "map", "map": {"kind": "scaled_identity", "factor": 2.0}},
                   "algorithms": ["haugazeau", "shrinking"],
                   "verify": {"batteries": ["tc_class"], "trials": 200}},
    }
    if name not in entries:
        raise ConfigError(f"unknown catalog entry {name!r}; known: {', '.join(sorted(entries))}",
                          ("catalog",))
    return {"schema": SCHEMA_VERSION, **entries[name]}


# ---------------------------------------------------------------------------
# trace files


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trace_to_csv(trace: IterationTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for s in trace.steps:
        w.writerow([_fmt(s.n), _fmt(s.residual), _fmt(s.step_norm), _fmt(s.dist_from_start),
                    _fmt(s.cut_count)])
    return buf.getvalue()


def trace_sidecar(trace: IterationTrace) -> dict:
    d = trace.x0.shape[0]
    out = {"algorithm": trace.algorithm, "dimension": d, "x0": trace.x0.tolist(),
           "outcome": trace.outcome.to_dict() if trace.outcome else None}
    if d <= SIDECAR_MAX_DIM:
        out["x"] = [s.x.tolist() for s in trace.steps]
        out["tx"] = [s.tx.tolist() for s in trace.steps]
    return out


def write_trace(trace: IterationTrace, directory: Path, stem: str, timestamp: str | None = None):
    directory.mkdir(parents=True, exist_ok=True)
    head = f"# generated {timestamp}\n" if timestamp else ""
    (directory / f"{stem}.csv").write_text(head + trace_to_csv(trace))
    side = trace_sidecar(trace)
    if timestamp:
        side = {"generated": timestamp, **side}
    (directory / f"{stem}.json").write_text(_dumps(side))


def read_trace(csv_path) -> IterationTrace:
    """Parse a trace CSV and its sidecar back into an :class:`IterationTrace`.

    Without vectors in the sidecar (``d > 20``) the step vectors are NaN.
    """
    csv_path = Path(csv_path)
    lines = [ln for ln in csv_path.read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header {rows[0]}")
    side = json.loads(csv_path.with_suffix(".json").read_text())
    d = side["dimension"]
    xs = side.get("x")
    txs = side.get("tx")
    nan = np.full(d, np.nan)
    steps = []
    for i, r in enumerate(rows[1:]):
        res = float(r[1])
        steps.append(Step(int(r[0]),
                          np.asarray(xs[i]) if xs else nan.copy(),
                          np.asarray(txs[i]) if txs else nan.copy(),
                          float(r[3]), res,
                          float(r[2]) if r[2] else None,
                          int(r[4]) if r[4] else None))
    oc = side.get("outcome")
    outcome = None
    if oc is not None:
        outcome = Outcome(oc["status"], oc["n"], None if oc["x"] is None else np.asarray(oc["x"]),
                          oc.get("reason", ""))
    return IterationTrace(side["algorithm"], np.asarray(side["x0"]), steps, outcome)


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# commands


def _run_traces(exp: Experiment) -> dict:
    if exp.t_family.kind not in (OpClass.TC, OpClass.FIRMLY_NONEXPANSIVE):
        raise ConfigError("the drivers need a T-class family; use form R to halve it", ("form",))
    return run_all(exp.problem(), exp.r_family, exp.algorithms, exp.run)


def cmd_run(exp: Experiment) -> int:
    traces = _run_traces(exp)
    ts = _now() if exp.timestamps else None
    summary = {"name": exp.name, "seed": exp.seed, "dimension": exp.dim, "version": __version__,
               "x0": exp.x0, "runs": {}}
    if ts:
        summary["generated"] = ts
    if exp.oracle is not None:
        summary["pf_x0"] = exp.oracle.project(exp.x0)
    code = EXIT_OK
    for name, tr in traces.items():
        write_trace(tr, exp.out_dir, f"{exp.name}_{name}", ts)
        rep = classify_outcome(tr, exp.oracle, exp.oracle_tol, family=exp.t_family)
        summary["runs"][name] = {"outcome": tr.outcome.to_dict(), "report": rep.to_dict(),
                                 "iterations": len(tr.steps)}
        print(f"{name:10s} {tr.outcome.status:10s} n={tr.outcome.n:<7d} "
              f"error={'n/a' if rep.error_vs_oracle is None else f'{rep.error_vs_oracle:.3e}'} "
              f"invariants={'ok' if rep.invariants_ok else 'BREACH'}")
        if not rep.invariants_ok or rep.oracle_ok is False:
            code = EXIT_INVARIANT
        elif tr.outcome.status != CONVERGED and code == EXIT_OK:
            code = EXIT_NOT_CONVERGED
    summary["exit_code"] = code
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    (exp.out_dir / f"{exp.name}_summary.json").write_text(_dumps(summary))
    return code


def cmd_compare(exp: Experiment) -> int:
    if len(exp.algorithms) < 2:
        raise ConfigError("compare needs at least two algorithms", ("algorithms",))
    traces = _run_traces(exp)
    agree_tol = float(exp.compare.get("agreement_tol", 1e-8))
    limit_tol = float(exp.compare.get("limit_tol", 2e-6))
    pf = exp.oracle.project(exp.x0) if exp.oracle is not None else None
    rows = []
    ok = True
    names = list(traces)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ta, tb = traces[a], traces[b]
            row = {"pair": f"{a}-{b}"}
            if {a, b} == {"cq", "haugazeau"} and isinstance(exp.C, WholeSpace):
                k = min(len(ta.steps), len(tb.steps))
                dev = float(np.max(np.linalg.norm(ta.iterates()[:k] - tb.iterates()[:k], axis=1)))
                row.update(steps=k, max_iterate_deviation=dev, iterates_agree=dev <= agree_tol)
                ok &= dev <= agree_tol
            if ta.converged and tb.converged:
                lim = float(np.linalg.norm(ta.final - tb.final))
                row.update(limit_deviation=lim, limits_agree=lim <= limit_tol)
                ok &= lim <= limit_tol
            rows.append(row)
    limits = {}
    for name, tr in traces.items():
        e = None if pf is None or not tr.converged else float(np.linalg.norm(tr.final - pf))
        limits[name] = {"status": tr.outcome.status, "error_vs_pf": e}
        if e is not None and e > limit_tol:
            ok = False
    ts = _now() if exp.timestamps else None
    report = {"name": exp.name, "seed": exp.seed, "pairs": rows, "runs": limits}
    if ts:
        report["generated"] = ts
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    for name, tr in traces.items():
        write_trace(tr, exp.out_dir, f"{exp.name}_{name}", ts)
    (exp.out_dir / f"{exp.name}_compare.json").write_text(_dumps(report))
    for r in rows:
        print("  ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    return EXIT_OK if ok else EXIT_INVARIANT


def _verify_targets(exp: Experiment, rng):
    """(R, F) pairs the batteries run on."""
    targets = []
    if exp.verify.get("zoo"):
        targets += [(m, m.fixed) for m in zoo(exp.dim, rng)]
    if exp.verify.get("family", True):
        for m in exp.maps:
            if m.fixed is not None:
                targets.append((m, m.fixed))
    return targets


def cmd_verify(exp: Experiment) -> int:
    batteries = exp.verify.get("batteries", list(BATTERIES))
    unknown = [b for b in batteries if b not in BATTERIES]
    if unknown:
        raise ConfigError(f"unknown batteries {unknown}", ("verify", "batteries"))
    if not batteries:
        print("warning: empty battery selection, nothing to verify", file=sys.stderr)
        return EXIT_OK
    trials = int(exp.verify.get("trials", 1000))
    rng = stream(exp.seed, STREAM_VERIFY)
    targets = _verify_targets(exp, rng)
    results = []
    for b in batteries:
        if b == "tc_class":
            for R, F in targets:
                T = halve(R) if exp.form == "R" else R
                results.append(check_tc_class(T, F.sample(rng, 5), trials, rng))
        elif b == "lemmas":
            for R, F in targets:
                if R.kind in (OpClass.NONEXPANSIVE, OpClass.FIRMLY_NONEXPANSIVE):
                    rep = lemma_battery(R, R, F, [0.25, 0.5, 0.75], trials, rng)
                    results.append(_as_check(f"lemmas[{R.name}]", rep))
        elif b == "halving":
            maps = [R for R, _ in targets]
            if maps:
                results.append(halving_battery(maps, trials, rng))
        elif b == "semigroup":
            for S in exp.semigroups:
                results.append(check_semigroup_axioms(S, rng=rng))
        elif b == "projector":
            if exp.dim <= 3 and not isinstance(exp.C, WholeSpace):
                x0 = exp.x0 + 2 * rng.standard_normal(exp.dim)
                w = exp.C.project(x0)
                radius = 1.05 * float(np.linalg.norm(x0 - w)) + 1e-3
                results.append(projector_agreement(exp.C, x0, x0, radius))
    code = EXIT_OK
    print(f"{'check':40s} {'result':6s} max_violation")
    for r in results:
        print(f"{r.name:40s} {'pass' if r.passed else 'FAIL':6s} {r.max_violation:.3e}")
        if not r.passed:
            code = EXIT_INVARIANT
    exp.out_dir.mkdir(parents=True, exist_ok=True)
    rep = {"name": exp.name, "seed": exp.seed, "checks": [r.to_dict() for r in results]}
    if exp.timestamps:
        rep["generated"] = _now()
    (exp.out_dir / f"{exp.name}_verify.json").write_text(_dumps(rep))
    return code


def _as_check(name, rep):
    return CheckReport(name, rep.passed, max(rep.max_violation.values()), rep.trials,
                       {"by_inequality": rep.max_violation})


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fixpoint", description="Projection-type fixed point solvers")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run the configured algorithms"),
                           ("verify", "run the verification batteries"),
                           ("compare", "run several algorithms and compare them")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--max-iter", type=int, help="override run.max_iter")
        sp.add_argument("--out", help="output directory for reports and traces")
        sp.add_argument("--no-timestamps", action="store_true",
                        help="omit the timestamp header lines")
    ex = sub.add_parser("example", help="print a built-in config")
    ex.add_argument("name", help="catalog entry, for example h1")
    return p


def _setup_logging():
    level = os.environ.get("FIXPOINT_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = _parser().parse_args(argv)
    try:
        if args.command == "example":
            print(_dumps(catalog(args.name)), end="")
            return EXIT_OK
        cfg = load_config(args.config)
        exp = build_experiment(cfg, seed=args.seed, max_iter=args.max_iter, out=args.out,
                               timestamps=False if args.no_timestamps else None)
        if args.command == "run":
            return cmd_run(exp)
        if args.command == "compare":
            return cmd_compare(exp)
        return cmd_verify(exp)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ProjectionNotConverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
