"""Bounded exhaustive exploration of the symbolic game.

Walks every maximal path of the symbolic interaction game under the
(k, l) bounds, classifies each leaf, validates failing leaves with the
constraint solver, and renders findings as text or JSON.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from holicheck.core import (
    CALL, METH, SYM, Lit, Meth, Move, Name, Pair, Sym, Term, Trace,
    TypedLibrary, Unit, symints_of, term_str, trace_str,
)
from holicheck.concrete import Bounds
from holicheck.solver import (
    Model, Sat, Unknown, Unsat, check_sat, eval_formula, eval_trace,
    formula_str, path_formula,
)
from holicheck.symbolic import (
    PathCondition, PLeaf, SymEnv, SymGameConfig, classify, initial_sym_config,
    o_successors, p_successors,
)


class ExploreTimeout(Exception):
    """Cooperative deadline hit during exploration."""


CONFIRMED = "confirmed"
UNCONFIRMED = "unconfirmed"

FAILED = "failed"
TERMINATED = "terminated"
BOUND = "bound_exhausted"


@dataclass
class Finding:
    """One maximal path of the bounded symbolic game."""

    trace: Trace
    pc: PathCondition
    sigma: SymEnv
    classification: str  # failed | terminated | bound_exhausted
    value: Optional[Term] = None
    verdict: Optional[str] = None  # confirmed | unconfirmed, failed only
    model: Optional[Model] = None
    config: Optional[SymGameConfig] = None


@dataclass
class Stats:
    leaves: int = 0
    failed: int = 0
    bound_exhausted: int = 0
    solver_calls: int = 0
    refuted: int = 0
    pruned: int = 0
    millis: int = 0


@dataclass
class ExploreResult:
    findings: list[Finding]
    stats: Stats
    bounds: Bounds


def explore(
    lib: TypedLibrary,
    bounds: Bounds,
    policy: str = "lazy",
    backend=None,
    first_failure: bool = False,
    deadline: Optional[float] = None,
) -> ExploreResult:
    """Depth-first enumeration of all maximal bounded symbolic paths.

    Every leaf is classified; failing leaves are validated by checking
    pc and the symbolic environment's equations for satisfiability.  A
    solver Unknown downgrades the verdict but never drops the finding;
    an Unsat refutes the path and drops it.  With policy="eager" every
    move successor is checked and provably unsatisfiable subtrees are
    pruned early (sound: their leaves would all be refuted).
    """
    t0 = time.monotonic()
    stats = Stats()
    findings: list[Finding] = []
    init = initial_sym_config(lib)
    stack: list[tuple[SymGameConfig, Trace]] = [(init, ())]

    def sat_check(cfg: SymGameConfig, extra=()):
        stats.solver_calls += 1
        return check_sat(path_formula(cfg.sigma, cfg.pc), backend)

    def record(kind: str, cfg: SymGameConfig, trace: Trace, value=None) -> Optional[Finding]:
        stats.leaves += 1
        if kind != FAILED:
            if kind == BOUND:
                stats.bound_exhausted += 1
            f = Finding(trace, cfg.pc, cfg.sigma, kind, value=value, config=cfg)
            findings.append(f)
            return None
        res = sat_check(cfg)
        if isinstance(res, Unsat):
            stats.refuted += 1
            return None
        stats.failed += 1
        if isinstance(res, Sat):
            model = dict(res.model)
            _cover_trace_syms(model, trace, cfg)
            formula = path_formula(cfg.sigma, cfg.pc)
            assert eval_formula(model, formula), "witness lost while extending model"
            f = Finding(trace, cfg.pc, cfg.sigma, FAILED, verdict=CONFIRMED,
                        model=model, config=cfg)
        else:
            f = Finding(trace, cfg.pc, cfg.sigma, FAILED, verdict=UNCONFIRMED, config=cfg)
        findings.append(f)
        return f

    while stack:
        if deadline is not None and time.monotonic() > deadline:
            raise ExploreTimeout()
        cfg, trace = stack.pop()
        if cfg.polarity == "O":
            leaf = classify(cfg, bounds)
            if leaf == "terminated":
                record(TERMINATED, cfg, trace, value=Unit())
                continue
            if leaf == "bound":
                record(BOUND, cfg, trace)
                continue
            succs = o_successors(cfg, bounds)
            for move, nxt in reversed(succs):
                if policy == "eager" and not _feasible(nxt, backend, stats):
                    continue
                stack.append((nxt, trace + (move,)))
            continue
        for succ in p_successors(cfg, bounds):
            if isinstance(succ, PLeaf):
                kind = {"failed": FAILED, "terminated": TERMINATED, "bound": BOUND}[succ.kind]
                got = record(kind, succ.config, trace, value=succ.value)
                if got is not None and got.verdict == CONFIRMED and first_failure:
                    stats.millis = int((time.monotonic() - t0) * 1000)
                    return ExploreResult(findings, stats, bounds)
            else:
                move, nxt = succ
                if policy == "eager" and not _feasible(nxt, backend, stats):
                    continue
                stack.append((nxt, trace + (move,)))

    stats.millis = int((time.monotonic() - t0) * 1000)
    return ExploreResult(findings, stats, bounds)


def _feasible(cfg: SymGameConfig, backend, stats: Stats) -> bool:
    stats.solver_calls += 1
    res = check_sat(path_formula(cfg.sigma, cfg.pc), backend)
    if isinstance(res, Unsat):
        stats.pruned += 1
        return False
    return True


def _cover_trace_syms(model: Model, trace: Trace, cfg: SymGameConfig) -> None:
    """Extend a witness to every symbolic integer the trace or the
    abstract set mentions; unconstrained ones default to 0."""
    for mv in trace:
        for n in symints_of(mv.payload):
            model.setdefault(n, 0)
    for n in cfg.abs_:
        if n.sort == SYM:
            model.setdefault(n, 0)


def concretize(finding: Finding) -> Trace:
    """Substitute the finding's model through its trace."""
    if finding.verdict != CONFIRMED or finding.model is None:
        raise ValueError("only confirmed findings can be concretized")
    return eval_trace(finding.model, finding.trace)


# ---------------------------------------------------------------------------
# Canonicalization
# ---------------------------------------------------------------------------
# Names a trace introduces (their first occurrence is inside a payload)
# are renamed to _m1, _m2, ... / k1, k2, ... in order of first occurrence;
# declared names, which first occur as the method of a move, keep their
# labels.  Idempotent and injective on renaming classes.


def canonicalize(trace: Trace) -> Trace:
    mapping: dict[Name, Name] = {}
    counters = {"m": 0, "k": 0}

    def canon_meth(n: Name) -> Name:
        counters["m"] += 1
        return Name(METH, -counters["m"], f"_m{counters['m']}", n.typ)

    def canon_sym(n: Name) -> Name:
        counters["k"] += 1
        return Name(SYM, -counters["k"], f"k{counters['k']}", n.typ)

    def walk_payload(v: Term) -> Term:
        if isinstance(v, Meth):
            if v.name not in mapping:
                mapping[v.name] = canon_meth(v.name)
            return Meth(mapping[v.name])
        if isinstance(v, Sym):
            if v.name not in mapping:
                mapping[v.name] = canon_sym(v.name)
            return Sym(mapping[v.name])
        if isinstance(v, Pair):
            return Pair(walk_payload(v.fst), walk_payload(v.snd))
        return v

    out: list[Move] = []
    for mv in trace:
        if mv.method not in mapping:
            mapping[mv.method] = mv.method  # declared name: keep
        out.append(Move(mv.kind, mapping[mv.method], walk_payload(mv.payload), mv.polarity))
    return tuple(out)


def trace_key(trace: Trace):
    """A total order on canonicalized traces (prefixes sort first)."""
    return tuple(
        (m.kind, m.polarity, m.method.label, _value_key(m.payload)) for m in trace
    )


def _value_key(v: Term):
    if isinstance(v, Unit):
        return ("u",)
    if isinstance(v, Lit):
        return ("i", v.value)
    if isinstance(v, Sym):
        return ("k", v.name.label)
    if isinstance(v, Meth):
        return ("m", v.name.label)
    if isinstance(v, Pair):
        return ("p", _value_key(v.fst), _value_key(v.snd))
    raise AssertionError(f"_value_key: {v!r}")


def canonical_failed_set(result: ExploreResult, confirmed_only: bool = True) -> set:
    """The set of canonicalized failing traces of an exploration."""
    out = set()
    for f in result.findings:
        if f.classification != FAILED:
            continue
        if confirmed_only and f.verdict != CONFIRMED:
            continue
        out.add(trace_key(canonicalize(f.trace)))
    return out


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------


def _canonical_renaming(f: Finding) -> dict[Name, Name]:
    """Renaming used for reports: trace-introduced names first, then the
    remaining path-condition symbols in formula order."""
    canon = canonicalize(f.trace)
    mapping: dict[Name, Name] = {}
    for orig, new in zip(f.trace, canon):
        mapping[orig.method] = new.method
        _collect_payload_renames(orig.payload, new.payload, mapping)
    counter = sum(1 for n in mapping.values() if n.sort == SYM)
    from holicheck.solver import formula_syms

    for n in formula_syms(path_formula(f.sigma, f.pc)):
        if n not in mapping:
            counter += 1
            mapping[n] = Name(SYM, -1000 - counter, f"k{counter}", n.typ)
    return mapping


def _collect_payload_renames(orig: Term, new: Term, mapping: dict[Name, Name]) -> None:
    if isinstance(orig, (Meth, Sym)):
        mapping[orig.name] = new.name
    elif isinstance(orig, Pair):
        _collect_payload_renames(orig.fst, new.fst, mapping)
        _collect_payload_renames(orig.snd, new.snd, mapping)


def _rename_term(t: Term, mapping: dict[Name, Name]) -> Term:
    if isinstance(t, Meth):
        return Meth(mapping.get(t.name, t.name))
    if isinstance(t, Sym):
        return Sym(mapping.get(t.name, t.name))
    if isinstance(t, Pair):
        return Pair(_rename_term(t.fst, mapping), _rename_term(t.snd, mapping))
    from holicheck.core import Op

    if isinstance(t, Op):
        return Op(t.op, _rename_term(t.left, mapping), _rename_term(t.right, mapping))
    return t


def _value_json(v: Term) -> dict:
    if isinstance(v, Unit):
        return {"kind": "unit"}
    if isinstance(v, Lit):
        return {"kind": "int", "value": v.value}
    if isinstance(v, Sym):
        return {"kind": "symint", "name": v.name.label}
    if isinstance(v, Meth):
        return {"kind": "method", "name": v.name.label}
    if isinstance(v, Pair):
        return {"kind": "pair", "fst": _value_json(v.fst), "snd": _value_json(v.snd)}
    raise AssertionError(f"_value_json: {v!r}")


def _smt_formula_string(f: Finding, mapping: dict[Name, Name]) -> str:
    """The path validity condition (sigma equations and pc) as one
    SMT-LIB term over canonical symbol names."""
    from holicheck.solver import DefEq, Test, _smt_expr

    parts = []
    for a in path_formula(f.sigma, f.pc):
        if isinstance(a, DefEq):
            lhs = _smt_expr(_rename_term(Sym(a.sym), mapping))
            parts.append(f"(= {lhs} {_smt_expr(_rename_term(a.expr, mapping))})")
        else:
            rel = "=" if a.eq else "distinct"
            parts.append(f"({rel} {_smt_expr(_rename_term(a.expr, mapping))} 0)")
    if not parts:
        return "true"
    if len(parts) == 1:
        return parts[0]
    return "(and " + " ".join(parts) + ")"


def sorted_failures(result: ExploreResult) -> list[Finding]:
    fails = [f for f in result.findings if f.classification == FAILED]
    fails.sort(key=lambda f: (trace_key(canonicalize(f.trace)), len(f.trace)))
    return fails


def report_json(result: ExploreResult, library: str) -> str:
    failures = []
    for f in sorted_failures(result):
        mapping = _canonical_renaming(f)
        entry = {
            "trace": [
                {
                    "kind": m.kind,
                    "method": mapping.get(m.method, m.method).label,
                    "value": _value_json(_rename_term(m.payload, mapping)),
                }
                for m in f.trace
            ],
            "pc": _smt_formula_string(f, mapping),
            "model": (
                {mapping.get(n, n).label: v for n, v in sorted(
                    f.model.items(), key=lambda kv: mapping.get(kv[0], kv[0]).label)}
                if f.model is not None
                else None
            ),
            "confirmed": f.verdict == CONFIRMED,
        }
        failures.append(entry)
    doc = {
        "library": library,
        "bounds": {"k": result.bounds.k, "l": result.bounds.l},
        "failures": failures,
        "stats": {
            "leaves": result.stats.leaves,
            "failed": result.stats.failed,
            "bound_exhausted": result.stats.bound_exhausted,
            "solver_calls": result.stats.solver_calls,
            "millis": 0,  # kept deterministic; wall time goes to text output
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def report_text(result: ExploreResult, library: str) -> str:
    lines = [
        f"{library}: bounds k<={result.bounds.k} l<={result.bounds.l}",
        f"{result.stats.failed} failures "
        f"({result.stats.leaves} leaves, {result.stats.bound_exhausted} bound-exhausted, "
        f"{result.stats.solver_calls} solver calls, {result.stats.millis} ms)",
    ]
    for i, f in enumerate(sorted_failures(result), 1):
        mapping = _canonical_renaming(f)
        shown = tuple(
            Move(m.kind, mapping.get(m.method, m.method),
                 _rename_term(m.payload, mapping), m.polarity)
            for m in f.trace
        )
        lines.append(f"[{i}] {trace_str(shown)}")
        lines.append(f"    pc: {_smt_formula_string(f, mapping)}")
        if f.model is not None:
            shown_model = {mapping.get(n, n).label: v for n, v in f.model.items()}
            lines.append(f"    model: {json.dumps(shown_model, sort_keys=True)}")
            lines.append("    confirmed")
        else:
            lines.append("    unconfirmed (solver could not witness the path)")
    return "\n".join(lines) + "\n"


def report(result: ExploreResult, fmt: str, library: str = "-") -> str:
    """Render findings; fmt is "text" or "json"."""
    if fmt == "json":
        return report_json(result, library)
    return report_text(result, library)
