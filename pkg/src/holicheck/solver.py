"""Constraint formulas, satisfiability backends, and model evaluation.

A formula is the conjunction of the symbolic environment's defining
equations (reference entries contribute nothing) with the path
condition's atoms.  Two backends are provided: a built-in bounded
enumeration over an integer box, and an external SMT-LIB v2 process.
The built-in search answers Unsat only when its exhaustion was driven
entirely by constraint-derived ranges (never by the box edge); a merely
exhausted box yields Unknown.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from holicheck.core import (
    Lit, Meth, Move, Name, Op, OPS, Pair, SYM, Sym, Term, Trace, Unit,
)
from holicheck.symbolic import Atom, PathCondition, SymEnv


class UnboundSymbol(Exception):
    """A symbolic integer has no value in the model."""


class BackendError(Exception):
    """The external solver failed or answered nonsense."""


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DefEq:
    """sym = expr, a defining equation from the symbolic environment."""

    sym: Name
    expr: Term


@dataclass(frozen=True)
class Test:
    """expr = 0 (eq) or expr != 0, a path-condition atom."""

    expr: Term
    eq: bool


FormulaAtom = Union[DefEq, Test]
Formula = tuple[FormulaAtom, ...]

Model = dict[Name, int]


def sigma_formula(sigma: SymEnv) -> Formula:
    """Formula form of a symbolic environment.

    Reference entries contribute nothing; each defined symbolic integer
    contributes one equation, in definition order.
    """
    return tuple(DefEq(n, v) for n, v in sigma.items() if n.sort == SYM)


def pc_formula(pc: PathCondition) -> Formula:
    return tuple(Test(a.expr, a.eq) for a in pc)


def path_formula(sigma: SymEnv, pc: PathCondition) -> Formula:
    """pc and sigma as one conjunction (the validity formula of a path)."""
    return sigma_formula(sigma) + pc_formula(pc)


def formula_syms(formula: Formula) -> list[Name]:
    """All symbolic integers of a formula, ordered by first occurrence."""
    out: list[Name] = []
    seen: set[Name] = set()

    def add(n: Name) -> None:
        if n not in seen:
            seen.add(n)
            out.append(n)

    def walk(t: Term) -> None:
        if isinstance(t, Sym):
            add(t.name)
        elif isinstance(t, Op):
            walk(t.left)
            walk(t.right)
        elif isinstance(t, Pair):
            walk(t.fst)
            walk(t.snd)

    for a in formula:
        if isinstance(a, DefEq):
            add(a.sym)
            walk(a.expr)
        else:
            walk(a.expr)
    return out


def formula_str(formula: Formula) -> str:
    from holicheck.core import term_str

    parts = []
    for a in formula:
        if isinstance(a, DefEq):
            parts.append(f"{a.sym.label} = {term_str(a.expr)}")
        else:
            parts.append(f"{term_str(a.expr)} {'=' if a.eq else '!='} 0")
    return " /\\ ".join(parts) if parts else "true"


# ---------------------------------------------------------------------------
# Model evaluation
# ---------------------------------------------------------------------------


def eval_int(model: Model, expr: Term) -> int:
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Sym):
        if expr.name not in model:
            raise UnboundSymbol(expr.name.label)
        return model[expr.name]
    if isinstance(expr, Op):
        return OPS[expr.op](eval_int(model, expr.left), eval_int(model, expr.right))
    raise AssertionError(f"eval_int: non-integer expression {expr!r}")


def eval_formula(model: Model, formula: Formula) -> bool:
    for a in formula:
        if isinstance(a, DefEq):
            if a.sym not in model:
                raise UnboundSymbol(a.sym.label)
            if model[a.sym] != eval_int(model, a.expr):
                return False
        else:
            v = eval_int(model, a.expr)
            if (v == 0) != a.eq:
                return False
    return True


def eval_value(model: Model, v: Term) -> Term:
    """Substitute the model into a value and fold any arithmetic."""
    if isinstance(v, (Lit, Unit, Meth)):
        return v
    if isinstance(v, Sym):
        if v.name not in model:
            raise UnboundSymbol(v.name.label)
        return Lit(model[v.name])
    if isinstance(v, Pair):
        return Pair(eval_value(model, v.fst), eval_value(model, v.snd))
    if isinstance(v, Op):
        return Lit(eval_int(model, v))
    raise AssertionError(f"eval_value: {v!r}")


def eval_move(model: Model, move: Move) -> Move:
    return Move(move.kind, move.method, eval_value(model, move.payload), move.polarity)


def eval_trace(model: Model, trace: Trace) -> Trace:
    return tuple(eval_move(model, m) for m in trace)


def eval_model(model: Model, x):
    """Substitution of the model into formulas, values, moves, or traces."""
    if isinstance(x, tuple) and (not x or isinstance(x[0], (DefEq, Test))):
        return eval_formula(model, x)
    if isinstance(x, tuple) and isinstance(x[0], Move):
        return eval_trace(model, x)
    if isinstance(x, Move):
        return eval_move(model, x)
    return eval_value(model, x)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class Sat:
    model: Model


@dataclass
class Unsat:
    pass


@dataclass
class Unknown:
    reason: str = ""


SatResult = Union[Sat, Unsat, Unknown]


# ---------------------------------------------------------------------------
# Built-in backend: bounded enumeration with linear narrowing
# ---------------------------------------------------------------------------
# Free symbols (those without defining equations) are enumerated in first
# occurrence order, ascending over [-box, box].  Atoms whose expansion is
# linear narrow candidate ranges; every candidate assignment is finally
# checked by direct evaluation, so the narrowing only needs to be sound,
# not complete.


@dataclass
class _Lin:
    coeffs: dict[Name, int]
    const: int


def _lin_add(a: _Lin, b: _Lin, s: int) -> _Lin:
    coeffs = dict(a.coeffs)
    for n, c in b.coeffs.items():
        coeffs[n] = coeffs.get(n, 0) + s * c
        if coeffs[n] == 0:
            del coeffs[n]
    return _Lin(coeffs, a.const + s * b.const)


def _lin_scale(a: _Lin, s: int) -> _Lin:
    if s == 0:
        return _Lin({}, 0)
    return _Lin({n: s * c for n, c in a.coeffs.items()}, s * a.const)


def _linearize(expr: Term) -> Optional[_Lin]:
    if isinstance(expr, Lit):
        return _Lin({}, expr.value)
    if isinstance(expr, Sym):
        return _Lin({expr.name: 1}, 0)
    if isinstance(expr, Op):
        if expr.op in ("+", "-"):
            a = _linearize(expr.left)
            b = _linearize(expr.right)
            if a is None or b is None:
                return None
            return _lin_add(a, b, 1 if expr.op == "+" else -1)
        if expr.op == "*":
            a = _linearize(expr.left)
            b = _linearize(expr.right)
            if a is None or b is None:
                return None
            if not a.coeffs:
                return _lin_scale(b, a.const)
            if not b.coeffs:
                return _lin_scale(a, b.const)
            return None
    return None


# Constraint relations over a linear form L: L <= 0, L == 0, L != 0.
_LE, _EQ, _NE = "<=", "==", "!="

_CMP_NEG = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}


@dataclass
class _Constraint:
    lin: _Lin
    rel: str


def _cmp_constraint(op: str, a: _Lin, b: _Lin) -> _Constraint:
    d = _lin_add(a, b, -1)  # a - b
    if op == "<":
        return _Constraint(_lin_add(d, _Lin({}, 1), 1), _LE)  # a-b+1 <= 0
    if op == "<=":
        return _Constraint(d, _LE)
    if op == ">":
        return _Constraint(_lin_add(_lin_scale(d, -1), _Lin({}, 1), 1), _LE)
    if op == ">=":
        return _Constraint(_lin_scale(d, -1), _LE)
    if op == "==":
        return _Constraint(d, _EQ)
    if op == "!=":
        return _Constraint(d, _NE)
    raise AssertionError(op)


def _is_boolish(t: Term) -> bool:
    return isinstance(t, Op) and t.op in ("<", "<=", ">", ">=", "==", "!=", "&&", "||")


def _extract(expr: Term, holds: bool) -> Optional[list[_Constraint]]:
    """Linear consequences of `expr != 0` (holds) or `expr = 0` (not holds).

    Returns None when nothing conjunctive can be extracted; the atom is
    then enforced only by final evaluation.
    """
    if isinstance(expr, Op) and expr.op in _CMP_NEG:
        op = expr.op if holds else _CMP_NEG[expr.op]
        # Tests of an integer-encoded boolean against 0 recurse into it:
        # (b == 0) holds exactly when b does not.
        if op in ("==", "!="):
            verdict = op == "!="
            if expr.right == Lit(0) and _is_boolish(expr.left):
                return _extract(expr.left, verdict)
            if expr.left == Lit(0) and _is_boolish(expr.right):
                return _extract(expr.right, verdict)
        a = _linearize(expr.left)
        b = _linearize(expr.right)
        if a is None or b is None:
            return None
        return [_cmp_constraint(op, a, b)]
    if isinstance(expr, Op) and expr.op == "&&" and holds:
        left = _extract(expr.left, True)
        right = _extract(expr.right, True)
        if left is None or right is None:
            return None
        return left + right
    if isinstance(expr, Op) and expr.op == "||" and not holds:
        left = _extract(expr.left, False)
        right = _extract(expr.right, False)
        if left is None or right is None:
            return None
        return left + right
    if isinstance(expr, Op) and expr.op in ("&&", "||"):
        return None
    lin = _linearize(expr)
    if lin is None:
        return None
    return [_Constraint(lin, _NE if holds else _EQ)]


class BuiltinSolver:
    """Bounded enumeration over [-box, box]^n with linear narrowing.

    Free symbols (no defining equation) are enumerated ascending, in
    first-occurrence order; defined symbols are computed.  An exhausted
    search is Unsat only if no enumeration range was ever cut by the box
    edge, so the verdict holds over all integers, not just the box.
    """

    def __init__(self, box: int = 1024, max_nodes: int = 2_000_000):
        self.box = box
        self.max_nodes = max_nodes

    def solve(self, formula: Formula, extra_syms: Iterable[Name] = ()) -> SatResult:
        defs: dict[Name, Term] = {}
        for a in formula:
            if isinstance(a, DefEq) and a.sym not in defs:
                defs[a.sym] = a.expr

        order = formula_syms(formula)
        for n in extra_syms:
            if n not in order:
                order.append(n)
        free = [n for n in order if n not in defs]
        depth_of = {n: i for i, n in enumerate(free)}

        expand_cache: dict[Name, Term] = {}

        def expand(t: Term) -> Term:
            if isinstance(t, Sym) and t.name in defs:
                if t.name not in expand_cache:
                    expand_cache[t.name] = expand(defs[t.name])
                return expand_cache[t.name]
            if isinstance(t, Op):
                return Op(t.op, expand(t.left), expand(t.right))
            return t

        tests = [(expand(a.expr), a.eq) for a in formula if isinstance(a, Test)]

        # Ground atoms decide immediately; a false one refutes the formula.
        for expr, eq in tests:
            if not _mentions_free(expr, depth_of):
                if (eval_int({}, expr) == 0) != eq:
                    return Unsat()

        # Linear narrowing constraints, grouped by the deepest variable.
        by_depth_cons: dict[int, list[_Constraint]] = {}
        all_cons: list[_Constraint] = []
        for expr, eq in tests:
            for c in _extract(expr, holds=not eq) or ():
                if not c.lin.coeffs:
                    continue
                all_cons.append(c)
                d = max(depth_of[n] for n in c.lin.coeffs)
                by_depth_cons.setdefault(d, []).append(c)

        # Bounds-consistency propagation over all of Z.  An empty interval
        # here refutes the formula outright (the box played no part).
        intervals = _propagate(all_cons, free)
        if intervals is None:
            return Unsat()

        # Evaluation checks, grouped by the depth at which they close.
        by_depth_tests: dict[int, list[tuple[Term, bool]]] = {}
        for expr, eq in tests:
            support = _mentions_free(expr, depth_of)
            if support:
                by_depth_tests.setdefault(max(support), []).append((expr, eq))

        model: Model = {}
        state = {"clipped": False, "nodes": 0}

        def search(i: int) -> Optional[Model]:
            if i == len(free):
                full = dict(model)
                for n, e in defs.items():
                    full[n] = eval_int(full, e)
                return full if eval_formula(full, formula) else None
            var = free[i]
            lo, hi = intervals[var]  # constraint-derived range over all of Z
            excluded: set[int] = set()
            for c in by_depth_cons.get(i, ()):
                cf = c.lin.coeffs[var]
                rest = c.lin.const + sum(
                    c.lin.coeffs[n] * model[n] for n in c.lin.coeffs if n != var
                )
                # constraint: cf*x + rest REL 0
                if c.rel == _LE:
                    if cf > 0:
                        b = (-rest) // cf  # x <= floor(-rest/cf)
                        hi = b if hi is None else min(hi, b)
                    else:
                        b = _ceil_div(-rest, cf)  # x >= ceil(-rest/cf)
                        lo = b if lo is None else max(lo, b)
                elif c.rel == _EQ:
                    if rest % cf != 0:
                        return None
                    v = -rest // cf
                    lo = v if lo is None else max(lo, v)
                    hi = v if hi is None else min(hi, v)
                elif c.rel == _NE:
                    if rest % cf == 0:
                        excluded.add(-rest // cf)
            start = -self.box if lo is None else max(lo, -self.box)
            stop = self.box if hi is None else min(hi, self.box)
            if (lo is None or lo < -self.box) or (hi is None or hi > self.box):
                state["clipped"] = True
            if start > stop:
                return None
            checks = by_depth_tests.get(i, ())
            for v in range(start, stop + 1):
                if v in excluded:
                    continue
                state["nodes"] += 1
                if state["nodes"] > self.max_nodes:
                    raise _Budget()
                model[var] = v
                ok = True
                for expr, eq in checks:
                    if (eval_int(model, expr) == 0) != eq:
                        ok = False
                        break
                if not ok:
                    continue
                got = search(i + 1)
                if got is not None:
                    return got
            model.pop(var, None)
            return None

        try:
            got = search(0)
        except _Budget:
            return Unknown("search budget exhausted")
        if got is not None:
            return Sat(got)
        if state["clipped"]:
            return Unknown("box exhausted")
        return Unsat()


class _Budget(Exception):
    pass


Interval = tuple[Optional[int], Optional[int]]  # None = unbounded


def _propagate(
    cons: list[_Constraint], free: list[Name], rounds: int = 32
) -> Optional[dict[Name, Interval]]:
    """Interval (bounds-consistency) propagation over the integers.

    Equalities contribute both directions; disequalities contribute
    nothing.  Returns None when some interval becomes empty, which is a
    sound unsatisfiability proof independent of the search box.
    """
    les: list[_Lin] = []
    for c in cons:
        if c.rel == _LE:
            les.append(c.lin)
        elif c.rel == _EQ:
            les.append(c.lin)
            les.append(_lin_scale(c.lin, -1))

    iv: dict[Name, Interval] = {n: (None, None) for n in free}

    def term_min(coef: int, n: Name) -> Optional[int]:
        lo, hi = iv[n]
        if coef > 0:
            return None if lo is None else coef * lo
        return None if hi is None else coef * hi

    for _ in range(rounds):
        changed = False
        for lin in les:
            for var, cf in lin.coeffs.items():
                s = lin.const
                ok = True
                for n, c in lin.coeffs.items():
                    if n == var:
                        continue
                    tm = term_min(c, n)
                    if tm is None:
                        ok = False
                        break
                    s += tm
                if not ok:
                    continue
                # cf*var <= -s
                lo, hi = iv[var]
                if cf > 0:
                    b = (-s) // cf
                    if hi is None or b < hi:
                        iv[var] = (lo, b)
                        changed = True
                else:
                    b = _ceil_div(-s, cf)
                    if lo is None or b > lo:
                        iv[var] = (b, hi)
                        changed = True
                lo, hi = iv[var]
                if lo is not None and hi is not None and lo > hi:
                    return None
        if not changed:
            break
    return iv


def _ceil_div(a: int, b: int) -> int:
    # ceil(a/b); used with b < 0 for lower bounds of cf*x + rest <= 0
    q, r = divmod(a, b)
    return q + (1 if r else 0)


def _mentions_free(expr: Term, depth_of: dict[Name, int]) -> set[int]:
    out: set[int] = set()

    def walk(t: Term) -> None:
        if isinstance(t, Sym) and t.name in depth_of:
            out.add(depth_of[t.name])
        elif isinstance(t, Op):
            walk(t.left)
            walk(t.right)

    walk(expr)
    return out


# ---------------------------------------------------------------------------
# SMT-LIB v2 emission and the external backend
# ---------------------------------------------------------------------------


def _smt_int(n: int) -> str:
    return str(n) if n >= 0 else f"(- {-n})"


def _smt_expr(t: Term) -> str:
    if isinstance(t, Lit):
        return _smt_int(t.value)
    if isinstance(t, Sym):
        return _smt_sym(t.name)
    if isinstance(t, Op):
        a, b = _smt_expr(t.left), _smt_expr(t.right)
        if t.op in ("+", "-", "*"):
            return f"({t.op} {a} {b})"
        if t.op in ("<", "<=", ">", ">="):
            return f"(ite ({t.op} {a} {b}) 1 0)"
        if t.op == "==":
            return f"(ite (= {a} {b}) 1 0)"
        if t.op == "!=":
            return f"(ite (distinct {a} {b}) 1 0)"
        if t.op == "&&":
            return f"(ite (and (distinct {a} 0) (distinct {b} 0)) 1 0)"
        if t.op == "||":
            return f"(ite (or (distinct {a} 0) (distinct {b} 0)) 1 0)"
    raise AssertionError(f"smt_expr: {t!r}")


def _smt_sym(n: Name) -> str:
    return f"{n.label}_{n.uid}"


def emit_smtlib(formula: Formula, extra_syms: Iterable[Name] = ()) -> str:
    """An SMT-LIB v2 script: integer constants, one assert per atom,
    check-sat and get-model."""
    lines = ["(set-logic ALL)"]
    syms = formula_syms(formula)
    for n in extra_syms:
        if n not in syms:
            syms.append(n)
    for n in syms:
        lines.append(f"(declare-const {_smt_sym(n)} Int)")
    for a in formula:
        if isinstance(a, DefEq):
            lines.append(f"(assert (= {_smt_sym(a.sym)} {_smt_expr(a.expr)}))")
        else:
            rel = "=" if a.eq else "distinct"
            lines.append(f"(assert ({rel} {_smt_expr(a.expr)} 0))")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


class ExternalSolver:
    """Talks SMT-LIB v2 to a solver process over stdin/stdout."""

    def __init__(self, command: str, timeout: float = 60.0):
        import shlex

        self.argv = shlex.split(command)
        self.timeout = timeout

    def solve(self, formula: Formula, extra_syms: Iterable[Name] = ()) -> SatResult:
        script = emit_smtlib(formula, extra_syms)
        try:
            proc = subprocess.run(
                self.argv, input=script, capture_output=True, text=True,
                timeout=self.timeout,
            )
        except OSError as e:
            raise BackendError(f"cannot run {self.argv[0]}: {e}")
        except subprocess.TimeoutExpired:
            return Unknown("external solver timeout")
        out = proc.stdout.strip().splitlines()
        if not out:
            raise BackendError(f"no output from solver (stderr: {proc.stderr.strip()!r})")
        verdict = out[0].strip()
        if verdict == "unsat":
            return Unsat()
        if verdict == "unknown":
            return Unknown("solver answered unknown")
        if verdict != "sat":
            raise BackendError(f"unexpected solver reply {verdict!r}")
        syms = formula_syms(formula)
        for n in extra_syms:
            if n not in syms:
                syms.append(n)
        by_symbol = {_smt_sym(n): n for n in syms}
        model = _parse_model("\n".join(out[1:]), by_symbol)
        for n in syms:
            model.setdefault(n, 0)
        return Sat(model)


def _parse_model(text: str, by_symbol: dict[str, Name]) -> Model:
    toks = _sexp_tokens(text)
    model: Model = {}
    i = 0
    while i < len(toks):
        if toks[i] == "define-fun" and i + 1 < len(toks):
            sym = toks[i + 1]
            j = i + 2
            val, j = _parse_int_after(toks, j)
            if sym in by_symbol and val is not None:
                model[by_symbol[sym]] = val
            i = j
        else:
            i += 1
    return model


def _sexp_tokens(text: str) -> list[str]:
    out: list[str] = []
    cur = ""
    for ch in text:
        if ch in "()":
            if cur:
                out.append(cur)
                cur = ""
            out.append(ch)
        elif ch.isspace():
            if cur:
                out.append(cur)
                cur = ""
        else:
            cur += ch
    if cur:
        out.append(cur)
    return out


def _parse_int_after(toks: list[str], j: int) -> tuple[Optional[int], int]:
    # skip "() Int" or "() (_ ...)" style headers until a literal appears
    depth = 0
    while j < len(toks):
        t = toks[j]
        if t == "(":
            if j + 2 < len(toks) and toks[j + 1] == "-" :
                # negative literal (- n)
                try:
                    v = -int(toks[j + 2])
                    return v, j + 3
                except ValueError:
                    pass
            depth += 1
            j += 1
            continue
        if t == ")":
            if depth == 0:
                return None, j + 1
            depth -= 1
            j += 1
            continue
        try:
            return int(t), j + 1
        except ValueError:
            j += 1
    return None, j


# ---------------------------------------------------------------------------
# Front door
# ---------------------------------------------------------------------------


def check_sat(
    formula: Formula,
    backend=None,
    extra_syms: Iterable[Name] = (),
) -> SatResult:
    """Check satisfiability; Sat always carries a verified witness.

    With no backend the built-in enumeration is used; its Unsat answers
    come only from constraint-complete exhaustion, while a clipped search
    yields Unknown.
    """
    solver = backend or BuiltinSolver()
    res = solver.solve(formula, extra_syms)
    if isinstance(res, Sat):
        if not eval_formula(res.model, formula):
            raise BackendError("backend returned a model that does not satisfy the formula")
    return res
