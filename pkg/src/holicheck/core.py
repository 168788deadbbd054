"""Typed AST, type system, and shared data model.

Defines the term language (a higher-order library language with global
references and abstract/public/private methods), its simple type system,
sorted name supplies, and the move/trace vocabulary used by the game
semantics modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union


class TypeCheckError(Exception):
    """A term or declaration does not follow the typing rules."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------
#   T ::= unit | int | T * T | T -> T
# References may store any non-product type; methods always have arrow type.


@dataclass(frozen=True)
class TUnit:
    def __str__(self) -> str:
        return "unit"


@dataclass(frozen=True)
class TInt:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class TProd:
    fst: Type
    snd: Type

    def __str__(self) -> str:
        return f"({self.fst} * {self.snd})"


@dataclass(frozen=True)
class TArrow:
    arg: Type
    ret: Type

    def __str__(self) -> str:
        return f"({self.arg} -> {self.ret})"


Type = Union[TUnit, TInt, TProd, TArrow]

UNIT = TUnit()
INT = TInt()


def storable(t: Type) -> bool:
    """References may hold anything except products."""
    return not isinstance(t, TProd)


def subtypes(t: Type) -> Iterator[Type]:
    """All syntactic subtypes of t, including t itself."""
    yield t
    if isinstance(t, (TProd, TArrow)):
        a, b = (t.fst, t.snd) if isinstance(t, TProd) else (t.arg, t.ret)
        yield from subtypes(a)
        yield from subtypes(b)


# ---------------------------------------------------------------------------
# Names
# ---------------------------------------------------------------------------

# Name sorts: method names, global reference names, term variables, and
# symbolic integers.  Names compare by (sort, uid) only; the label is for
# display and the type rides along for convenience.
METH = "meth"
REF = "ref"
VAR = "var"
SYM = "sym"


@dataclass(frozen=True, eq=False)
class Name:
    sort: str
    uid: int
    label: str = field(compare=False)
    typ: Optional[Type] = field(compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.sort, self.uid)))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Name)
            and self.uid == other.uid
            and self.sort == other.sort
        )

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"Name({self.sort}:{self.label}#{self.uid})"


class NameSupply:
    """Deterministic fresh-name source.

    A single monotone counter serves every sort, so two names from one
    supply are never equal.  Supplies are single-owner mutable state; the
    symbolic explorer snapshots the cursor instead of sharing the object.
    """

    def __init__(self, seed: int = 0, start: int = 0):
        self.seed = seed
        self._next = start

    def fresh(self, sort: str, typ: Optional[Type], label: Optional[str] = None) -> Name:
        uid = self._next
        self._next += 1
        if label is None:
            prefix = {METH: "m", REF: "r", VAR: "x", SYM: "k"}[sort]
            label = f"{prefix}{uid}"
        return Name(sort, uid, label, typ)

    def cursor(self) -> int:
        return self._next

    def set_cursor(self, n: int) -> None:
        if n > self._next:
            self._next = n


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------
# Core constructors only; surface sugar is expanded before these are built.
# EvalBox marks an in-progress internal call in machine states and never
# occurs in source programs.  Sym is a symbolic integer and only occurs in
# symbolic runs.  Hole is the pretty face of an evaluation context.


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Unit:
    pass


@dataclass(frozen=True)
class Var:
    name: Name


@dataclass(frozen=True)
class Meth:
    """A method name in term position."""

    name: Name


@dataclass(frozen=True)
class Sym:
    """A symbolic integer."""

    name: Name


@dataclass(frozen=True)
class Deref:
    ref: Name


@dataclass(frozen=True)
class Assign:
    ref: Name
    rhs: Term


@dataclass(frozen=True)
class Op:
    op: str
    left: Term
    right: Term


@dataclass(frozen=True)
class Pair:
    fst: Term
    snd: Term


@dataclass(frozen=True)
class Proj:
    index: int  # 1 or 2
    arg: Term


@dataclass(frozen=True)
class App:
    fn: Term
    arg: Term


@dataclass(frozen=True)
class If:
    cond: Term
    then: Term
    els: Term


@dataclass(frozen=True)
class Let:
    var: Name
    rhs: Term
    body: Term


@dataclass(frozen=True)
class Lam:
    var: Name
    ret: Type
    body: Term

    @property
    def arrow(self) -> TArrow:
        return TArrow(self.var.typ, self.ret)


@dataclass(frozen=True)
class LetRec:
    var: Name
    fn: Lam
    body: Term


@dataclass(frozen=True)
class Assert:
    arg: Term


@dataclass(frozen=True)
class EvalBox:
    body: Term


@dataclass(frozen=True)
class Hole:
    pass


Term = Union[
    Lit, Unit, Var, Meth, Sym, Deref, Assign, Op, Pair, Proj, App, If, Let,
    Lam, LetRec, Assert, EvalBox, Hole,
]

HOLE = Hole()
UNIT_VAL = Unit()


# Binary integer operations.  Comparisons yield 0/1; && and || are strict
# and read any nonzero operand as true.  There is no division.
OPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "<": lambda a, b: 1 if a < b else 0,
    ">": lambda a, b: 1 if a > b else 0,
    "<=": lambda a, b: 1 if a <= b else 0,
    ">=": lambda a, b: 1 if a >= b else 0,
    "==": lambda a, b: 1 if a == b else 0,
    "!=": lambda a, b: 1 if a != b else 0,
    "&&": lambda a, b: 1 if a != 0 and b != 0 else 0,
    "||": lambda a, b: 1 if a != 0 or b != 0 else 0,
}


def is_value(t: Term) -> bool:
    if isinstance(t, (Lit, Unit, Meth, Sym)):
        return True
    if isinstance(t, Pair):
        return is_value(t.fst) and is_value(t.snd)
    return False


def meths_of(v: Term) -> list[Name]:
    """Method names occurring in a value, left to right."""
    if isinstance(v, Meth):
        return [v.name]
    if isinstance(v, Pair):
        return meths_of(v.fst) + meths_of(v.snd)
    return []


def symints_of(v: Term) -> list[Name]:
    """Symbolic integers occurring in a term, left to right."""
    out: list[Name] = []

    def walk(t: Term) -> None:
        if isinstance(t, Sym):
            out.append(t.name)
        elif isinstance(t, Pair):
            walk(t.fst)
            walk(t.snd)
        elif isinstance(t, Op):
            walk(t.left)
            walk(t.right)

    walk(v)
    return out


def subst(t: Term, var: Name, val: Term) -> Term:
    """Substitute val for var in t.

    Substituted values are closed, so no capture is possible; binders for
    the same name simply shadow.
    """
    if isinstance(t, Var):
        return val if t.name == var else t
    if isinstance(t, (Lit, Unit, Meth, Sym, Deref, Hole)):
        return t
    if isinstance(t, Assign):
        return Assign(t.ref, subst(t.rhs, var, val))
    if isinstance(t, Op):
        return Op(t.op, subst(t.left, var, val), subst(t.right, var, val))
    if isinstance(t, Pair):
        return Pair(subst(t.fst, var, val), subst(t.snd, var, val))
    if isinstance(t, Proj):
        return Proj(t.index, subst(t.arg, var, val))
    if isinstance(t, App):
        return App(subst(t.fn, var, val), subst(t.arg, var, val))
    if isinstance(t, If):
        return If(subst(t.cond, var, val), subst(t.then, var, val), subst(t.els, var, val))
    if isinstance(t, Let):
        rhs = subst(t.rhs, var, val)
        body = t.body if t.var == var else subst(t.body, var, val)
        return Let(t.var, rhs, body)
    if isinstance(t, Lam):
        if t.var == var:
            return t
        return Lam(t.var, t.ret, subst(t.body, var, val))
    if isinstance(t, LetRec):
        if t.var == var:
            return t
        fn = subst(t.fn, var, val)
        return LetRec(t.var, fn, subst(t.body, var, val))
    if isinstance(t, Assert):
        return Assert(subst(t.arg, var, val))
    if isinstance(t, EvalBox):
        return EvalBox(subst(t.body, var, val))
    raise AssertionError(f"subst: unhandled term {t!r}")


def plug(ctx: Term, t: Term) -> Term:
    """Fill the (unique) hole of an evaluation context."""
    if isinstance(ctx, Hole):
        return t
    if isinstance(ctx, Assign):
        return Assign(ctx.ref, plug(ctx.rhs, t))
    if isinstance(ctx, Op):
        if has_hole(ctx.left):
            return Op(ctx.op, plug(ctx.left, t), ctx.right)
        return Op(ctx.op, ctx.left, plug(ctx.right, t))
    if isinstance(ctx, Pair):
        if has_hole(ctx.fst):
            return Pair(plug(ctx.fst, t), ctx.snd)
        return Pair(ctx.fst, plug(ctx.snd, t))
    if isinstance(ctx, Proj):
        return Proj(ctx.index, plug(ctx.arg, t))
    if isinstance(ctx, App):
        if has_hole(ctx.fn):
            return App(plug(ctx.fn, t), ctx.arg)
        return App(ctx.fn, plug(ctx.arg, t))
    if isinstance(ctx, If):
        return If(plug(ctx.cond, t), ctx.then, ctx.els)
    if isinstance(ctx, Let):
        return Let(ctx.var, plug(ctx.rhs, t), ctx.body)
    if isinstance(ctx, Assert):
        return Assert(plug(ctx.arg, t))
    if isinstance(ctx, EvalBox):
        return EvalBox(plug(ctx.body, t))
    raise AssertionError(f"plug: no hole under {ctx!r}")


def has_hole(t: Term) -> bool:
    if isinstance(t, Hole):
        return True
    if isinstance(t, Assign):
        return has_hole(t.rhs)
    if isinstance(t, Op):
        return has_hole(t.left) or has_hole(t.right)
    if isinstance(t, Pair):
        return has_hole(t.fst) or has_hole(t.snd)
    if isinstance(t, Proj):
        return has_hole(t.arg)
    if isinstance(t, App):
        return has_hole(t.fn) or has_hole(t.arg)
    if isinstance(t, If):
        return has_hole(t.cond)
    if isinstance(t, Let):
        return has_hole(t.rhs)
    if isinstance(t, Assert):
        return has_hole(t.arg)
    if isinstance(t, EvalBox):
        return has_hole(t.body)
    return False


# ---------------------------------------------------------------------------
# Moves and traces
# ---------------------------------------------------------------------------

CALL = "call"
RET = "ret"


@dataclass(frozen=True)
class Move:
    kind: str  # call | ret
    method: Name
    payload: Term  # a (possibly symbolic) value
    polarity: str  # "O" (environment) or "P" (library)

    def __str__(self) -> str:
        deco = "?" if self.kind == CALL else "!"
        return f"{self.method.label}({term_str(self.payload)}){deco}"


Trace = tuple[Move, ...]


def trace_str(trace: Trace) -> str:
    return " . ".join(str(m) for m in trace)


def term_str(t: Term) -> str:
    """Compact one-line rendering used in diagnostics and reports."""
    if isinstance(t, Lit):
        return str(t.value)
    if isinstance(t, Unit):
        return "()"
    if isinstance(t, (Var, Meth, Sym)):
        return t.name.label
    if isinstance(t, Deref):
        return f"!{t.ref.label}"
    if isinstance(t, Assign):
        return f"{t.ref.label} := {term_str(t.rhs)}"
    if isinstance(t, Op):
        return f"({term_str(t.left)} {t.op} {term_str(t.right)})"
    if isinstance(t, Pair):
        return f"({term_str(t.fst)}, {term_str(t.snd)})"
    if isinstance(t, Proj):
        return f"{'fst' if t.index == 1 else 'snd'} {term_str(t.arg)}"
    if isinstance(t, App):
        return f"{term_str(t.fn)}({term_str(t.arg)})"
    if isinstance(t, If):
        return f"if {term_str(t.cond)} then {term_str(t.then)} else {term_str(t.els)}"
    if isinstance(t, Let):
        return f"let {t.var.label} = {term_str(t.rhs)} in {term_str(t.body)}"
    if isinstance(t, Lam):
        return f"fun({t.var.label}:{t.var.typ}):({t.ret}) -> {term_str(t.body)}"
    if isinstance(t, LetRec):
        return f"letrec {t.var.label} = {term_str(t.fn)} in {term_str(t.body)}"
    if isinstance(t, Assert):
        return f"assert({term_str(t.arg)})"
    if isinstance(t, EvalBox):
        return f"[[{term_str(t.body)}]]"
    if isinstance(t, Hole):
        return "@"
    raise AssertionError(f"term_str: {t!r}")


# ---------------------------------------------------------------------------
# Typed libraries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DAbstract:
    name: Name


@dataclass(frozen=True)
class DMethod:
    name: Name
    fn: Lam
    public: bool


@dataclass(frozen=True)
class DRefInt:
    name: Name
    init: int


@dataclass(frozen=True)
class DRefFun:
    name: Name
    fn: Lam


@dataclass(frozen=True)
class DRefAlias:
    """A function reference initialised with an already-declared method."""

    name: Name
    target: Name


Decl = Union[DAbstract, DMethod, DRefInt, DRefFun, DRefAlias]


@dataclass
class TypedLibrary:
    """A checked library: resolved declarations plus name tables.

    Immutable in practice apart from ``supply``, which must keep advancing
    so that runtime-allocated names stay fresh.
    """

    decls: list[Decl]
    main: Optional[Term]
    meths: dict[str, Name]
    refs: dict[str, Name]
    pub: tuple[Name, ...]
    abs_: tuple[Name, ...]
    supply: NameSupply
    source: object = None  # surface.SourceLibrary when parsed from text

    @property
    def is_client(self) -> bool:
        return self.main is not None


# ---------------------------------------------------------------------------
# Type checking
# ---------------------------------------------------------------------------

_SRC = None  # populated lazily to avoid a circular import


def _surface():
    global _SRC
    if _SRC is None:
        from holicheck import surface as _SRC_mod

        _SRC = _SRC_mod
    return _SRC


def typecheck(src, supply: Optional[NameSupply] = None) -> TypedLibrary:
    """Check a desugared surface library and resolve it to core terms.

    Every method body must check against its declared arrow type, main (if
    present) at unit, and only declared-or-abstract names may be mentioned.
    Raises TypeCheckError otherwise.
    """
    S = _surface()
    supply = supply or NameSupply()

    meths: dict[str, Name] = {}
    refs: dict[str, Name] = {}

    # Pass 1: allocate names so bodies may refer to any declaration.
    for d in src.decls:
        if isinstance(d, S.SAbstract):
            if not isinstance(d.typ, TArrow):
                raise TypeCheckError(f"abstract {d.name} must have arrow type, got {d.typ}")
            meths[d.name] = supply.fresh(METH, d.typ, d.name)
        elif isinstance(d, S.SMethod):
            arrow = TArrow(d.fn.param_type, d.fn.ret_type)
            meths[d.name] = supply.fresh(METH, arrow, d.name)
        elif isinstance(d, S.SRefInt):
            refs[d.name] = supply.fresh(REF, INT, d.name)
        elif isinstance(d, S.SRefFun):
            if isinstance(d.init, str):
                continue  # type comes from the target; resolved below
            arrow = TArrow(d.init.param_type, d.init.ret_type)
            refs[d.name] = supply.fresh(REF, arrow, d.name)
        else:
            raise AssertionError(f"unknown declaration {d!r}")
    for d in src.decls:
        if isinstance(d, S.SRefFun) and isinstance(d.init, str):
            target = meths.get(d.init)
            if target is None:
                raise TypeCheckError(f"fun {d.name} := {d.init}: unknown method {d.init}")
            refs[d.name] = supply.fresh(REF, target.typ, d.name)

    checker = _Checker(meths, refs, supply)

    decls: list[Decl] = []
    pub: list[Name] = []
    abs_: list[Name] = []
    for d in src.decls:
        if isinstance(d, S.SAbstract):
            abs_.append(meths[d.name])
            decls.append(DAbstract(meths[d.name]))
        elif isinstance(d, S.SMethod):
            name = meths[d.name]
            fn = checker.check_lambda(d.fn)
            decls.append(DMethod(name, fn, d.public))
            if d.public:
                pub.append(name)
        elif isinstance(d, S.SRefInt):
            decls.append(DRefInt(refs[d.name], d.init))
        elif isinstance(d, S.SRefFun):
            name = refs[d.name]
            if isinstance(d.init, str):
                decls.append(DRefAlias(name, meths[d.init]))
            else:
                fn = checker.check_lambda(d.init)
                decls.append(DRefFun(name, fn))

    main = None
    if src.main is not None:
        body, typ = checker.infer({}, src.main)
        if typ != UNIT:
            raise TypeCheckError(f"main must have type unit, got {typ}")
        main = body

    return TypedLibrary(
        decls=decls,
        main=main,
        meths=meths,
        refs=refs,
        pub=tuple(pub),
        abs_=tuple(abs_),
        supply=supply,
        source=src,
    )


class _Checker:
    """Syntax-directed checker over desugared surface terms.

    Binders are fully annotated (lambda parameters) or determined by the
    right-hand side (let), so inference needs no unification: type_of(M)
    is unique when defined.
    """

    def __init__(self, meths: dict[str, Name], refs: dict[str, Name], supply: NameSupply):
        self.meths = meths
        self.refs = refs
        self.supply = supply

    def check_lambda(self, lam) -> Lam:
        fn, typ = self.infer({}, lam)
        return fn

    def infer(self, env: dict[str, Name], t) -> tuple[Term, Type]:
        S = _surface()

        if isinstance(t, S.SLit):
            #  --------------
            #   |- i : int
            return Lit(t.value), INT

        if isinstance(t, S.SUnit):
            return UNIT_VAL, UNIT

        if isinstance(t, S.SIdent):
            #   x in Vars_T          m in Meths_{T,T'}
            #  -------------        --------------------
            #   |- x : T             |- m : T -> T'
            if t.name in env:
                n = env[t.name]
                return Var(n), n.typ
            if t.name in self.meths:
                n = self.meths[t.name]
                return Meth(n), n.typ
            raise TypeCheckError(f"{t.pos}: unknown name {t.name}")

        if isinstance(t, S.SDeref):
            #   r in Refs_T
            #  -------------
            #   |- !r : T
            r = self._ref(t.name, t.pos)
            return Deref(r), r.typ

        if isinstance(t, S.SAssign):
            #   r in Refs_T   |- M : T
            #  ------------------------
            #   |- r := M : unit
            r = self._ref(t.name, t.pos)
            rhs, typ = self.infer(env, t.rhs)
            if typ != r.typ:
                raise TypeCheckError(
                    f"{t.pos}: {t.name} := ... expects {r.typ}, got {typ}"
                )
            return Assign(r, rhs), UNIT

        if isinstance(t, S.SOp):
            #   |- M : int   |- M' : int
            #  ---------------------------
            #   |- M (+) M' : int
            left, lt = self.infer(env, t.left)
            right, rt = self.infer(env, t.right)
            if lt != INT or rt != INT:
                raise TypeCheckError(f"{t.pos}: operator {t.op} needs int operands, got {lt}, {rt}")
            return Op(t.op, left, right), INT

        if isinstance(t, S.SPair):
            fst, ft = self.infer(env, t.fst)
            snd, st = self.infer(env, t.snd)
            return Pair(fst, snd), TProd(ft, st)

        if isinstance(t, S.SProj):
            arg, typ = self.infer(env, t.arg)
            if not isinstance(typ, TProd):
                raise TypeCheckError(f"{t.pos}: fst/snd needs a pair, got {typ}")
            return Proj(t.index, arg), typ.fst if t.index == 1 else typ.snd

        if isinstance(t, S.SApp):
            #   |- M : T -> T'   |- M' : T
            #  ----------------------------
            #   |- M M' : T'
            fn, ft = self.infer(env, t.fn)
            arg, at = self.infer(env, t.arg)
            if not isinstance(ft, TArrow):
                raise TypeCheckError(f"{t.pos}: applying non-function of type {ft}")
            if ft.arg != at:
                raise TypeCheckError(f"{t.pos}: argument has type {at}, expected {ft.arg}")
            return App(fn, arg), ft.ret

        if isinstance(t, S.SIf):
            cond, ct = self.infer(env, t.cond)
            if ct != INT:
                raise TypeCheckError(f"{t.pos}: if-condition must be int, got {ct}")
            then, tt = self.infer(env, t.then)
            els, et = self.infer(env, t.els)
            if tt != et:
                raise TypeCheckError(f"{t.pos}: if-branches disagree: {tt} vs {et}")
            return If(cond, then, els), tt

        if isinstance(t, S.SLet):
            rhs, rt = self.infer(env, t.rhs)
            if t.annot is not None and t.annot != rt:
                raise TypeCheckError(f"{t.pos}: let {t.var} annotated {t.annot}, rhs has {rt}")
            var = self.supply.fresh(VAR, rt, t.var)
            body, bt = self.infer({**env, t.var: var}, t.body)
            return Let(var, rhs, body), bt

        if isinstance(t, S.SLam):
            param = self.supply.fresh(VAR, t.param_type, t.param)
            body, bt = self.infer({**env, t.param: param}, t.body)
            if bt != t.ret_type:
                raise TypeCheckError(
                    f"{t.pos}: lambda body has type {bt}, declared {t.ret_type}"
                )
            return Lam(param, t.ret_type, body), TArrow(t.param_type, t.ret_type)

        if isinstance(t, S.SLetRec):
            #   x, \y.M : T -> T''   |- M' : T'
            #  ---------------------------------
            #   |- letrec x = \y.M in M' : T'
            arrow = TArrow(t.fn.param_type, t.fn.ret_type)
            var = self.supply.fresh(VAR, arrow, t.var)
            env2 = {**env, t.var: var}
            param = self.supply.fresh(VAR, t.fn.param_type, t.fn.param)
            fbody, fbt = self.infer({**env2, t.fn.param: param}, t.fn.body)
            if fbt != t.fn.ret_type:
                raise TypeCheckError(
                    f"{t.pos}: letrec body has type {fbt}, declared {t.fn.ret_type}"
                )
            fn = Lam(param, t.fn.ret_type, fbody)
            body, bt = self.infer(env2, t.body)
            return LetRec(var, fn, body), bt

        if isinstance(t, S.SAssert):
            #   |- M : int
            #  ---------------------
            #   |- assert(M) : unit
            arg, at = self.infer(env, t.arg)
            if at != INT:
                raise TypeCheckError(f"{t.pos}: assert needs an int, got {at}")
            return Assert(arg), UNIT

        raise TypeCheckError(f"{getattr(t, 'pos', '?')}: cannot type {t!r} (undesugared?)")

    def _ref(self, name: str, pos) -> Name:
        r = self.refs.get(name)
        if r is None:
            raise TypeCheckError(f"{pos}: unknown reference {name}")
        return r
