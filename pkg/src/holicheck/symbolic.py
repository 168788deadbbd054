"""Symbolic execution of terms and the symbolic interaction game.

Environment-supplied integers become fresh symbolic integers and
environment-supplied functions become fresh method names, so the
environment side of the game is finitely branching.  Branches on a
symbolic integer fork the path and extend the path condition; arithmetic
on symbolic values binds a fresh symbolic integer in the symbolic
environment rather than computing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from holicheck.core import (
    CALL, HOLE, INT, METH, OPS, RET, SYM, UNIT, UNIT_VAL,
    App, Assert, Assign, Deref, EvalBox, If, Lam, Let, LetRec, Lit, Meth,
    Move, Name, Op, Pair, Proj, Sym, TArrow, TProd, TUnit, Term, Type,
    TypedLibrary, Unit, Var, is_value, meths_of, plug, subst,
)
from holicheck.concrete import Bounds, build, decompose


# ---------------------------------------------------------------------------
# Path conditions and symbolic environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    """One conjunct: expr = 0 (eq=True) or expr != 0 (eq=False)."""

    expr: Term
    eq: bool

    def __str__(self) -> str:
        from holicheck.core import term_str

        return f"{term_str(self.expr)} {'=' if self.eq else '!='} 0"


PathCondition = tuple[Atom, ...]

# The symbolic environment maps reference names to their current symbolic
# values and defined symbolic integers to the expressions they stand for.
SymEnv = dict[Name, Term]


def sym_name(uid: int) -> Name:
    return Name(SYM, uid, f"k{uid}", INT)


def meth_name(uid: int, typ: Type) -> Name:
    return Name(METH, uid, f"m{uid}", typ)


def symval(typ: Type, abs_: tuple[Name, ...], cursor: int) -> tuple[Term, tuple[Name, ...], int]:
    """The canonical environment value of a type.

    unit gives (), int a fresh symbolic integer, arrow a fresh method
    name, and products thread the name set left to right.  Every fresh
    name joins the abstract set.
    """
    if isinstance(typ, TUnit):
        return UNIT_VAL, abs_, cursor
    if typ == INT:
        k = sym_name(cursor)
        return Sym(k), abs_ + (k,), cursor + 1
    if isinstance(typ, TArrow):
        m = meth_name(cursor, typ)
        return Meth(m), abs_ + (m,), cursor + 1
    if isinstance(typ, TProd):
        fst, abs1, cur1 = symval(typ.fst, abs_, cursor)
        snd, abs2, cur2 = symval(typ.snd, abs1, cur1)
        return Pair(fst, snd), abs2, cur2
    raise AssertionError(f"symval: {typ!r}")


# ---------------------------------------------------------------------------
# Small-step symbolic term semantics (reference form)
# ---------------------------------------------------------------------------


@dataclass
class SymTermConfig:
    term: Term
    repo: dict[Name, Lam]
    sigma: SymEnv
    pc: PathCondition
    k: int
    cursor: int


@dataclass
class SymStepped:
    config: SymTermConfig


@dataclass
class SymStuckValue:
    value: Term


@dataclass
class SymStuckCall:
    method: Name
    arg: Term
    ctx: Term


@dataclass
class SymFailed:
    config: SymTermConfig


@dataclass
class SymBoundHit:
    config: SymTermConfig


SymStepResult = Union[SymStepped, SymStuckValue, SymStuckCall, SymFailed, SymBoundHit]


def sym_step(cfg: SymTermConfig, k0: Optional[int] = None) -> list[SymStepResult]:
    """All successors of one symbolic step.

    Deterministic rules give one successor; branching on a symbolic
    integer (if / assert) gives two, each extending the path condition
    with complementary atoms.  Infeasible branches are kept; deciding
    them is the solver's concern.
    """
    dec = decompose(cfg.term)
    if dec is None:
        return [SymStuckValue(cfg.term)]
    ctx, redex = dec

    def stepped(sub: Term, **changes) -> SymStepped:
        return SymStepped(replace(cfg, term=plug(ctx, sub), **changes))

    if isinstance(redex, Let):
        return [stepped(subst(redex.body, redex.var, redex.rhs))]
    if isinstance(redex, Proj):
        pair = redex.arg
        return [stepped(pair.fst if redex.index == 1 else pair.snd)]
    if isinstance(redex, Assign):
        sigma = dict(cfg.sigma)
        sigma[redex.ref] = redex.rhs
        return [stepped(UNIT_VAL, sigma=sigma)]
    if isinstance(redex, Deref):
        return [stepped(cfg.sigma[redex.ref])]
    if isinstance(redex, Lam):
        m = meth_name(cfg.cursor, redex.arrow)
        repo = dict(cfg.repo)
        repo[m] = redex
        return [stepped(Meth(m), repo=repo, cursor=cfg.cursor + 1)]
    if isinstance(redex, LetRec):
        m = meth_name(cfg.cursor, redex.fn.arrow)
        fn = Lam(redex.fn.var, redex.fn.ret, subst(redex.fn.body, redex.var, Meth(m)))
        repo = dict(cfg.repo)
        repo[m] = fn
        return [stepped(subst(redex.body, redex.var, Meth(m)), repo=repo, cursor=cfg.cursor + 1)]
    if isinstance(redex, Op):
        lv, rv = redex.left, redex.right
        if isinstance(lv, Lit) and isinstance(rv, Lit):
            return [stepped(Lit(OPS[redex.op](lv.value, rv.value)))]
        k = sym_name(cfg.cursor)
        sigma = dict(cfg.sigma)
        sigma[k] = Op(redex.op, lv, rv)
        return [stepped(Sym(k), sigma=sigma, cursor=cfg.cursor + 1)]
    if isinstance(redex, If):
        if isinstance(redex.cond, Lit):
            return [stepped(redex.then if redex.cond.value != 0 else redex.els)]
        return [
            stepped(redex.els, pc=cfg.pc + (Atom(redex.cond, True),)),
            stepped(redex.then, pc=cfg.pc + (Atom(redex.cond, False),)),
        ]
    if isinstance(redex, Assert):
        if isinstance(redex.arg, Lit):
            if redex.arg.value != 0:
                return [stepped(UNIT_VAL)]
            return [SymFailed(cfg)]
        return [
            stepped(Assert(Lit(0)), pc=cfg.pc + (Atom(redex.arg, True),)),
            stepped(UNIT_VAL, pc=cfg.pc + (Atom(redex.arg, False),)),
        ]
    if isinstance(redex, App):
        fn = redex.fn
        if not isinstance(fn, Meth):
            raise AssertionError("applying a non-method value")
        body = cfg.repo.get(fn.name)
        if body is None:
            return [SymStuckCall(fn.name, redex.arg, ctx)]
        if k0 is not None and cfg.k > k0:
            return [SymBoundHit(cfg)]
        return [stepped(EvalBox(subst(body.body, body.var, redex.arg)), k=cfg.k + 1)]
    if isinstance(redex, EvalBox):
        return [stepped(redex.body, k=cfg.k - 1)]
    raise AssertionError(f"sym_step: no rule for {redex!r}")


# ---------------------------------------------------------------------------
# Machine form used by the explorer
# ---------------------------------------------------------------------------
# Same rules as sym_step, but the evaluation context is kept as a frame
# stack so internal runs need no re-decomposition, and branch points fork
# whole machine states.

_ASSERT = "assert"
_ASSIGN = "assign"
_OP1 = "op1"
_OP2 = "op2"
_PAIR1 = "pair1"
_PAIR2 = "pair2"
_PROJ = "proj"
_APP1 = "app1"
_APP2 = "app2"
_LET = "let"
_IF = "if"
_BOX = "box"

Kont = tuple


def kont_to_ctx(kont: Kont) -> Term:
    """Rebuild the evaluation context term (with a hole) from a frame stack."""
    t: Term = HOLE
    for fr in reversed(kont):
        tag = fr[0]
        if tag == _ASSERT:
            t = Assert(t)
        elif tag == _ASSIGN:
            t = Assign(fr[1], t)
        elif tag == _OP1:
            t = Op(fr[1], t, fr[2])
        elif tag == _OP2:
            t = Op(fr[1], fr[2], t)
        elif tag == _PAIR1:
            t = Pair(t, fr[1])
        elif tag == _PAIR2:
            t = Pair(fr[1], t)
        elif tag == _PROJ:
            t = Proj(fr[1], t)
        elif tag == _APP1:
            t = App(t, fr[1])
        elif tag == _APP2:
            t = App(fr[1], t)
        elif tag == _LET:
            t = Let(fr[1], t, fr[2])
        elif tag == _IF:
            t = If(t, fr[1], fr[2])
        elif tag == _BOX:
            t = EvalBox(t)
        else:
            raise AssertionError(fr)
    return t


@dataclass
class PState:
    """An in-flight program-side evaluation."""

    focus: Term
    kont: Kont
    repo: dict[Name, Lam]
    sigma: SymEnv
    pc: PathCondition
    k: int
    cursor: int

    def fork(self) -> "PState":
        return PState(self.focus, self.kont, dict(self.repo), dict(self.sigma),
                      self.pc, self.k, self.cursor)


@dataclass
class OutValue:
    state: PState


@dataclass
class OutFail:
    state: PState  # focus is the failing assert's context point


@dataclass
class OutCall:
    state: PState  # kont is the interrupted context
    method: Name
    arg: Term


@dataclass
class OutBound:
    state: PState
    method: Name
    arg: Term


POutcome = Union[OutValue, OutFail, OutCall, OutBound]


def run_p(state: PState, k0: Optional[int]) -> list[POutcome]:
    """Run a program-side state to all its quiescent outcomes."""
    out: list[POutcome] = []
    work = [state]
    while work:
        st = work.pop()
        res = _run_one(st, k0, work)
        if res is not None:
            out.append(res)
    return out


def _run_one(st: PState, k0: Optional[int], work: list[PState]) -> Optional[POutcome]:
    while True:
        t = st.focus
        if is_value(t):
            if not st.kont:
                return OutValue(st)
            fr = st.kont[-1]
            st.kont = st.kont[:-1]
            tag = fr[0]
            if tag == _ASSERT:
                if isinstance(t, Lit):
                    if t.value == 0:
                        st.kont = st.kont + ((_ASSERT,),)
                        st.focus = Lit(0)
                        return OutFail(st)
                    st.focus = UNIT_VAL
                    continue
                # branch: fail with expr = 0, pass with expr != 0
                fail = st.fork()
                fail.kont = fail.kont + ((_ASSERT,),)
                fail.focus = Lit(0)
                fail.pc = fail.pc + (Atom(t, True),)
                st.pc = st.pc + (Atom(t, False),)
                st.focus = UNIT_VAL
                work.append(st)
                return OutFail(fail)
            if tag == _ASSIGN:
                st.sigma = dict(st.sigma)
                st.sigma[fr[1]] = t
                st.focus = UNIT_VAL
                continue
            if tag == _OP1:
                st.kont = st.kont + ((_OP2, fr[1], t),)
                st.focus = fr[2]
                continue
            if tag == _OP2:
                op, lv = fr[1], fr[2]
                if isinstance(lv, Lit) and isinstance(t, Lit):
                    st.focus = Lit(OPS[op](lv.value, t.value))
                else:
                    k = sym_name(st.cursor)
                    st.cursor += 1
                    st.sigma = dict(st.sigma)
                    st.sigma[k] = Op(op, lv, t)
                    st.focus = Sym(k)
                continue
            if tag == _PAIR1:
                st.kont = st.kont + ((_PAIR2, t),)
                st.focus = fr[1]
                continue
            if tag == _PAIR2:
                st.focus = Pair(fr[1], t)
                continue
            if tag == _PROJ:
                st.focus = t.fst if fr[1] == 1 else t.snd
                continue
            if tag == _APP1:
                st.kont = st.kont + ((_APP2, t),)
                st.focus = fr[1]
                continue
            if tag == _APP2:
                fn = fr[1]
                m = fn.name
                body = st.repo.get(m)
                if body is None:
                    return OutCall(st, m, t)
                if k0 is not None and st.k > k0:
                    return OutBound(st, m, t)
                st.k += 1
                st.kont = st.kont + ((_BOX,),)
                st.focus = subst(body.body, body.var, t)
                continue
            if tag == _LET:
                st.focus = subst(fr[2], fr[1], t)
                continue
            if tag == _IF:
                if isinstance(t, Lit):
                    st.focus = fr[1] if t.value != 0 else fr[2]
                    continue
                other = st.fork()
                other.pc = other.pc + (Atom(t, True),)
                other.focus = fr[2]
                work.append(other)
                st.pc = st.pc + (Atom(t, False),)
                st.focus = fr[1]
                continue
            if tag == _BOX:
                st.k -= 1
                st.focus = t
                continue
            raise AssertionError(fr)

        if isinstance(t, Deref):
            st.focus = st.sigma[t.ref]
            continue
        if isinstance(t, Assign):
            st.kont = st.kont + ((_ASSIGN, t.ref),)
            st.focus = t.rhs
            continue
        if isinstance(t, Op):
            st.kont = st.kont + ((_OP1, t.op, t.right),)
            st.focus = t.left
            continue
        if isinstance(t, Pair):
            if not is_value(t.fst):
                st.kont = st.kont + ((_PAIR1, t.snd),)
                st.focus = t.fst
            else:
                st.kont = st.kont + ((_PAIR2, t.fst),)
                st.focus = t.snd
            continue
        if isinstance(t, Proj):
            st.kont = st.kont + ((_PROJ, t.index),)
            st.focus = t.arg
            continue
        if isinstance(t, App):
            if not is_value(t.fn):
                st.kont = st.kont + ((_APP1, t.arg),)
                st.focus = t.fn
            else:
                st.kont = st.kont + ((_APP2, t.fn),)
                st.focus = t.arg
            continue
        if isinstance(t, If):
            st.kont = st.kont + ((_IF, t.then, t.els),)
            st.focus = t.cond
            continue
        if isinstance(t, Let):
            st.kont = st.kont + ((_LET, t.var, t.body),)
            st.focus = t.rhs
            continue
        if isinstance(t, Lam):
            m = meth_name(st.cursor, t.arrow)
            st.cursor += 1
            st.repo = dict(st.repo)
            st.repo[m] = t
            st.focus = Meth(m)
            continue
        if isinstance(t, LetRec):
            m = meth_name(st.cursor, t.fn.arrow)
            st.cursor += 1
            fn = Lam(t.fn.var, t.fn.ret, subst(t.fn.body, t.var, Meth(m)))
            st.repo = dict(st.repo)
            st.repo[m] = fn
            st.focus = subst(t.body, t.var, Meth(m))
            continue
        if isinstance(t, Assert):
            st.kont = st.kont + ((_ASSERT,),)
            st.focus = t.arg
            continue
        raise AssertionError(f"run_p: unhandled focus {t!r}")


# ---------------------------------------------------------------------------
# Symbolic game configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SPQFrame:
    """Program question pending: the interrupted context as a frame stack."""

    method: Name
    kont: Kont


@dataclass(frozen=True)
class SOQFrame:
    method: Name
    l: int


SFrame = Union[SPQFrame, SOQFrame]


@dataclass
class SymGameConfig:
    polarity: str  # "P" | "O"
    stack: tuple[SFrame, ...]
    focus: Optional[Term]
    kont: Optional[Kont]
    l: Optional[int]
    repo: dict[Name, Lam]
    pub: tuple[Name, ...]
    abs_: tuple[Name, ...]
    sigma: SymEnv
    pc: PathCondition
    k: int
    cursor: int

    @property
    def term(self) -> Optional[Term]:
        if self.polarity != "P":
            return None
        return plug(kont_to_ctx(self.kont), self.focus)


def initial_sym_config(lib: TypedLibrary) -> SymGameConfig:
    """Initial environment-to-move configuration; the store seeds sigma."""
    built = build(lib)
    sigma: SymEnv = dict(built.store)
    if lib.is_client:
        return SymGameConfig("P", (), lib.main, (), None, built.repo,
                             built.pub, built.abs_, sigma, (), 0,
                             lib.supply.cursor())
    return SymGameConfig("O", (), None, None, 0, built.repo,
                         built.pub, built.abs_, sigma, (), 0,
                         lib.supply.cursor())


def o_successors(cfg: SymGameConfig, bounds: Optional[Bounds]) -> list[tuple[Move, SymGameConfig]]:
    """All environment moves: the pending answer first, then one question
    per public method in declaration order."""
    assert cfg.polarity == "O"
    l0 = bounds.l if bounds else None
    out: list[tuple[Move, SymGameConfig]] = []
    if cfg.stack and isinstance(cfg.stack[-1], SPQFrame):
        top = cfg.stack[-1]
        payload, abs2, cursor = symval(top.method.typ.ret, cfg.abs_, cfg.cursor)
        move = Move(RET, top.method, payload, "O")
        nxt = replace(
            cfg, polarity="P", stack=cfg.stack[:-1], focus=payload,
            kont=top.kont, l=None, abs_=abs2, cursor=cursor,
        )
        out.append((move, nxt))
    if l0 is None or cfg.l < l0:
        for m in cfg.pub:
            payload, abs2, cursor = symval(m.typ.arg, cfg.abs_, cfg.cursor)
            move = Move(CALL, m, payload, "O")
            frame = SOQFrame(m, cfg.l + 1)
            nxt = replace(
                cfg, polarity="P", stack=cfg.stack + (frame,),
                focus=App(Meth(m), payload), kont=(), l=None,
                abs_=abs2, cursor=cursor,
            )
            out.append((move, nxt))
    return out


@dataclass
class PLeaf:
    """A finished program-side path segment."""

    kind: str  # "failed" | "terminated" | "bound"
    config: SymGameConfig
    value: Optional[Term] = None


def p_successors(
    cfg: SymGameConfig, bounds: Optional[Bounds]
) -> list[Union[tuple[Move, SymGameConfig], PLeaf]]:
    """Run the program side to quiescence along every internal branch and
    emit the enabled move (or leaf) of each."""
    assert cfg.polarity == "P"
    k0 = bounds.k if bounds else None
    state = PState(cfg.focus, cfg.kont, cfg.repo, cfg.sigma, cfg.pc, cfg.k, cfg.cursor)
    out: list[Union[tuple[Move, SymGameConfig], PLeaf]] = []
    for oc in run_p(state, k0):
        st = oc.state
        after = replace(
            cfg, repo=st.repo, sigma=st.sigma, pc=st.pc, k=st.k,
            cursor=st.cursor, focus=st.focus, kont=st.kont,
        )
        if isinstance(oc, OutFail):
            out.append(PLeaf("failed", after))
        elif isinstance(oc, OutBound):
            after = replace(after, focus=App(Meth(oc.method), oc.arg))
            out.append(PLeaf("bound", after))
        elif isinstance(oc, OutValue):
            if not cfg.stack:
                out.append(PLeaf("terminated", after, value=st.focus))
                continue
            top = cfg.stack[-1]
            assert isinstance(top, SOQFrame), "return offered under a pending own question"
            pub = _extend(after.pub, [n for n in meths_of(st.focus) if n in st.repo])
            move = Move(RET, top.method, st.focus, "P")
            nxt = replace(
                after, polarity="O", stack=cfg.stack[:-1], focus=None,
                kont=None, l=top.l, pub=pub,
            )
            out.append((move, nxt))
        elif isinstance(oc, OutCall):
            if oc.method not in after.abs_:
                raise AssertionError(f"external call to unknown {oc.method.label}")
            pub = _extend(after.pub, [n for n in meths_of(oc.arg) if n in st.repo])
            move = Move(CALL, oc.method, oc.arg, "P")
            frame = SPQFrame(oc.method, st.kont)
            nxt = replace(
                after, polarity="O", stack=cfg.stack + (frame,), focus=None,
                kont=None, l=0, pub=pub,
            )
            out.append((move, nxt))
        else:
            raise AssertionError(oc)
    return out


def sym_game_step(
    cfg: SymGameConfig, bounds: Optional[Bounds] = None
) -> list[tuple[object, SymGameConfig]]:
    """Successor relation in the (Move | "internal") presentation.

    Program side: one entry per internal branch outcome; entries that end
    in a move carry the move, terminal ones are tagged "internal" and
    yield a final configuration (no further successors).  Environment
    side: the pending answer plus one question per public method.
    """
    if cfg.polarity == "O":
        return list(o_successors(cfg, bounds))
    out: list[tuple[object, SymGameConfig]] = []
    for succ in p_successors(cfg, bounds):
        if isinstance(succ, PLeaf):
            out.append(("internal", succ.config))
        else:
            out.append(succ)
    return out


def classify(cfg: SymGameConfig, bounds: Optional[Bounds]) -> Optional[str]:
    """Leaf class of a configuration, or None if it has successors."""
    if cfg.polarity == "O":
        if cfg.stack and isinstance(cfg.stack[-1], SPQFrame):
            return None
        l0 = bounds.l if bounds else None
        if cfg.pub and (l0 is None or cfg.l < l0):
            return None
        return "bound" if cfg.pub else "terminated"
    raise AssertionError("classify is for environment configurations")


def _extend(names: tuple[Name, ...], extra) -> tuple[Name, ...]:
    out = list(names)
    for n in extra:
        if n not in out:
            out.append(n)
    return tuple(out)
