"""Concrete operational semantics and the concrete interaction game.

Provides the small-step machine for closed terms (with the nested-call
counter k), the library build, syntactic linking, whole-client execution,
and a labelled transition system over interaction moves in which the
environment's moves are supplied externally.  The environment move space
is infinite here, so this module is the replay/validation oracle rather
than an explorer.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Union

from holicheck.core import (
    CALL, HOLE, INT, METH, OPS, RET, UNIT, UNIT_VAL,
    App, Assert, Assign, DAbstract, DMethod, DRefAlias, DRefFun, DRefInt,
    Deref, EvalBox, Hole, If, Lam, Let, LetRec, Lit, Meth, Move, Name,
    NameSupply, Op, Pair, Proj, Sym, TArrow, TProd, TUnit, Term, Trace,
    TypedLibrary, Type, Unit, Var,
    has_hole, is_value, meths_of, plug, subst, term_str,
)


class IncompatibleError(Exception):
    """Library and client cannot be linked."""


class IllegalMove(Exception):
    """An environment move violates typing, freshness, or bounds."""


@dataclass(frozen=True)
class Bounds:
    k: int
    l: int


# ---------------------------------------------------------------------------
# Term machine
# ---------------------------------------------------------------------------


@dataclass
class TermConfig:
    term: Term
    repo: dict[Name, Lam]
    store: dict[Name, Term]
    k: int


@dataclass
class Stepped:
    config: TermConfig


@dataclass
class StuckValue:
    value: Term


@dataclass
class StuckCall:
    """Application of a method not in the repository: an external call."""

    method: Name
    arg: Term
    ctx: Term  # evaluation context with a hole


@dataclass
class FailedStep:
    """The term has the failure shape E[assert(0)]."""

    config: TermConfig


@dataclass
class BoundHit:
    """A nested call would exceed the depth budget."""

    config: TermConfig


StepResult = Union[Stepped, StuckValue, StuckCall, FailedStep, BoundHit]


def decompose(t: Term) -> Optional[tuple[Term, Term]]:
    """Split t into (evaluation context, redex); None when t is a value."""
    if is_value(t):
        return None
    ctx, redex = _decompose(t)
    return ctx, redex


def _decompose(t: Term) -> tuple[Term, Term]:
    if isinstance(t, (Lam, LetRec, Deref)):
        return HOLE, t
    if isinstance(t, Assert):
        if is_value(t.arg):
            return HOLE, t
        ctx, r = _decompose(t.arg)
        return Assert(ctx), r
    if isinstance(t, Assign):
        if is_value(t.rhs):
            return HOLE, t
        ctx, r = _decompose(t.rhs)
        return Assign(t.ref, ctx), r
    if isinstance(t, Op):
        if not is_value(t.left):
            ctx, r = _decompose(t.left)
            return Op(t.op, ctx, t.right), r
        if not is_value(t.right):
            ctx, r = _decompose(t.right)
            return Op(t.op, t.left, ctx), r
        return HOLE, t
    if isinstance(t, Pair):
        if not is_value(t.fst):
            ctx, r = _decompose(t.fst)
            return Pair(ctx, t.snd), r
        ctx, r = _decompose(t.snd)
        return Pair(t.fst, ctx), r
    if isinstance(t, Proj):
        if is_value(t.arg):
            return HOLE, t
        ctx, r = _decompose(t.arg)
        return Proj(t.index, ctx), r
    if isinstance(t, App):
        if not is_value(t.fn):
            ctx, r = _decompose(t.fn)
            return App(ctx, t.arg), r
        if not is_value(t.arg):
            ctx, r = _decompose(t.arg)
            return App(t.fn, ctx), r
        return HOLE, t
    if isinstance(t, If):
        if is_value(t.cond):
            return HOLE, t
        ctx, r = _decompose(t.cond)
        return If(ctx, t.then, t.els), r
    if isinstance(t, Let):
        if is_value(t.rhs):
            return HOLE, t
        ctx, r = _decompose(t.rhs)
        return Let(t.var, ctx, t.body), r
    if isinstance(t, EvalBox):
        if is_value(t.body):
            return HOLE, t
        ctx, r = _decompose(t.body)
        return EvalBox(ctx), r
    if isinstance(t, Var):
        raise AssertionError(f"open term in machine: {t!r}")
    raise AssertionError(f"decompose: stuck on {t!r}")


def step(cfg: TermConfig, supply: NameSupply, k0: Optional[int] = None) -> StepResult:
    """One small step.  Exactly one rule applies or the config is terminal.

    A nested call is allowed only while k <= k0; box exit decrements k.
    """
    dec = decompose(cfg.term)
    if dec is None:
        return StuckValue(cfg.term)
    ctx, redex = dec

    def done(sub: Term, **changes) -> Stepped:
        new = replace(cfg, term=plug(ctx, sub), **changes)
        return Stepped(new)

    if isinstance(redex, Let):
        return done(subst(redex.body, redex.var, redex.rhs))
    if isinstance(redex, Proj):
        pair = redex.arg
        return done(pair.fst if redex.index == 1 else pair.snd)
    if isinstance(redex, Assign):
        store = dict(cfg.store)
        store[redex.ref] = redex.rhs
        return done(UNIT_VAL, store=store)
    if isinstance(redex, Deref):
        return done(cfg.store[redex.ref])
    if isinstance(redex, If):
        if not isinstance(redex.cond, Lit):
            raise AssertionError("symbolic value in concrete machine")
        return done(redex.then if redex.cond.value != 0 else redex.els)
    if isinstance(redex, Op):
        if not (isinstance(redex.left, Lit) and isinstance(redex.right, Lit)):
            raise AssertionError("symbolic value in concrete machine")
        return done(Lit(OPS[redex.op](redex.left.value, redex.right.value)))
    if isinstance(redex, Lam):
        m = supply.fresh(METH, redex.arrow)
        repo = dict(cfg.repo)
        repo[m] = redex
        return done(Meth(m), repo=repo)
    if isinstance(redex, LetRec):
        arrow = redex.fn.arrow
        m = supply.fresh(METH, arrow, redex.var.label)
        fn = Lam(redex.fn.var, redex.fn.ret, subst(redex.fn.body, redex.var, Meth(m)))
        repo = dict(cfg.repo)
        repo[m] = fn
        return done(subst(redex.body, redex.var, Meth(m)), repo=repo)
    if isinstance(redex, Assert):
        if not isinstance(redex.arg, Lit):
            raise AssertionError("symbolic value in concrete machine")
        if redex.arg.value != 0:
            return done(UNIT_VAL)
        return FailedStep(cfg)
    if isinstance(redex, App):
        fn = redex.fn
        if not isinstance(fn, Meth):
            raise AssertionError(f"applying a non-method value: {term_str(fn)}")
        body = cfg.repo.get(fn.name)
        if body is None:
            return StuckCall(fn.name, redex.arg, ctx)
        if k0 is not None and cfg.k > k0:
            return BoundHit(cfg)
        return done(EvalBox(subst(body.body, body.var, redex.arg)), k=cfg.k + 1)
    if isinstance(redex, EvalBox):
        return done(redex.body, k=cfg.k - 1)
    raise AssertionError(f"step: no rule for {redex!r}")


# ---------------------------------------------------------------------------
# Library build and linking
# ---------------------------------------------------------------------------


@dataclass
class BuildResult:
    repo: dict[Name, Lam]
    store: dict[Name, Term]
    pub: tuple[Name, ...]
    abs_: tuple[Name, ...]


def build(lib: TypedLibrary) -> BuildResult:
    """Fold the declarations left to right into repository and store.

    A lambda-initialised reference allocates a fresh method name; a
    name-initialised one stores the named method directly.
    """
    repo: dict[Name, Lam] = {}
    store: dict[Name, Term] = {}
    pub: list[Name] = []
    abs_: list[Name] = []
    for d in lib.decls:
        if isinstance(d, DAbstract):
            abs_.append(d.name)
        elif isinstance(d, DMethod):
            repo[d.name] = d.fn
            if d.public:
                pub.append(d.name)
        elif isinstance(d, DRefInt):
            store[d.name] = Lit(d.init)
        elif isinstance(d, DRefFun):
            m = lib.supply.fresh(METH, d.fn.arrow)
            repo[m] = d.fn
            store[d.name] = Meth(m)
        elif isinstance(d, DRefAlias):
            store[d.name] = Meth(d.target)
        else:
            raise AssertionError(f"build: {d!r}")
    return BuildResult(repo, store, tuple(pub), tuple(abs_))


def link(lib: TypedLibrary, client: TypedLibrary) -> TypedLibrary:
    """Compose a library with a closing client into a closed client.

    Checks complementation of the name interfaces, disjoint stores, and
    disjoint method ownership, then concatenates the two sources with
    abstract declarations and public keywords removed.
    """
    from holicheck import surface as S
    from holicheck.core import typecheck

    if not client.is_client:
        raise IncompatibleError("second component has no main body")
    if lib.is_client:
        raise IncompatibleError("first component must be a library (no main)")

    def sig(names: Iterable[Name]) -> dict[str, Type]:
        return {n.label: n.typ for n in names}

    if sig(lib.pub) != sig(client.abs_):
        raise IncompatibleError(
            f"complementation: library publics {sorted(sig(lib.pub))} vs "
            f"client abstracts {sorted(sig(client.abs_))}"
        )
    if sig(lib.abs_) != sig(client.pub):
        raise IncompatibleError(
            f"complementation: library abstracts {sorted(sig(lib.abs_))} vs "
            f"client publics {sorted(sig(client.pub))}"
        )
    shared_refs = set(lib.refs) & set(client.refs)
    if shared_refs:
        raise IncompatibleError(f"disjoint state: shared references {sorted(shared_refs)}")
    lib_owned = set(lib.meths) - {n.label for n in lib.abs_}
    client_owned = set(client.meths) - {n.label for n in client.abs_}
    shared_meths = lib_owned & client_owned
    if shared_meths:
        raise IncompatibleError(f"method ownership: shared methods {sorted(shared_meths)}")

    def strip(src: S.SourceLibrary) -> list[S.SDecl]:
        out = []
        for d in src.decls:
            if isinstance(d, S.SAbstract):
                continue
            if isinstance(d, S.SMethod) and d.public:
                d = S.SMethod(d.name, d.fn, False, d.pos)
            out.append(d)
        return out

    merged = S.SourceLibrary(
        tuple(strip(lib.source) + strip(client.source)),
        client.source.main,
    )
    return typecheck(merged, NameSupply())


@dataclass
class RunTerminated:
    value: Term
    steps: int


@dataclass
class RunFailed:
    config: TermConfig
    steps: int


@dataclass
class RunBoundExhausted:
    config: TermConfig
    steps: int


RunResult = Union[RunTerminated, RunFailed, RunBoundExhausted]


def run_client(client: TypedLibrary, k0: int) -> RunResult:
    """Execute a closed client's main body under the call-depth budget."""
    if not client.is_client:
        raise IncompatibleError("run_client needs a client with a main body")
    if client.abs_:
        raise IncompatibleError(
            f"client still imports {[n.label for n in client.abs_]}; link it first"
        )
    built = build(client)
    cfg = TermConfig(client.main, built.repo, built.store, 0)
    steps = 0
    while True:
        res = step(cfg, client.supply, k0=k0)
        if isinstance(res, Stepped):
            cfg = res.config
            steps += 1
            continue
        if isinstance(res, StuckValue):
            return RunTerminated(res.value, steps)
        if isinstance(res, FailedStep):
            return RunFailed(res.config, steps)
        if isinstance(res, BoundHit):
            return RunBoundExhausted(res.config, steps)
        if isinstance(res, StuckCall):
            raise IncompatibleError(f"call to undefined method {res.method.label}")
        raise AssertionError(res)


# ---------------------------------------------------------------------------
# Interaction game
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PQFrame:
    """A pending question by the program: (method, interrupted context)."""

    method: Name
    ctx: Term


@dataclass(frozen=True)
class OQFrame:
    """A pending question by the environment: (method, saved counter)."""

    method: Name
    l: int


Frame = Union[PQFrame, OQFrame]


@dataclass
class GameConfig:
    polarity: str  # "P" | "O"
    stack: tuple[Frame, ...]
    term: Optional[Term]  # P side
    l: Optional[int]  # O side
    repo: dict[Name, Lam]
    store: dict[Name, Term]
    pub: tuple[Name, ...]
    abs_: tuple[Name, ...]
    k: int


def initial_config(lib: TypedLibrary) -> GameConfig:
    """The starting environment-to-move configuration of a built library."""
    built = build(lib)
    if lib.is_client:
        return GameConfig("P", (), lib.main, None, built.repo, built.store,
                          built.pub, built.abs_, 0)
    return GameConfig("O", (), None, 0, built.repo, built.store,
                      built.pub, built.abs_, 0)


@dataclass(frozen=True)
class OMoveSpec:
    """An environment move offered by a driver (answer or fresh question)."""

    kind: str  # call | ret
    method: Optional[Name]  # None for ret (answers the top pending question)
    payload: Term


ODriver = Callable[[GameConfig], list[OMoveSpec]]


def value_has_type(v: Term, t: Type) -> bool:
    if isinstance(v, Lit):
        return t == INT
    if isinstance(v, Unit):
        return t == UNIT
    if isinstance(v, Meth):
        return v.name.typ == t
    if isinstance(v, Pair):
        return (
            isinstance(t, TProd)
            and value_has_type(v.fst, t.fst)
            and value_has_type(v.snd, t.snd)
        )
    return False


def _check_fresh_names(payload: Term, cfg: GameConfig) -> list[Name]:
    """Environment payload names must be globally fresh and pairwise distinct."""
    names = meths_of(payload)
    if len(set(names)) != len(names):
        raise IllegalMove("environment payload repeats a method name")
    known = set(cfg.repo) | set(cfg.abs_) | set(cfg.pub)
    for n in names:
        if n in known:
            raise IllegalMove(f"environment payload reuses known name {n.label}")
    return names


def quiesce(cfg: GameConfig, supply: NameSupply, k0: Optional[int]) -> tuple[GameConfig, int]:
    """Run internal steps to the next move point or terminal shape."""
    assert cfg.polarity == "P"
    tc = TermConfig(cfg.term, cfg.repo, cfg.store, cfg.k)
    steps = 0
    while True:
        res = step(tc, supply, k0=k0)
        if isinstance(res, Stepped):
            tc = res.config
            steps += 1
            continue
        out = replace(cfg, term=tc.term, repo=tc.repo, store=tc.store, k=tc.k)
        return out, steps


def p_event(cfg: GameConfig, supply: NameSupply, k0: Optional[int]) -> StepResult:
    """The terminal shape of a quiesced program-side configuration."""
    tc = TermConfig(cfg.term, cfg.repo, cfg.store, cfg.k)
    return step(tc, supply, k0=k0)


def game_step(
    cfg: GameConfig,
    driver: ODriver,
    supply: NameSupply,
    bounds: Optional[Bounds] = None,
) -> list[tuple[object, GameConfig]]:
    """Successors of a game configuration.

    Program-side: internal steps are compressed to quiescence first (one
    "internal" successor), then the enabled move (a question to an
    abstract method, or the answer to the top pending question) is
    emitted.  Environment-side: each driver-proposed move is validated
    and applied.  Terminal configurations yield no successors.
    """
    k0 = bounds.k if bounds else None
    l0 = bounds.l if bounds else None

    if cfg.polarity == "P":
        quiesced, steps = quiesce(cfg, supply, k0)
        if steps > 0:
            return [("internal", quiesced)]
        res = p_event(cfg, supply, k0)
        if isinstance(res, (FailedStep, BoundHit)):
            return []
        if isinstance(res, StuckValue):
            if not cfg.stack:
                return []
            top = cfg.stack[-1]
            if not isinstance(top, OQFrame):
                raise AssertionError("return offered with a pending own question")
            pub = _extend(cfg.pub, [n for n in meths_of(res.value) if n in cfg.repo])
            move = Move(RET, top.method, res.value, "P")
            nxt = replace(
                cfg, polarity="O", stack=cfg.stack[:-1], term=None, l=top.l, pub=pub
            )
            return [(move, nxt)]
        if isinstance(res, StuckCall):
            if res.method not in cfg.abs_:
                raise AssertionError(f"call to unknown method {res.method.label}")
            pub = _extend(cfg.pub, [n for n in meths_of(res.arg) if n in cfg.repo])
            move = Move(CALL, res.method, res.arg, "P")
            frame = PQFrame(res.method, res.ctx)
            nxt = replace(
                cfg, polarity="O", stack=cfg.stack + (frame,), term=None, l=0, pub=pub
            )
            return [(move, nxt)]
        raise AssertionError(res)

    out: list[tuple[object, GameConfig]] = []
    for spec in driver(cfg):
        move, nxt = apply_o_move(cfg, spec, l0)
        out.append((move, nxt))
    return out


def apply_o_move(cfg: GameConfig, spec: OMoveSpec, l0: Optional[int]) -> tuple[Move, GameConfig]:
    """Validate and apply one environment move to an O-configuration."""
    assert cfg.polarity == "O"
    if spec.kind == RET:
        if not cfg.stack or not isinstance(cfg.stack[-1], PQFrame):
            raise IllegalMove("no pending question to answer")
        top = cfg.stack[-1]
        if spec.method is not None and spec.method != top.method:
            raise IllegalMove(f"answer names {spec.method.label}, pending is {top.method.label}")
        expected = top.method.typ.ret
        if not value_has_type(spec.payload, expected):
            raise IllegalMove(f"answer payload must have type {expected}")
        fresh = _check_fresh_names(spec.payload, cfg)
        move = Move(RET, top.method, spec.payload, "O")
        nxt = replace(
            cfg,
            polarity="P",
            stack=cfg.stack[:-1],
            term=plug(top.ctx, spec.payload),
            l=None,
            abs_=_extend(cfg.abs_, fresh),
        )
        return move, nxt
    if spec.kind == CALL:
        m = spec.method
        if m is None or m not in cfg.pub:
            raise IllegalMove(f"environment may only call public methods, not {m and m.label}")
        if l0 is not None and cfg.l >= l0:
            raise IllegalMove("environment question budget exhausted")
        if not value_has_type(spec.payload, m.typ.arg):
            raise IllegalMove(f"call payload must have type {m.typ.arg}")
        fresh = _check_fresh_names(spec.payload, cfg)
        move = Move(CALL, m, spec.payload, "O")
        frame = OQFrame(m, cfg.l + 1)
        nxt = replace(
            cfg,
            polarity="P",
            stack=cfg.stack + (frame,),
            term=App(Meth(m), spec.payload),
            l=None,
            abs_=_extend(cfg.abs_, fresh),
        )
        return move, nxt
    raise IllegalMove(f"unknown move kind {spec.kind}")


def _extend(names: tuple[Name, ...], extra: Iterable[Name]) -> tuple[Name, ...]:
    out = list(names)
    for n in extra:
        if n not in out:
            out.append(n)
    return tuple(out)


# ---------------------------------------------------------------------------
# Trace replay
# ---------------------------------------------------------------------------


@dataclass
class Reaches:
    config: GameConfig
    moves: Trace


@dataclass
class Diverges:
    index: int
    reason: str


ReplayResult = Union[Reaches, Diverges]


def replay(lib: TypedLibrary, trace: Trace, k0: int, l0: int) -> ReplayResult:
    """Drive the game with the trace's environment moves and check that the
    program side replies with exactly the trace's own moves.

    Method names are matched up to the bijection induced by first
    occurrence, since fresh names differ between runs.  After the last
    move the program side is run to quiescence; the final configuration
    is returned.
    """
    cfg = initial_config(lib)
    supply = lib.supply
    bounds = Bounds(k0, l0)

    fwd: dict[Name, Name] = {}
    taken: set[Name] = set()

    def bind(a: Name, b: Name, reason: str) -> None:
        if a in fwd:
            if fwd[a] != b:
                raise _Mismatch(f"{reason}: {a.label} already matched differently")
            return
        if b in taken:
            raise _Mismatch(f"{reason}: {b.label} matched twice")
        fwd[a] = b
        taken.add(b)

    for n in set(cfg.pub) | set(cfg.abs_):
        fwd[n] = n
        taken.add(n)

    def translate(v: Term) -> Term:
        if isinstance(v, Meth):
            if v.name not in fwd:
                m = supply.fresh(METH, v.name.typ, v.name.label + "'")
                bind(v.name, m, "environment name")
            return Meth(fwd[v.name])
        if isinstance(v, Pair):
            return Pair(translate(v.fst), translate(v.snd))
        if isinstance(v, Sym):
            raise _Mismatch("trace is not concrete (symbolic payload)")
        return v

    def match_payload(expected: Term, actual: Term, reason: str) -> None:
        if isinstance(expected, Meth) and isinstance(actual, Meth):
            bind(expected.name, actual.name, reason)
            return
        if isinstance(expected, Pair) and isinstance(actual, Pair):
            match_payload(expected.fst, actual.fst, reason)
            match_payload(expected.snd, actual.snd, reason)
            return
        if expected != actual:
            raise _Mismatch(f"{reason}: payload {term_str(actual)}, trace has {term_str(expected)}")

    emitted: list[Move] = []
    i = 0
    while i < len(trace):
        mv = trace[i]
        try:
            if cfg.polarity == "O":
                if mv.polarity != "O":
                    raise _Mismatch("trace offers a program move at an environment point")
                method = None
                if mv.kind == CALL:
                    if mv.method not in fwd:
                        raise _Mismatch(f"call to unknown method {mv.method.label}")
                    method = fwd[mv.method]
                    if method not in cfg.pub:
                        raise _Mismatch(f"call to non-public name {mv.method.label}")
                move, cfg = apply_o_move(
                    cfg, OMoveSpec(mv.kind, method, translate(mv.payload)), l0
                )
                emitted.append(move)
                i += 1
                continue
            succs = game_step(cfg, lambda _: [], supply, bounds)
            if not succs:
                raise _Mismatch("program side is terminal before the trace ends")
            label, nxt = succs[0]
            if label == "internal":
                cfg = nxt
                continue
            if mv.polarity != "P":
                raise _Mismatch("trace offers an environment move at a program point")
            if label.kind != mv.kind:
                raise _Mismatch(f"program played {label.kind}, trace has {mv.kind}")
            bind(mv.method, label.method, "move method")
            if fwd[mv.method] != label.method:
                raise _Mismatch(f"program answered {label.method.label}, trace has {mv.method.label}")
            match_payload(mv.payload, label.payload, "program payload")
            emitted.append(label)
            cfg = nxt
            i += 1
        except (IllegalMove, _Mismatch) as e:
            return Diverges(i, str(e))

    if cfg.polarity == "P":
        cfg, _ = quiesce(cfg, supply, k0)
    return Reaches(cfg, tuple(emitted))


class _Mismatch(Exception):
    pass


def flip(trace: Trace) -> Trace:
    """Swap move polarity, giving the complementary component's view."""
    return tuple(
        Move(m.kind, m.method, m.payload, "O" if m.polarity == "P" else "P")
        for m in trace
    )
