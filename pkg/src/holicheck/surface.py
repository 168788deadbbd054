"""Concrete syntax: lexing, parsing, desugaring, pretty-printing.

The surface language follows the listing style used throughout the bundled
corpus:

    import send : (int -> unit)
    int balance := 100;
    public withdraw (m:int) : (unit) = {
      if not (!balance < m) then
        send(m);
        balance := !balance - m;
        assert(not (!balance < 0))
      else ()
    };

Sugar (sequencing, `not`, unary minus, `f()` for unit calls) is expanded by
:func:`desugar` into the core constructs only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from holicheck.core import INT, UNIT, TArrow, TProd, Type


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int, expected: tuple[str, ...] = ()):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col
        self.expected = expected


# ---------------------------------------------------------------------------
# Surface AST
# ---------------------------------------------------------------------------

Pos = tuple[int, int]


def _pos_field() -> Pos:
    return (0, 0)


@dataclass(frozen=True)
class SLit:
    value: int
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SUnit:
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SIdent:
    name: str
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SDeref:
    name: str
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SAssign:
    name: str
    rhs: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SOp:
    op: str
    left: STerm
    right: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SNot:
    arg: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SNeg:
    arg: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SSeq:
    first: STerm
    second: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SPair:
    fst: STerm
    snd: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SProj:
    index: int
    arg: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SApp:
    fn: STerm
    arg: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SIf:
    cond: STerm
    then: STerm
    els: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SLet:
    var: str
    annot: Optional[Type]
    rhs: STerm
    body: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SLam:
    param: str
    param_type: Type
    ret_type: Type
    body: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SLetRec:
    var: str
    fn: SLam
    body: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SAssert:
    arg: STerm
    pos: Pos = field(default_factory=_pos_field, compare=False)


STerm = Union[
    SLit, SUnit, SIdent, SDeref, SAssign, SOp, SNot, SNeg, SSeq, SPair,
    SProj, SApp, SIf, SLet, SLam, SLetRec, SAssert,
]


@dataclass(frozen=True)
class SAbstract:
    name: str
    typ: Type
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SMethod:
    name: str
    fn: SLam
    public: bool
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SRefInt:
    name: str
    init: int
    pos: Pos = field(default_factory=_pos_field, compare=False)


@dataclass(frozen=True)
class SRefFun:
    # init is either a lambda or the name of an already-declared method
    name: str
    init: Union[SLam, str]
    pos: Pos = field(default_factory=_pos_field, compare=False)


SDecl = Union[SAbstract, SMethod, SRefInt, SRefFun]


@dataclass(frozen=True)
class SourceLibrary:
    decls: tuple[SDecl, ...]
    main: Optional[STerm] = None

    @property
    def is_client(self) -> bool:
        return self.main is not None


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

KEYWORDS = {
    "import", "abstract", "public", "private", "int", "fun", "global",
    "main", "if", "then", "else", "let", "letrec", "in", "assert",
    "fst", "snd", "not", "unit",
}

# Keywords that begin a new top-level declaration; used to end brace-less
# method bodies at a terminating semicolon.
DECL_KEYWORDS = {"import", "abstract", "public", "private", "int", "fun", "global", "main"}

_SYMBOLS = [
    "->", ":=", "<=", ">=", "==", "!=", "&&", "||",
    "(", ")", "{", "}", ",", ";", ":", "=", "!", "+", "-", "*", "<", ">",
]


@dataclass(frozen=True)
class Token:
    kind: str  # 'int' | 'ident' | 'kw' | symbol text | 'eof'
    text: str
    line: int
    col: int


def lex(text: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def advance(k: int) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = text[i]
        if c in " \t\r\n":
            advance(1)
            continue
        if c == "#" or text.startswith("//", i):
            while i < n and text[i] != "\n":
                advance(1)
            continue
        if c.isdigit():
            l0, c0 = line, col
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("int", text[i:j], l0, c0))
            advance(j - i)
            continue
        if c.isalpha() or c == "_":
            l0, c0 = line, col
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            toks.append(Token("kw" if word in KEYWORDS else "ident", word, l0, c0))
            advance(j - i)
            continue
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                toks.append(Token(sym, sym, line, col))
                advance(len(sym))
                break
        else:
            raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, kind: str, text: Optional[str] = None, ahead: int = 0) -> bool:
        t = self.peek(ahead)
        return t.kind == kind and (text is None or t.text == text)

    def at_kw(self, word: str, ahead: int = 0) -> bool:
        return self.at("kw", word, ahead)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        t = self.peek()
        if t.kind == kind and (text is None or t.text == text):
            return self.next()
        want = text or kind
        raise ParseError(f"expected {want!r}, found {t.text or t.kind!r}", t.line, t.col, (want,))

    def fail(self, msg: str, expected: tuple[str, ...] = ()) -> ParseError:
        t = self.peek()
        return ParseError(f"{msg} (found {t.text or t.kind!r})", t.line, t.col, expected)

    # -- library structure ---------------------------------------------------

    def parse_library(self) -> SourceLibrary:
        decls: list[SDecl] = []
        main: Optional[STerm] = None
        while not self.at("eof"):
            if self.at_kw("main"):
                if main is not None:
                    raise self.fail("duplicate main")
                self.next()
                self.expect("=")
                main = self.parse_body()
                continue
            decls.append(self.parse_decl())
        seen: set[str] = set()
        for d in decls:
            if d.name in seen:
                raise ParseError(f"name {d.name} declared more than once", d.pos[0], d.pos[1])
            seen.add(d.name)
        return SourceLibrary(tuple(decls), main)

    def parse_decl(self) -> SDecl:
        t = self.peek()
        if self.at_kw("import") or self.at_kw("abstract"):
            self.next()
            name = self.expect("ident").text
            self.expect(":")
            typ = self.parse_type()
            self.skip_semi()
            return SAbstract(name, typ, (t.line, t.col))
        if self.at_kw("public") or self.at_kw("private"):
            public = self.next().text == "public"
            return self.parse_method(public, (t.line, t.col))
        if self.at_kw("int"):
            self.next()
            name = self.expect("ident").text
            self.expect(":=")
            value = self.parse_int_literal()
            self.skip_semi()
            return SRefInt(name, value, (t.line, t.col))
        if self.at_kw("fun") and self.peek(1).kind == "ident":
            self.next()
            name = self.expect("ident").text
            self.expect(":=")
            init = self.parse_fun_init()
            self.skip_semi()
            return SRefFun(name, init, (t.line, t.col))
        if self.at_kw("global"):
            # synonym from older listings; kind determined by the initializer
            self.next()
            name = self.expect("ident").text
            self.expect(":=")
            if self.at("int") or self.at("-"):
                value = self.parse_int_literal()
                self.skip_semi()
                return SRefInt(name, value, (t.line, t.col))
            init = self.parse_fun_init()
            self.skip_semi()
            return SRefFun(name, init, (t.line, t.col))
        if self.at("ident"):
            return self.parse_method(False, (t.line, t.col))
        raise self.fail("expected a declaration", tuple(sorted(DECL_KEYWORDS)))

    def parse_int_literal(self) -> int:
        if self.at("-"):
            self.next()
            return -int(self.expect("int").text)
        return int(self.expect("int").text)

    def parse_fun_init(self) -> Union[SLam, str]:
        if self.at_kw("fun"):
            return self.parse_lambda()
        return self.expect("ident").text

    def parse_method(self, public: bool, pos: Pos) -> SMethod:
        name = self.expect("ident").text
        if self.at("("):
            # sugar:  f (x:T) : (T') = body
            self.next()
            param = self.expect("ident").text
            self.expect(":")
            ptyp = self.parse_type()
            self.expect(")")
            self.expect(":")
            rtyp = self.parse_ret_type()
            self.expect("=")
            body = self.parse_body()
            fn = SLam(param, ptyp, rtyp, body, pos)
        else:
            self.expect("=")
            if not self.at_kw("fun"):
                raise self.fail("method definition must be a fun(...) literal", ("fun",))
            fn = self.parse_lambda()
            self.skip_semi()
        return SMethod(name, fn, public, pos)

    def parse_body(self) -> STerm:
        if self.at("{"):
            self.next()
            body = self.parse_term()
            self.expect("}")
            self.skip_semi()
            return body
        body = self.parse_term()
        self.skip_semi()
        return body

    def skip_semi(self) -> None:
        if self.at(";"):
            self.next()

    # -- types ---------------------------------------------------------------

    def parse_type(self) -> Type:
        left = self.parse_type_prod()
        if self.at("->"):
            self.next()
            return TArrow(left, self.parse_type())
        return left

    def parse_type_prod(self) -> Type:
        left = self.parse_type_atom()
        if self.at("*"):
            self.next()
            return TProd(left, self.parse_type_prod())
        return left

    def parse_ret_type(self) -> Type:
        # Return annotations are always parenthesized, `:(T) ->`, so the
        # annotation cannot swallow a following lambda arrow.
        self.expect("(")
        t = self.parse_type()
        self.expect(")")
        return t

    def parse_type_atom(self) -> Type:
        if self.at_kw("int"):
            self.next()
            return INT
        if self.at_kw("unit"):
            self.next()
            return UNIT
        if self.at("("):
            self.next()
            t = self.parse_type()
            self.expect(")")
            return t
        raise self.fail("expected a type", ("int", "unit", "("))

    # -- terms -----------------------------------------------------------------
    # Sequencing is lowest; `if`/`let`/`letrec`/`fun`/assignments extend
    # maximally to the right (so a then-branch swallows its whole sequence
    # up to `else`).  A `;` ends the sequence when the next token starts a
    # new declaration, closes a block, or ends the file.

    def parse_term(self) -> STerm:
        t = self.peek()
        first = self.parse_expr()
        if self.at(";"):
            if self._semi_terminates():
                return first
            self.next()
            rest = self.parse_term()
            return SSeq(first, rest, (t.line, t.col))
        return first

    def _semi_terminates(self) -> bool:
        nxt = self.peek(1)
        if nxt.kind in ("eof", "}", ")"):
            return True
        return nxt.kind == "kw" and nxt.text in DECL_KEYWORDS

    def parse_expr(self) -> STerm:
        t = self.peek()
        if self.at_kw("if"):
            self.next()
            cond = self.parse_term()
            self.expect("kw", "then")
            then = self.parse_term()
            self.expect("kw", "else")
            els = self.parse_term()
            return SIf(cond, then, els, (t.line, t.col))
        if self.at_kw("let"):
            self.next()
            var = self.expect("ident").text
            annot = None
            if self.at(":"):
                self.next()
                annot = self.parse_type()
            self.expect("=")
            rhs = self.parse_term()
            self.expect("kw", "in")
            body = self.parse_term()
            return SLet(var, annot, rhs, body, (t.line, t.col))
        if self.at_kw("letrec"):
            self.next()
            var = self.expect("ident").text
            self.expect("=")
            if not self.at_kw("fun"):
                raise self.fail("letrec binds a fun(...) literal", ("fun",))
            fn = self.parse_lambda()
            self.expect("kw", "in")
            body = self.parse_term()
            return SLetRec(var, fn, body, (t.line, t.col))
        if self.at_kw("fun"):
            return self.parse_lambda()
        if self.at("ident") and self.peek(1).kind == ":=":
            name = self.next().text
            self.next()
            rhs = self.parse_expr()
            return SAssign(name, rhs, (t.line, t.col))
        return self.parse_or()

    def parse_lambda(self) -> SLam:
        t = self.expect("kw", "fun")
        self.expect("(")
        param = self.expect("ident").text
        self.expect(":")
        ptyp = self.parse_type()
        self.expect(")")
        self.expect(":")
        rtyp = self.parse_ret_type()
        self.expect("->")
        body = self.parse_term()
        return SLam(param, ptyp, rtyp, body, (t.line, t.col))

    def parse_or(self) -> STerm:
        left = self.parse_and()
        while self.at("||"):
            t = self.next()
            left = SOp("||", left, self.parse_and(), (t.line, t.col))
        return left

    def parse_and(self) -> STerm:
        left = self.parse_cmp()
        while self.at("&&"):
            t = self.next()
            left = SOp("&&", left, self.parse_cmp(), (t.line, t.col))
        return left

    def parse_cmp(self) -> STerm:
        left = self.parse_add()
        for op in ("<=", ">=", "==", "!=", "<", ">"):
            if self.at(op):
                t = self.next()
                return SOp(op, left, self.parse_add(), (t.line, t.col))
        return left

    def parse_add(self) -> STerm:
        left = self.parse_mul()
        while self.at("+") or self.at("-"):
            t = self.next()
            left = SOp(t.text, left, self.parse_mul(), (t.line, t.col))
        return left

    def parse_mul(self) -> STerm:
        left = self.parse_unary()
        while self.at("*"):
            t = self.next()
            left = SOp("*", left, self.parse_unary(), (t.line, t.col))
        return left

    def parse_unary(self) -> STerm:
        t = self.peek()
        if self.at_kw("not"):
            self.next()
            return SNot(self.parse_unary(), (t.line, t.col))
        if self.at("-"):
            self.next()
            if self.at("int"):
                lit = self.next()
                return self.parse_trailers(SLit(-int(lit.text), (t.line, t.col)))
            return SNeg(self.parse_unary(), (t.line, t.col))
        if self.at_kw("fst") or self.at_kw("snd"):
            kw = self.next()
            return SProj(1 if kw.text == "fst" else 2, self.parse_unary(), (t.line, t.col))
        return self.parse_app()

    def parse_app(self) -> STerm:
        return self.parse_trailers(self.parse_atom())

    def parse_trailers(self, fn: STerm) -> STerm:
        while self.at("("):
            t = self.next()
            if self.at(")"):
                self.next()
                arg: STerm = SUnit((t.line, t.col))
            else:
                arg = self.parse_term()
                if self.at(","):
                    self.next()
                    snd = self.parse_term()
                    arg = SPair(arg, snd, (t.line, t.col))
                self.expect(")")
            fn = SApp(fn, arg, (t.line, t.col))
        return fn

    def parse_atom(self) -> STerm:
        t = self.peek()
        if self.at("int"):
            self.next()
            return SLit(int(t.text), (t.line, t.col))
        if self.at("!"):
            self.next()
            name = self.expect("ident").text
            return SDeref(name, (t.line, t.col))
        if self.at_kw("assert"):
            self.next()
            self.expect("(")
            arg = self.parse_term()
            self.expect(")")
            return SAssert(arg, (t.line, t.col))
        if self.at("ident"):
            self.next()
            return SIdent(t.text, (t.line, t.col))
        if self.at("("):
            self.next()
            if self.at(")"):
                self.next()
                return SUnit((t.line, t.col))
            inner = self.parse_term()
            if self.at(","):
                self.next()
                snd = self.parse_term()
                self.expect(")")
                return SPair(inner, snd, (t.line, t.col))
            self.expect(")")
            return inner
        raise self.fail("expected a term", ("int", "ident", "(", "!", "assert"))


def parse(text: str, kind: Optional[str] = None) -> SourceLibrary:
    """Parse source text as a library or client.

    kind='library' rejects a main body, kind='client' requires one, and
    None accepts either.
    """
    parser = _Parser(lex(text))
    lib = parser.parse_library()
    if kind == "library" and lib.main is not None:
        raise ParseError("a library must not define main", 1, 1)
    if kind == "client" and lib.main is None:
        raise ParseError("a client must define main", 1, 1)
    return lib


# ---------------------------------------------------------------------------
# Desugaring
# ---------------------------------------------------------------------------


def desugar(lib: SourceLibrary) -> SourceLibrary:
    """Expand sugar to core constructs.

    M;M' becomes let _ = M in M', `not M` becomes M == 0, and unary minus
    becomes 0 - M.  Idempotent.
    """
    decls = []
    for d in lib.decls:
        if isinstance(d, SMethod):
            decls.append(SMethod(d.name, _desugar_lam(d.fn), d.public, d.pos))
        elif isinstance(d, SRefFun) and isinstance(d.init, SLam):
            decls.append(SRefFun(d.name, _desugar_lam(d.init), d.pos))
        else:
            decls.append(d)
    main = _desugar(lib.main) if lib.main is not None else None
    return SourceLibrary(tuple(decls), main)


def _desugar_lam(fn: SLam) -> SLam:
    return SLam(fn.param, fn.param_type, fn.ret_type, _desugar(fn.body), fn.pos)


def _desugar(t: STerm) -> STerm:
    if isinstance(t, (SLit, SUnit, SIdent, SDeref)):
        return t
    if isinstance(t, SSeq):
        return SLet("_", None, _desugar(t.first), _desugar(t.second), t.pos)
    if isinstance(t, SNot):
        return SOp("==", _desugar(t.arg), SLit(0, t.pos), t.pos)
    if isinstance(t, SNeg):
        return SOp("-", SLit(0, t.pos), _desugar(t.arg), t.pos)
    if isinstance(t, SAssign):
        return SAssign(t.name, _desugar(t.rhs), t.pos)
    if isinstance(t, SOp):
        return SOp(t.op, _desugar(t.left), _desugar(t.right), t.pos)
    if isinstance(t, SPair):
        return SPair(_desugar(t.fst), _desugar(t.snd), t.pos)
    if isinstance(t, SProj):
        return SProj(t.index, _desugar(t.arg), t.pos)
    if isinstance(t, SApp):
        return SApp(_desugar(t.fn), _desugar(t.arg), t.pos)
    if isinstance(t, SIf):
        return SIf(_desugar(t.cond), _desugar(t.then), _desugar(t.els), t.pos)
    if isinstance(t, SLet):
        return SLet(t.var, t.annot, _desugar(t.rhs), _desugar(t.body), t.pos)
    if isinstance(t, SLam):
        return _desugar_lam(t)
    if isinstance(t, SLetRec):
        return SLetRec(t.var, _desugar_lam(t.fn), _desugar(t.body), t.pos)
    if isinstance(t, SAssert):
        return SAssert(_desugar(t.arg), t.pos)
    raise AssertionError(f"desugar: {t!r}")


# ---------------------------------------------------------------------------
# Pretty printer
# ---------------------------------------------------------------------------
# Prints a form that re-parses to the same AST.  Greedy constructs (if,
# let, letrec, fun, :=) are parenthesized except in tail position.

_CMP_OPS = ("<=", ">=", "==", "!=", "<", ">")
_PREC = {"||": 2, "&&": 3, "+": 5, "-": 5, "*": 6}
_PREC.update({op: 4 for op in _CMP_OPS})


def pretty_type(t: Type) -> str:
    return str(t)


def pretty_term(t: STerm, prec: int = 0, tail: bool = True) -> str:
    if isinstance(t, SLit):
        return str(t.value) if t.value >= 0 else f"({t.value})"
    if isinstance(t, SUnit):
        return "()"
    if isinstance(t, SIdent):
        return t.name
    if isinstance(t, SDeref):
        return f"!{t.name}"
    if isinstance(t, SSeq):
        s = f"{pretty_term(t.first, 1, tail=False)}; {pretty_term(t.second, 0, tail=tail)}"
        return s if prec <= 0 and tail else f"({s})"
    if isinstance(t, SAssign):
        s = f"{t.name} := {pretty_term(t.rhs, 1, tail=tail)}"
        return s if prec <= 1 and tail else f"({s})"
    if isinstance(t, SIf):
        s = (
            f"if {pretty_term(t.cond, 1, tail=False)} "
            f"then {pretty_term(t.then, 0, tail=False)} "
            f"else {pretty_term(t.els, 0, tail=tail)}"
        )
        return s if prec <= 1 and tail else f"({s})"
    if isinstance(t, SLet):
        annot = f" : {pretty_type(t.annot)}" if t.annot is not None else ""
        s = (
            f"let {t.var}{annot} = {pretty_term(t.rhs, 0, tail=False)} "
            f"in {pretty_term(t.body, 0, tail=tail)}"
        )
        return s if prec <= 1 and tail else f"({s})"
    if isinstance(t, SLetRec):
        s = (
            f"letrec {t.var} = {pretty_term(t.fn, 2, tail=False)} "
            f"in {pretty_term(t.body, 0, tail=tail)}"
        )
        return s if prec <= 1 and tail else f"({s})"
    if isinstance(t, SLam):
        s = (
            f"fun({t.param}:{pretty_type(t.param_type)}):({pretty_type(t.ret_type)}) "
            f"-> {pretty_term(t.body, 0, tail=tail)}"
        )
        return s if prec <= 1 and tail else f"({s})"
    if isinstance(t, SOp):
        p = _PREC[t.op]
        lp = p + 1 if t.op in _CMP_OPS else p  # comparisons do not chain
        left = pretty_term(t.left, lp, tail=False)
        right = pretty_term(t.right, p + 1, tail=False)
        s = f"{left} {t.op} {right}"
        return s if prec <= p else f"({s})"
    if isinstance(t, SNot):
        s = f"not {pretty_term(t.arg, 7, tail=False)}"
        return s if prec <= 7 else f"({s})"
    if isinstance(t, SNeg):
        s = f"- {pretty_term(t.arg, 7, tail=False)}"
        return s if prec <= 7 else f"({s})"
    if isinstance(t, SProj):
        word = "fst" if t.index == 1 else "snd"
        s = f"{word} {pretty_term(t.arg, 7, tail=False)}"
        return s if prec <= 7 else f"({s})"
    if isinstance(t, SApp):
        fn = pretty_term(t.fn, 8, tail=False)
        if isinstance(t.arg, SUnit):
            return f"{fn}()"
        if isinstance(t.arg, SPair):
            return (
                f"{fn}({pretty_term(t.arg.fst, 0, tail=False)}, "
                f"{pretty_term(t.arg.snd, 0, tail=False)})"
            )
        return f"{fn}({pretty_term(t.arg, 0, tail=False)})"
    if isinstance(t, SPair):
        return f"({pretty_term(t.fst, 0, tail=False)}, {pretty_term(t.snd, 0, tail=False)})"
    if isinstance(t, SAssert):
        return f"assert({pretty_term(t.arg, 0, tail=False)})"
    raise AssertionError(f"pretty_term: {t!r}")


def pretty_library(lib: SourceLibrary) -> str:
    lines: list[str] = []
    for d in lib.decls:
        if isinstance(d, SAbstract):
            lines.append(f"import {d.name} : {pretty_type(d.typ)}")
        elif isinstance(d, SMethod):
            kw = "public" if d.public else "private"
            fn = d.fn
            lines.append(
                f"{kw} {d.name} ({fn.param}:{pretty_type(fn.param_type)}) : "
                f"({pretty_type(fn.ret_type)}) = {{ {pretty_term(fn.body)} }};"
            )
        elif isinstance(d, SRefInt):
            lines.append(f"int {d.name} := {d.init};")
        elif isinstance(d, SRefFun):
            if isinstance(d.init, str):
                lines.append(f"fun {d.name} := {d.init};")
            else:
                lines.append(f"fun {d.name} := {pretty_term(d.init, 2, tail=False)};")
        else:
            raise AssertionError(f"pretty_library: {d!r}")
    if lib.main is not None:
        lines.append(f"main = {{ {pretty_term(lib.main)} }};")
    return "\n".join(lines) + "\n"
