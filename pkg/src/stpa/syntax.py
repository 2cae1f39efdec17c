"""Parser for the term grammar used by the CLI.

Precedence, loosest to tightest: `+`, `||`, `|_`/`>>` (left associative),
`.`.  Alternatives and sequences parse right-nested; the printer in
`terms.pretty` emits exactly this shape, so parse(pretty(t)) == t for
terms built with the package constructors.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .comm import send_record
from .meadow import INF, point, scalar
from .terms import (
    ADead,
    Act,
    ActionPattern,
    Alt,
    AuxMaxProg,
    Dead,
    LeftMerge,
    MaxProg,
    Par,
    PatternAtom,
    RDead,
    RecConst,
    RecSpec,
    Seq,
    StateOp,
    Term,
    Timeout,
    Var,
    arecv,
    asend,
    precv_abs,
    precv_rel,
    psend_abs,
    psend_rel,
)


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>-?\d+(?:/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_#]*)
  | (?P<op>\|\||\|_|>>|\.\.|[+.(){}@:;,=\[\]|])
    """,
    re.VERBOSE,
)

_KEYWORDS = {
    "dd", "ps", "pr", "es", "er", "abs", "rel", "inf",
    "rec", "mp", "mpx", "recv", "send", "any",
}


def _tokenize(text: str):
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    # -- token helpers -----------------------------------------------------
    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at(self, value: str) -> bool:
        return self.peek()[1] == value and self.peek()[0] != "eof"

    def expect(self, value: str):
        kind, got, pos = self.peek()
        if kind == "eof" or got != value:
            raise ParseError(f"expected {value!r}, got {got or 'end of input'!r}", pos)
        return self.next()

    def ident(self) -> str:
        kind, got, pos = self.peek()
        if kind != "ident":
            raise ParseError(f"expected identifier, got {got or 'end of input'!r}", pos)
        return self.next()[1]

    def fail(self, message: str):
        raise ParseError(message, self.peek()[2])

    # -- scalars, points, states -------------------------------------------
    def scalar(self) -> Fraction:
        kind, got, pos = self.peek()
        if kind != "number":
            raise ParseError(f"expected a scalar, got {got or 'end of input'!r}", pos)
        return scalar(self.next()[1])

    def ext_scalar(self):
        if self.at("inf"):
            self.next()
            return INF
        return self.scalar()

    def point(self):
        self.expect("(")
        u = self.scalar()
        self.expect(",")
        v = self.scalar()
        self.expect(",")
        w = self.scalar()
        self.expect(")")
        return point(u, v, w)

    def sigma(self):
        self.expect("{")
        records = set()
        while not self.at("}"):
            self.expect("(")
            c = self.ident()
            self.expect(",")
            d = self.ident()
            self.expect(",")
            t = self.scalar()
            self.expect(",")
            xi = self.point()
            self.expect(")")
            records.add(send_record(c, d, t, xi))
            if self.at(","):
                self.next()
        self.expect("}")
        return frozenset(records)

    def channel_set(self):
        chans = {self.ident()}
        while self.at(","):
            self.next()
            chans.add(self.ident())
        return frozenset(chans)

    def pattern(self) -> ActionPattern:
        atoms = [self.pattern_atom()]
        while self.at("|"):
            self.next()
            atoms.append(self.pattern_atom())
        return ActionPattern(frozenset(atoms))

    def pattern_atom(self) -> PatternAtom:
        kind, got, pos = self.peek()
        if got not in ("recv", "send", "any"):
            raise ParseError(f"expected recv/send/any, got {got!r}", pos)
        which = self.next()[1]
        self.expect("(")
        chans = self.channel_set()
        self.expect(")")
        data = None
        if self.at(":"):
            self.next()
            data = {self.ident()}
            while self.at(","):
                self.next()
                data.add(self.ident())
        return PatternAtom(which, chans, None if data is None else frozenset(data))

    # -- terms ---------------------------------------------------------------
    def term(self) -> Term:
        return self.alt()

    def alt(self) -> Term:
        parts = [self.par()]
        while self.at("+"):
            self.next()
            parts.append(self.par())
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = Alt(p, out)
        return out

    def par(self) -> Term:
        out = self.lmerge()
        while self.at("||"):
            self.next()
            out = Par(out, self.lmerge())
        return out

    def lmerge(self) -> Term:
        out = self.sequence()
        while self.at("|_") or self.at(">>"):
            op = self.next()[1]
            rhs = self.sequence()
            out = LeftMerge(out, rhs) if op == "|_" else Timeout(out, rhs)
        return out

    def sequence(self) -> Term:
        parts = [self.atom()]
        while self.at("."):
            self.next()
            parts.append(self.atom())
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = Seq(p, out)
        return out

    def atom(self) -> Term:
        kind, got, pos = self.peek()
        if got == "(":
            self.next()
            t = self.term()
            self.expect(")")
            return t
        if got == "dd":
            return self.inaction()
        if got in ("ps", "pr", "es", "er"):
            return self.action()
        if got == "L" and self.tokens[self.i + 1][1] == "{":
            return self.state_op()
        if got == "mp":
            self.next()
            self.expect("[")
            pat = self.pattern()
            self.expect("]")
            self.expect("(")
            body = self.term()
            self.expect(")")
            return MaxProg(pat, body)
        if got == "mpx":
            self.next()
            self.expect("[")
            pat = self.pattern()
            self.expect("]")
            self.expect("(")
            left = self.term()
            self.expect(")")
            self.expect("(")
            right = self.term()
            self.expect(")")
            return AuxMaxProg(pat, left, right)
        if got == "rec":
            return self.rec_term()
        if kind == "ident" and got not in _KEYWORDS:
            self.next()
            return Var(got)
        raise ParseError(f"expected a term, got {got or 'end of input'!r}", pos)

    def inaction(self) -> Term:
        self.expect("dd")
        if not self.at("("):
            return Dead()
        self.next()
        mode, got, pos = self.peek()
        if got not in ("abs", "rel"):
            raise ParseError(f"expected abs or rel, got {got!r}", pos)
        self.next()
        t = self.ext_scalar()
        self.expect(")")
        return ADead(t) if got == "abs" else RDead(t)

    def action(self) -> Term:
        head = self.next()[1]
        pos0 = self.peek()[2]
        self.expect("(")
        c = self.ident()
        self.expect(",")
        d = self.ident()
        self.expect(";")
        try:
            if head in ("ps", "pr"):
                _, mode, mpos = self.peek()
                if mode not in ("abs", "rel"):
                    raise ParseError(f"expected abs or rel, got {mode!r}", mpos)
                self.next()
                lo = self.scalar()
                if head == "pr":
                    self.expect("..")
                    hi = self.ext_scalar()
                    self.expect(";")
                    xi = self.point()
                    self.expect(")")
                    mk = precv_abs if mode == "abs" else precv_rel
                    return Act(mk(c, d, lo, hi, xi))
                self.expect(";")
                xi = self.point()
                self.expect(")")
                mk = psend_abs if mode == "abs" else psend_rel
                return Act(mk(c, d, lo, xi))
            t = self.scalar()
            self.expect(";")
            xi = self.point()
            self.expect(")")
            mk = asend if head == "es" else arecv
            return Act(mk(c, d, t, xi))
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), pos0) from exc

    def state_op(self) -> Term:
        self.expect("L")
        self.expect("{")
        chans = self.channel_set()
        self.expect("}")
        self.expect("@")
        t = self.scalar()
        self.expect(":")
        sig = self.sigma()
        self.expect("(")
        body = self.term()
        self.expect(")")
        return StateOp(chans, t, sig, body)

    def rec_term(self) -> Term:
        self.expect("rec")
        root = self.ident()
        self.expect("{")
        equations = []
        while not self.at("}"):
            name = self.ident()
            self.expect("=")
            body = self.term()
            self.expect(";")
            equations.append((name, body))
        self.expect("}")
        pos = self.peek()[2]
        try:
            return RecConst(root, RecSpec(tuple(equations)))
        except ValueError as exc:
            raise ParseError(str(exc), pos) from exc


def parse_term(text: str) -> Term:
    p = _Parser(text)
    t = p.term()
    kind, got, pos = p.peek()
    if kind != "eof":
        raise ParseError(f"trailing input {got!r}", pos)
    return t


def parse_sigma(text: str) -> frozenset:
    p = _Parser(text)
    s = p.sigma()
    kind, got, pos = p.peek()
    if kind != "eof":
        raise ParseError(f"trailing input {got!r}", pos)
    return s


def parse_scalar(text: str) -> Fraction:
    p = _Parser(text)
    s = p.scalar()
    if p.peek()[0] != "eof":
        raise ParseError("trailing input", p.peek()[2])
    return s


def parse_pattern(text: str) -> ActionPattern:
    p = _Parser(text)
    pat = p.pattern()
    if p.peek()[0] != "eof":
        raise ParseError("trailing input", p.peek()[2])
    return pat
