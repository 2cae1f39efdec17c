"""Process-term abstract syntax and static classification.

Terms cover timed inaction, six flavours of send/receive action constants
(potential absolute/relative, actual), choice, sequencing, merge, left
merge, time-out, the state (initialize-and-actualize) operator, the
maximal-progress pair, recursion constants over guarded specifications,
and variables.

Static functions: earliest/latest time and channel of an action, atomic /
linear / head-shape classification, budgeted guardedness, the summand
relation modulo commutativity and associativity of choice, and the
canonical printer for the CLI grammar.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

from .meadow import (
    INF,
    ExtScalar,
    Point,
    fmt_scalar,
    ext_lt,
    is_inf,
    scalar,
)


class ActionKind(Enum):
    PSEND_ABS = "ps-abs"
    PSEND_REL = "ps-rel"
    PRECV_ABS = "pr-abs"
    PRECV_REL = "pr-rel"
    ASEND = "es"
    ARECV = "er"


_POTENTIAL = {
    ActionKind.PSEND_ABS,
    ActionKind.PSEND_REL,
    ActionKind.PRECV_ABS,
    ActionKind.PRECV_REL,
}
_ABSOLUTE = {
    ActionKind.PSEND_ABS,
    ActionKind.PRECV_ABS,
    ActionKind.ASEND,
    ActionKind.ARECV,
}
_RECEIVES = {ActionKind.PRECV_ABS, ActionKind.PRECV_REL, ActionKind.ARECV}
_PR = {ActionKind.PRECV_ABS, ActionKind.PRECV_REL}


@dataclass(frozen=True)
class Action:
    """One action constant.  t1 == t2 except for potential receives."""

    kind: ActionKind
    channel: str
    datum: str
    t1: Fraction
    t2: ExtScalar
    point: Point

    def __post_init__(self):
        if self.kind in _PR:
            if not ext_lt(self.t1, self.t2):
                raise ValueError(
                    f"receive window needs lower < upper, got "
                    f"{fmt_scalar(self.t1)}..{fmt_scalar(self.t2)}"
                )
        elif is_inf(self.t2) or self.t1 != self.t2:
            raise ValueError("single-time action with a window")

    @property
    def is_potential(self):
        return self.kind in _POTENTIAL

    @property
    def is_actual(self):
        return self.kind not in _POTENTIAL

    @property
    def is_absolute(self):
        return self.kind in _ABSOLUTE

    @property
    def is_relative(self):
        return self.kind not in _ABSOLUTE

    @property
    def is_receive(self):
        return self.kind in _RECEIVES

    @property
    def is_potential_receive(self):
        return self.kind in _PR

    def __repr__(self):
        return fmt_action(self)


def psend_abs(c, d, t, xi) -> Action:
    t = scalar(t)
    return Action(ActionKind.PSEND_ABS, c, d, t, t, xi)


def psend_rel(c, d, t, xi) -> Action:
    t = scalar(t)
    return Action(ActionKind.PSEND_REL, c, d, t, t, xi)


def precv_abs(c, d, lo, hi, xi) -> Action:
    return Action(ActionKind.PRECV_ABS, c, d, scalar(lo), _ext(hi), xi)


def precv_rel(c, d, lo, hi, xi) -> Action:
    return Action(ActionKind.PRECV_REL, c, d, scalar(lo), _ext(hi), xi)


def asend(c, d, t, xi) -> Action:
    t = scalar(t)
    return Action(ActionKind.ASEND, c, d, t, t, xi)


def arecv(c, d, t, xi) -> Action:
    t = scalar(t)
    return Action(ActionKind.ARECV, c, d, t, t, xi)


def _ext(x) -> ExtScalar:
    return x if is_inf(x) else scalar(x)


def lbt(a: Action) -> Fraction:
    """Earliest time of an action."""
    return a.t1


def ubt(a: Action) -> ExtScalar:
    """Latest time of an action; infinity only for potential receives."""
    return a.t2


def bt(a: Action) -> Fraction:
    """The single time of a non-potential-receive action."""
    if a.is_potential_receive:
        raise ValueError(f"bt is undefined for potential receives: {a!r}")
    return a.t1


def chan(a: Action) -> str:
    return a.channel


# ---------------------------------------------------------------------------
# Pattern sets of actual actions (the priority operators' H parameter).

@dataclass(frozen=True)
class PatternAtom:
    """Matches actual actions by direction, channel set, optional datum set."""

    which: str  # "recv" | "send" | "any"
    channels: frozenset
    data: Optional[frozenset] = None

    def __post_init__(self):
        if self.which not in ("recv", "send", "any"):
            raise ValueError(f"bad pattern direction {self.which!r}")

    def matches(self, a: Action) -> bool:
        if not a.is_actual:
            return False
        if self.which == "recv" and a.kind is not ActionKind.ARECV:
            return False
        if self.which == "send" and a.kind is not ActionKind.ASEND:
            return False
        if a.channel not in self.channels:
            return False
        return self.data is None or a.datum in self.data


@dataclass(frozen=True)
class ActionPattern:
    """A finite union of pattern atoms, denoting a subset of the actual actions."""

    atoms: frozenset

    def matches(self, a: Action) -> bool:
        return any(atom.matches(a) for atom in self.atoms)


def pattern(*atoms) -> ActionPattern:
    return ActionPattern(frozenset(atoms))


def recv_pattern(*channels, data=None) -> ActionPattern:
    d = None if data is None else frozenset(data)
    return pattern(PatternAtom("recv", frozenset(channels), d))


# ---------------------------------------------------------------------------
# Terms.

class Term:
    """Base class for all process-term nodes."""

    __slots__ = ()


@dataclass(frozen=True, repr=False)
class Dead(Term):
    """Immediate inaction."""

    def __repr__(self):
        return "dd"


@dataclass(frozen=True, repr=False)
class ADead(Term):
    time: ExtScalar

    def __repr__(self):
        return f"dd(abs {fmt_scalar(self.time)})"


@dataclass(frozen=True, repr=False)
class RDead(Term):
    time: ExtScalar

    def __repr__(self):
        return f"dd(rel {fmt_scalar(self.time)})"


@dataclass(frozen=True, repr=False)
class Act(Term):
    action: Action

    def __repr__(self):
        return fmt_action(self.action)


@dataclass(frozen=True, repr=False)
class Alt(Term):
    left: Term
    right: Term

    def __repr__(self):
        return pretty(self)


@dataclass(frozen=True, repr=False)
class Seq(Term):
    left: Term
    right: Term

    def __repr__(self):
        return pretty(self)


@dataclass(frozen=True, repr=False)
class Par(Term):
    left: Term
    right: Term

    def __repr__(self):
        return pretty(self)


@dataclass(frozen=True, repr=False)
class LeftMerge(Term):
    left: Term
    right: Term

    def __repr__(self):
        return pretty(self)


@dataclass(frozen=True, repr=False)
class Timeout(Term):
    left: Term
    right: Term

    def __repr__(self):
        return pretty(self)


@dataclass(frozen=True, repr=False)
class StateOp(Term):
    """Initialization-and-actualization from time `time` and state `state`."""

    channels: frozenset
    time: Fraction
    state: frozenset  # of comm.SendRecord
    body: Term

    def __repr__(self):
        return pretty(self)


@dataclass(frozen=True, repr=False)
class MaxProg(Term):
    pattern: ActionPattern
    body: Term

    def __repr__(self):
        return pretty(self)


@dataclass(frozen=True, repr=False)
class AuxMaxProg(Term):
    pattern: ActionPattern
    left: Term
    right: Term

    def __repr__(self):
        return pretty(self)


@dataclass(frozen=True, repr=False)
class Var(Term):
    name: str

    def __repr__(self):
        return self.name


@dataclass(frozen=True, repr=False)
class RecSpec:
    """A recursive specification: named equations with bound variables only."""

    equations: tuple  # of (name, Term) pairs

    def __post_init__(self):
        names = [n for n, _ in self.equations]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable in recursive specification")
        bound = frozenset(names)
        for n, body in self.equations:
            loose = free_vars(body) - bound
            if loose:
                raise ValueError(f"unbound variables {sorted(loose)} in equation for {n}")

    def names(self):
        return tuple(n for n, _ in self.equations)

    def body(self, name: str) -> Term:
        for n, b in self.equations:
            if n == name:
                return b
        raise KeyError(name)

    def __repr__(self):
        eqs = " ".join(f"{n} = {pretty(b)};" for n, b in self.equations)
        return "{" + eqs + "}"


@dataclass(frozen=True, repr=False)
class RecConst(Term):
    var: str
    spec: RecSpec

    def __post_init__(self):
        if self.var not in self.spec.names():
            raise ValueError(f"{self.var} is not defined by the specification")

    def __repr__(self):
        return pretty(self)


def rec_spec(**equations) -> RecSpec:
    return RecSpec(tuple(equations.items()))


def alt(*terms: Term) -> Term:
    """Right-nested alternative of one or more terms."""
    if not terms:
        raise ValueError("empty alternative")
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = Alt(t, out)
    return out


def seq(*terms: Term) -> Term:
    if not terms:
        raise ValueError("empty sequence")
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = Seq(t, out)
    return out


def children(t: Term) -> tuple:
    if isinstance(t, (Alt, Seq, Par, LeftMerge, Timeout)):
        return (t.left, t.right)
    if isinstance(t, (StateOp, MaxProg)):
        return (t.body,)
    if isinstance(t, AuxMaxProg):
        return (t.left, t.right)
    return ()


def rebuild(t: Term, kids: tuple) -> Term:
    cls = type(t)
    if isinstance(t, (Alt, Seq, Par, LeftMerge, Timeout)):
        return cls(*kids)
    if isinstance(t, StateOp):
        return StateOp(t.channels, t.time, t.state, kids[0])
    if isinstance(t, MaxProg):
        return MaxProg(t.pattern, kids[0])
    if isinstance(t, AuxMaxProg):
        return AuxMaxProg(t.pattern, *kids)
    return t


def free_vars(t: Term) -> frozenset:
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, RecConst):
        # the spec binds its own variables; a well-formed spec is closed
        return frozenset()
    out = frozenset()
    for k in children(t):
        out |= free_vars(k)
    return out


def is_closed(t: Term) -> bool:
    return not free_vars(t)


def channels_of(t: Term) -> frozenset:
    """All channels occurring in actions, patterns excluded."""
    if isinstance(t, Act):
        return frozenset((t.action.channel,))
    if isinstance(t, RecConst):
        out = frozenset()
        for _, body in t.spec.equations:
            out |= channels_of(body)
        return out
    out = frozenset()
    for k in children(t):
        out |= channels_of(k)
    return out


def subst(t: Term, env: dict) -> Term:
    """Replace free variables by terms (capture-safe: RecConst is closed)."""
    if isinstance(t, Var):
        return env.get(t.name, t)
    if isinstance(t, RecConst):
        return t
    kids = children(t)
    if not kids:
        return t
    return rebuild(t, tuple(subst(k, env) for k in kids))


def unfold(r: RecConst) -> Term:
    """One application of the recursive-definition principle."""
    env = {n: RecConst(n, r.spec) for n in r.spec.names()}
    return subst(r.spec.body(r.var), env)


# ---------------------------------------------------------------------------
# Classification.

def is_atomic(t: Term) -> bool:
    """Atomic process terms: actions, finitely timed inaction, guarded time-outs."""
    if isinstance(t, Act):
        return True
    if isinstance(t, (ADead, RDead)):
        return not is_inf(t.time)
    if isinstance(t, Timeout):
        return is_atomic(t.left)
    return False


def is_linear(t: Term) -> bool:
    """Linear terms: inaction, actual actions, actual-action prefixes of variables, sums."""
    if isinstance(t, ADead):
        return True  # infinity admitted: waiting-forever states arise from empty receptions
    if isinstance(t, Act):
        return t.action.is_actual
    if isinstance(t, Seq):
        return (
            isinstance(t.left, Act)
            and t.left.action.is_actual
            and isinstance(t.right, Var)
        )
    if isinstance(t, Alt):
        return is_linear(t.left) and is_linear(t.right)
    return False


def is_linear_spec(e: RecSpec) -> bool:
    return all(is_linear(body) for _, body in e.equations)


class GuardedVerdict(Enum):
    GUARDED = "guarded"
    NOT_SHOWN_GUARDED = "not_shown_guarded"


def unguarded_vars(t: Term) -> frozenset:
    """Variables with at least one occurrence not under an action prefix."""
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, Seq):
        if isinstance(t.left, Act):
            return frozenset()
        return unguarded_vars(t.left) | unguarded_vars(t.right)
    if isinstance(t, RecConst):
        return frozenset()
    out = frozenset()
    for k in children(t):
        out |= unguarded_vars(k)
    return out


def _guard_normalize(t: Term) -> Term:
    """Right-associate sequences and distribute them over alternatives."""
    kids = children(t)
    if kids:
        t = rebuild(t, tuple(_guard_normalize(k) for k in kids))
    if isinstance(t, Seq):
        if isinstance(t.left, Seq):
            return _guard_normalize(Seq(t.left.left, Seq(t.left.right, t.right)))
        if isinstance(t.left, Alt):
            return _guard_normalize(
                Alt(Seq(t.left.left, t.right), Seq(t.left.right, t.right))
            )
    return t


def _subst_unguarded(t: Term, env: dict) -> Term:
    if isinstance(t, Var):
        return env.get(t.name, t)
    if isinstance(t, Seq) and isinstance(t.left, Act):
        return t
    if isinstance(t, RecConst):
        return t
    kids = children(t)
    if not kids:
        return t
    return rebuild(t, tuple(_subst_unguarded(k, env) for k in kids))


def is_guarded_spec(e: RecSpec, unfold_budget: int = 4) -> GuardedVerdict:
    """Budgeted syntactic guardedness; conservative on failure."""
    bodies = {n: _guard_normalize(b) for n, b in e.equations}
    for _ in range(unfold_budget + 1):
        bad = {n: unguarded_vars(b) for n, b in bodies.items()}
        if not any(bad.values()):
            return GuardedVerdict.GUARDED
        if any(n in bad[n] for n in bodies):
            return GuardedVerdict.NOT_SHOWN_GUARDED
        bodies = {
            n: _guard_normalize(_subst_unguarded(b, bodies)) for n, b in bodies.items()
        }
    return GuardedVerdict.NOT_SHOWN_GUARDED


def alt_summands(t: Term) -> list:
    """Flatten the alternative spine."""
    out, todo = [], [t]
    while todo:
        cur = todo.pop()
        if isinstance(cur, Alt):
            todo.append(cur.right)
            todo.append(cur.left)
        else:
            out.append(cur)
    out.reverse()
    return out


def is_summand(p: Term, q: Term) -> bool:
    """p occurs as one alternative of q, or p equals q modulo AC of choice."""
    from collections import Counter

    qs = alt_summands(q)
    if not isinstance(p, Alt):
        return p in qs
    return Counter(alt_summands(p)) == Counter(qs)


# ---------------------------------------------------------------------------
# Printing (the grammar itself is owned by the CLI front end).

def fmt_point(p: Point) -> str:
    return f"({fmt_scalar(p.u)},{fmt_scalar(p.v)},{fmt_scalar(p.w)})"


def fmt_action(a: Action) -> str:
    pt = fmt_point(a.point)
    k = a.kind
    if k is ActionKind.ASEND:
        return f"es({a.channel},{a.datum}; {fmt_scalar(a.t1)}; {pt})"
    if k is ActionKind.ARECV:
        return f"er({a.channel},{a.datum}; {fmt_scalar(a.t1)}; {pt})"
    mode = "abs" if a.is_absolute else "rel"
    if a.is_potential_receive:
        window = f"{fmt_scalar(a.t1)}..{fmt_scalar(a.t2)}"
        return f"pr({a.channel},{a.datum}; {mode} {window}; {pt})"
    return f"ps({a.channel},{a.datum}; {mode} {fmt_scalar(a.t1)}; {pt})"


def fmt_pattern(p: ActionPattern) -> str:
    parts = []
    for atom in sorted(p.atoms, key=lambda a: (a.which, sorted(a.channels), sorted(a.data or ()))):
        chans = ",".join(sorted(atom.channels))
        s = f"{atom.which}({chans})"
        if atom.data is not None:
            s += ":" + ",".join(sorted(atom.data))
        parts.append(s)
    return "|".join(parts)


def fmt_state(sigma: frozenset) -> str:
    recs = sorted(sigma, key=lambda r: (r.time, r.channel, r.datum, r.point))
    inner = ", ".join(
        f"({r.channel},{r.datum},{fmt_scalar(r.time)},{fmt_point(r.point)})" for r in recs
    )
    return "{" + inner + "}"


_PREC_ALT, _PREC_PAR, _PREC_LM, _PREC_SEQ, _PREC_ATOM = 0, 1, 2, 3, 4


def _prec(t: Term) -> int:
    if isinstance(t, Alt):
        return _PREC_ALT
    if isinstance(t, Par):
        return _PREC_PAR
    if isinstance(t, (LeftMerge, Timeout)):
        return _PREC_LM
    if isinstance(t, Seq):
        return _PREC_SEQ
    return _PREC_ATOM


def pretty(t: Term) -> str:
    """Render a term in the CLI grammar; parses back to the same tree."""

    def go(u: Term, level: int) -> str:
        p = _prec(u)
        if isinstance(u, Alt):
            s = f"{go(u.left, _PREC_ALT)} + {go(u.right, _PREC_ALT)}"
        elif isinstance(u, Par):
            s = f"{go(u.left, _PREC_PAR)} || {go(u.right, _PREC_PAR + 1)}"
        elif isinstance(u, LeftMerge):
            s = f"{go(u.left, _PREC_LM)} |_ {go(u.right, _PREC_LM + 1)}"
        elif isinstance(u, Timeout):
            s = f"{go(u.left, _PREC_LM)} >> {go(u.right, _PREC_LM + 1)}"
        elif isinstance(u, Seq):
            s = f"{go(u.left, _PREC_SEQ + 1)} . {go(u.right, _PREC_SEQ)}"
        elif isinstance(u, Dead):
            s = "dd"
        elif isinstance(u, ADead):
            s = f"dd(abs {fmt_scalar(u.time)})"
        elif isinstance(u, RDead):
            s = f"dd(rel {fmt_scalar(u.time)})"
        elif isinstance(u, Act):
            s = fmt_action(u.action)
        elif isinstance(u, StateOp):
            chans = ",".join(sorted(u.channels))
            s = (
                f"L{{{chans}}}@{fmt_scalar(u.time)}:{fmt_state(u.state)}"
                f"({go(u.body, _PREC_ALT)})"
            )
        elif isinstance(u, MaxProg):
            s = f"mp[{fmt_pattern(u.pattern)}]({go(u.body, _PREC_ALT)})"
        elif isinstance(u, AuxMaxProg):
            s = (
                f"mpx[{fmt_pattern(u.pattern)}]"
                f"({go(u.left, _PREC_ALT)})({go(u.right, _PREC_ALT)})"
            )
        elif isinstance(u, Var):
            s = u.name
        elif isinstance(u, RecConst):
            eqs = " ".join(f"{n} = {go(b, _PREC_ALT)};" for n, b in u.spec.equations)
            s = f"rec {u.var} {{ {eqs} }}"
        else:
            raise TypeError(f"unknown term {u!r}")
        if p < level and p < _PREC_ATOM:
            return f"({s})"
        return s

    return go(t, _PREC_ALT)


# ---------------------------------------------------------------------------
# A total structural order on terms (canonical sums, deterministic output).

_NODE_RANK = {
    Dead: 0,
    ADead: 1,
    RDead: 2,
    Act: 3,
    Seq: 4,
    Alt: 5,
    Par: 6,
    LeftMerge: 7,
    Timeout: 8,
    StateOp: 9,
    MaxProg: 10,
    AuxMaxProg: 11,
    RecConst: 12,
    Var: 13,
}


def _ext_key(x: ExtScalar):
    if is_inf(x):
        return (1, 0, 0)
    return (0, x.numerator, x.denominator)


def _action_key(a: Action):
    return (
        a.kind.value,
        a.channel,
        a.datum,
        _ext_key(a.t1),
        _ext_key(a.t2),
        tuple(_ext_key(c) for c in a.point),
    )


def term_key(t: Term):
    """Total order key; equal keys iff structurally equal terms."""
    rank = _NODE_RANK[type(t)]
    if isinstance(t, (ADead, RDead)):
        return (rank, _ext_key(t.time))
    if isinstance(t, Act):
        return (rank, _action_key(t.action))
    if isinstance(t, StateOp):
        return (
            rank,
            tuple(sorted(t.channels)),
            _ext_key(t.time),
            tuple(sorted((r.channel, r.datum, _ext_key(r.time), tuple(map(_ext_key, r.point))) for r in t.state)),
            term_key(t.body),
        )
    if isinstance(t, (MaxProg, AuxMaxProg)):
        pat = fmt_pattern(t.pattern)
        if isinstance(t, MaxProg):
            return (rank, pat, term_key(t.body))
        return (rank, pat, term_key(t.left), term_key(t.right))
    if isinstance(t, Var):
        return (rank, t.name)
    if isinstance(t, RecConst):
        return (
            rank,
            t.var,
            tuple((n, term_key(b)) for n, b in t.spec.equations),
        )
    kids = children(t)
    if kids:
        return (rank,) + tuple(term_key(k) for k in kids)
    return (rank,)
