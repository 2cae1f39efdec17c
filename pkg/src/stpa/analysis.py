"""Linearization and bisimulation checking.

`linearize` runs the worklist reduction: the root equation is the head
normal form of the state-operator term; every action-prefixed tail (again
a state-operator term) becomes a fresh variable, memoized by canonical
form so revisited configurations close loops.  A depth bound truncates
honestly: frontier variables are marked and bound to inaction at their
own time.

`bisim_linear` decides bisimilarity of linear specifications by partition
refinement over their disjoint state spaces plus an absorbing termination
state.  `bisim_definitional` plays the bounded three-clause game directly
on the transition rules at a finite sample of ambient instants and serves
as the independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .axioms import Normalizer, alt_canonical, cleanup_sum
from .comm import DEFAULT_SPEED, SpeedConfig, priority_lt
from .meadow import ExtScalar, ext_le, fmt_scalar, is_inf
from .semantics import (
    DEFAULT_UNFOLD_BUDGET,
    Stepper,
    Terminated,
    advance,
)
from .terms import (
    ADead,
    Act,
    Action,
    ActionPattern,
    Alt,
    MaxProg,
    RecConst,
    RecSpec,
    Seq,
    StateOp,
    Term,
    Var,
    alt,
    alt_summands,
    bt,
    fmt_action,
    is_linear,
    pretty,
    term_key,
)


class DepthExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearSpec:
    """A linear recursive specification with a distinguished root."""

    equations: tuple  # of (name, Term)
    root: str
    truncated: frozenset = frozenset()

    def __post_init__(self):
        names = {n for n, _ in self.equations}
        if self.root not in names:
            raise ValueError(f"root {self.root} undefined")
        for n, body in self.equations:
            if not is_linear(body):
                raise ValueError(f"body of {n} is not linear: {pretty(body)}")

    def body(self, name: str) -> Term:
        for n, b in self.equations:
            if n == name:
                return b
        raise KeyError(name)

    def names(self):
        return tuple(n for n, _ in self.equations)

    def is_complete(self) -> bool:
        return not self.truncated

    def to_rec_spec(self) -> RecSpec:
        return RecSpec(self.equations)

    def to_term(self) -> Term:
        return RecConst(self.root, self.to_rec_spec())

    def __repr__(self):
        eqs = " ".join(f"{n} = {pretty(b)};" for n, b in self.equations)
        return f"rec {self.root} {{ {eqs} }}"


@dataclass(frozen=True)
class StateSignature:
    """Refinement key of one linear state: moves, terminating moves, deadline."""

    steps: frozenset  # of (Action, var-name)
    terms: frozenset  # of Action
    deadline: Optional[ExtScalar]


def signature_of(body: Term) -> StateSignature:
    steps, terms, deadline = set(), set(), None
    for s in alt_summands(body):
        if isinstance(s, ADead):
            u = s.time
        elif isinstance(s, Act):
            terms.add(s.action)
            u = bt(s.action)
        elif isinstance(s, Seq):
            steps.add((s.left.action, s.right.name))
            u = bt(s.left.action)
        else:
            raise ValueError(f"not a linear summand: {pretty(s)}")
        if deadline is None or ext_le(deadline, u):
            deadline = u
    return StateSignature(frozenset(steps), frozenset(terms), deadline)


# ---------------------------------------------------------------------------
# Linearization.

def linearize(
    channels,
    time: Fraction,
    sigma,
    p: Term,
    depth: int = 64,
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
) -> LinearSpec:
    """Reduce a state-operator application to a linear specification."""
    norm = Normalizer(cfg, unfold_budget)
    channels = frozenset(channels)

    seen: dict = {}
    equations: list = []
    truncated: set = set()
    counter = 0

    def fresh() -> str:
        nonlocal counter
        name = f"X{counter}"
        counter += 1
        return name

    def var_for(state_term: StateOp, level: int, work: list) -> str:
        key = term_key(alt_canonical(state_term))
        hit = seen.get(key)
        if hit is not None:
            return hit
        name = fresh()
        seen[key] = name
        work.append((name, state_term, level))
        return name

    root_term = StateOp(channels, time, sigma, p)
    work: list = []
    root = var_for(root_term, 0, work)
    while work:
        name, state_term, level = work.pop(0)
        if level >= depth:
            truncated.add(name)
            equations.append((name, ADead(state_term.time)))
            continue
        body = norm.hnf_state(
            state_term.channels, state_term.time, state_term.state, state_term.body
        )
        pieces = []
        for s in alt_summands(body):
            if isinstance(s, Seq):
                tail = s.right
                if not isinstance(tail, StateOp):
                    raise ValueError(
                        f"head normal form tail is not state-wrapped: {pretty(s)}"
                    )
                pieces.append(Seq(s.left, Var(var_for(tail, level + 1, work))))
            else:
                pieces.append(s)
        equations.append((name, cleanup_sum(alt(*pieces))))
    return LinearSpec(tuple(equations), root, frozenset(truncated))


def maxpr_spec(pattern: ActionPattern, spec: LinearSpec) -> LinearSpec:
    """Apply the priority operators across a linear specification.

    Each variable maps to a filtered twin: summands blocked by a
    higher-priority alternative collapse to inaction at the blocker's
    time, tails are renamed to the twins.
    """
    rename = {n: f"{n}p" for n in spec.names()}
    equations = []
    for name, body in spec.equations:
        summands = alt_summands(body)
        heads = []
        for s in summands:
            if isinstance(s, ADead):
                heads.append(s)
            elif isinstance(s, Act):
                heads.append(s)
            else:
                heads.append(s.left)
        pieces = []
        for s, h in zip(summands, heads):
            verdict = h
            for blocker in heads:
                if priority_lt(pattern, verdict, blocker):
                    verdict = ADead(bt(blocker.action))
            if verdict is h:
                if isinstance(s, Seq):
                    pieces.append(Seq(s.left, Var(rename[s.right.name])))
                else:
                    pieces.append(s)
            else:
                pieces.append(verdict)
        equations.append((rename[name], cleanup_sum(alt(*pieces))))
    return LinearSpec(tuple(equations), rename[spec.root], frozenset(rename[n] for n in spec.truncated))


# ---------------------------------------------------------------------------
# Partition-refinement bisimulation on linear specifications.

@dataclass(frozen=True)
class BisimVerdict:
    bisimilar: bool
    witness: Optional[tuple] = None
    up_to_depth: Optional[int] = None

    def __bool__(self):
        return self.bisimilar


_TERM_STATE = ("#term", "")


def bisim_linear(e1: LinearSpec, e2: LinearSpec) -> BisimVerdict:
    """Partition refinement over the disjoint union of both variable sets."""
    states = [("1", n) for n in e1.names()] + [("2", n) for n in e2.names()] + [_TERM_STATE]

    def sig(st):
        if st == _TERM_STATE:
            return None
        side, name = st
        spec = e1 if side == "1" else e2
        return signature_of(spec.body(name))

    sigs = {st: sig(st) for st in states}

    def initial_key(st):
        if st == _TERM_STATE:
            return ("term",)
        s = sigs[st]
        dl = None if s.deadline is None else ("inf" if is_inf(s.deadline) else s.deadline)
        return ("state", frozenset(s.terms), dl)

    block_of = {}
    keys = {}
    for st in states:
        k = initial_key(st)
        keys.setdefault(k, len(keys))
        block_of[st] = keys[k]

    def succ_key(st, blocks):
        if st == _TERM_STATE:
            return ("term",)
        s = sigs[st]
        side = st[0]
        moves = frozenset(
            (a, blocks[(side, v)]) for a, v in s.steps
        ) | frozenset((a, blocks[_TERM_STATE]) for a in s.terms)
        return (blocks[st], moves)

    while True:
        fresh_keys = {}
        new_blocks = {}
        for st in states:
            k = succ_key(st, block_of)
            fresh_keys.setdefault(k, len(fresh_keys))
            new_blocks[st] = fresh_keys[k]
        if new_blocks == block_of or len(set(new_blocks.values())) == len(
            set(block_of.values())
        ):
            block_of = new_blocks
            break
        block_of = new_blocks

    if block_of[("1", e1.root)] == block_of[("2", e2.root)]:
        return BisimVerdict(True)
    witness = _distinguish(e1, e2, e1.root, e2.root, block_of, set())
    return BisimVerdict(False, tuple(witness or ("<root>",)))


def _distinguish(e1, e2, n1, n2, blocks, seen):
    """A shortest-ish label path separating two non-equivalent states."""
    if (n1, n2) in seen:
        return None
    seen.add((n1, n2))
    s1, s2 = signature_of(e1.body(n1)), signature_of(e2.body(n2))
    if s1.terms != s2.terms:
        a = next(iter(s1.terms ^ s2.terms))
        return [fmt_action(a) + " -> termination"]
    if s1.deadline != s2.deadline:
        return [
            f"idle deadline {_fmt_dl(s1.deadline)} vs {_fmt_dl(s2.deadline)}"
        ]
    moves1 = {}
    for a, v in s1.steps:
        moves1.setdefault(a, set()).add(v)
    moves2 = {}
    for a, v in s2.steps:
        moves2.setdefault(a, set()).add(v)
    for a in set(moves1) ^ set(moves2):
        return [fmt_action(a)]
    for a in moves1:
        b1 = {blocks[("1", v)] for v in moves1[a]}
        b2 = {blocks[("2", v)] for v in moves2[a]}
        if b1 != b2:
            for v1 in moves1[a]:
                if blocks[("1", v1)] not in b2:
                    for v2 in moves2[a]:
                        rest = _distinguish(e1, e2, v1, v2, blocks, seen)
                        if rest is not None:
                            return [fmt_action(a)] + rest
                    return [fmt_action(a)]
            for v2 in moves2[a]:
                if blocks[("2", v2)] not in b1:
                    return [fmt_action(a)]
    return None


def _fmt_dl(dl):
    if dl is None:
        return "none"
    return fmt_scalar(dl)


# ---------------------------------------------------------------------------
# Definitional (rule-level) bounded bisimulation game.

def relevant_instants(p: Term, q: Term) -> tuple:
    """A finite ambient sample: literals, midpoints, a beyond-point, zero;
    states from state-operator annotations plus the empty state."""
    times = {Fraction(0)}
    sigmas = {frozenset()}
    pairs = set()

    def collect(t: Term):
        if isinstance(t, Act):
            a = t.action
            times.add(a.t1)
            if not is_inf(a.t2):
                times.add(a.t2)
            return
        if isinstance(t, (ADead,)):
            if not is_inf(t.time):
                times.add(t.time)
            return
        from .terms import RDead, children

        if isinstance(t, RDead):
            if not is_inf(t.time):
                times.add(t.time)
            return
        if isinstance(t, StateOp):
            times.add(t.time)
            sigmas.add(t.state)
            pairs.add((t.time, t.state))
        if isinstance(t, RecConst):
            for _, b in t.spec.equations:
                collect(b)
            return
        for k in children(t):
            collect(k)

    collect(p)
    collect(q)
    lits = sorted(times)
    extra = [(a + b) / 2 for a, b in zip(lits, lits[1:])]
    all_times = sorted(set(lits + extra + [lits[-1] + 1]))
    out = {(t, s) for t in all_times for s in sigmas} | pairs
    return tuple(sorted(out, key=lambda ts: (ts[0], sorted(map(tuple, ts[1])))))


def bisim_definitional(
    p: Term,
    q: Term,
    instants=None,
    depth: int = 8,
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
) -> BisimVerdict:
    """Bounded game over steps, terminating steps, and idle capability.

    Idle sets are compared after adjoining the vacuous past below the
    ambient instant.  Successors are compared at the ambient advanced by
    the matched action.
    """
    if instants is None:
        instants = relevant_instants(p, q)
    stepper = Stepper(cfg, unfold_budget)
    assumed: set = set()
    fail: list = []

    def match(x, y, t, sigma, d, path) -> bool:
        key = (x, y, t, sigma)
        if key in assumed:
            return True
        if d <= 0:
            return True
        assumed.add(key)
        sx = stepper.steps(x, t, sigma)
        sy = stepper.steps(y, t, sigma)
        ix = stepper.idles(x, t, sigma).with_base(t)
        iy = stepper.idles(y, t, sigma).with_base(t)
        if ix != iy:
            fail.append(path + (f"idle {ix} vs {iy} at t={fmt_scalar(t)}",))
            assumed.discard(key)
            return False
        labels_x = {}
        labels_y = {}
        for a, succ in sx:
            labels_x.setdefault(a, []).append(succ)
        for a, succ in sy:
            labels_y.setdefault(a, []).append(succ)
        if set(labels_x) != set(labels_y):
            a = next(iter(set(labels_x) ^ set(labels_y)))
            fail.append(path + (fmt_action(a),))
            assumed.discard(key)
            return False
        for a in labels_x:
            tx = [s for s in labels_x[a] if isinstance(s, Terminated)]
            ty = [s for s in labels_y[a] if isinstance(s, Terminated)]
            if bool(tx) != bool(ty):
                fail.append(path + (fmt_action(a) + " -> termination",))
                assumed.discard(key)
                return False
            t2, sigma2 = advance(t, sigma, a)
            for sx2 in labels_x[a]:
                if isinstance(sx2, Terminated):
                    continue
                if not any(
                    not isinstance(sy2, Terminated)
                    and match(sx2, sy2, t2, sigma2, d - 1, path + (fmt_action(a),))
                    for sy2 in labels_y[a]
                ):
                    if not fail:
                        fail.append(path + (fmt_action(a),))
                    assumed.discard(key)
                    return False
            for sy2 in labels_y[a]:
                if isinstance(sy2, Terminated):
                    continue
                if not any(
                    not isinstance(sx2, Terminated)
                    and match(sy2, sx2, t2, sigma2, d - 1, path + (fmt_action(a),))
                    for sx2 in labels_x[a]
                ):
                    if not fail:
                        fail.append(path + (fmt_action(a),))
                    assumed.discard(key)
                    return False
        return True

    for t, sigma in instants:
        if not match(p, q, t, sigma, depth, ()):
            return BisimVerdict(False, tuple(fail[0]) if fail else None, depth)
    return BisimVerdict(True, None, depth)


# ---------------------------------------------------------------------------
# SOS-side view of a linear specification (fidelity checks, reporting).

def sos_graph(
    p: Term,
    t: Fraction,
    sigma,
    depth: int = 64,
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
):
    """Reachable (state -> moves/termination/deadline) table under the rules."""
    stepper = Stepper(cfg, unfold_budget)
    start = (p, t, sigma)
    table = {}
    work = [(start, 0)]
    while work:
        (term, at, sg), level = work.pop(0)
        key = (term, at, sg)
        if key in table:
            continue
        steps = stepper.steps(term, at, sg)
        idles = stepper.idles(term, at, sg)
        moves, ends = [], []
        for a, succ in sorted(steps, key=lambda tr: term_key(Act(tr.action))):
            t2, s2 = advance(at, sg, a)
            if isinstance(succ, Terminated):
                ends.append(a)
            else:
                moves.append((a, (succ, t2, s2)))
                if level + 1 <= depth:
                    work.append(((succ, t2, s2), level + 1))
        table[key] = {
            "moves": tuple(moves),
            "terms": tuple(ends),
            "deadline": idles.sup(),
        }
    return start, table
