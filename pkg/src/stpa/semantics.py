"""Structural operational semantics.

For a closed term at an ambient (time, communication state) this module
computes the finite set of action transitions (including termination) and
the idling capability as a symbolic union of intervals.

Conventions pinned here:

* Idle sets are the literal rule-derived sets.  Bisimulation comparison
  (in `analysis`) adjoins the vacuous base (-inf, ambient]: idling into
  the past is granted to every process, so the comparison is insensitive
  to the below-ambient bookkeeping that differs between the state
  operator's own grant and plain constants.
* The merge/left-merge/time-out gate tests membership of the action time
  in the partner's literal idle set: an expired partner blocks even
  zero-length waits.
* A state-operator term only has behaviour at the ambient equal to its
  own parameters (a guard, not an error).
* Relative receive windows with an empty reception set contribute idling
  from the ambient instant (mirroring the absolute case).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Union

from .comm import (
    CommState,
    DEFAULT_SPEED,
    SpeedConfig,
    min_rcpt,
    priority_lt,
    rcpt,
    record_send,
)
from .meadow import ExtScalar, INF, ext_le, ext_lt, is_inf, le, lt, max2
from .terms import (
    ADead,
    Act,
    Action,
    ActionKind,
    Alt,
    AuxMaxProg,
    Dead,
    LeftMerge,
    MaxProg,
    Par,
    RDead,
    RecConst,
    Seq,
    StateOp,
    Term,
    Timeout,
    Var,
    bt,
    chan,
    fmt_action,
    term_key,
    unfold,
)


class BudgetExceeded(RuntimeError):
    """Recursion unfolding exceeded the configured budget."""


DEFAULT_UNFOLD_BUDGET = 10_000


# ---------------------------------------------------------------------------
# Interval unions over exact scalars.

@dataclass(frozen=True)
class Interval:
    """One interval; lo=None means unbounded below, hi=None unbounded above."""

    lo: Optional[Fraction]
    hi: Optional[Fraction]
    lo_closed: bool = True
    hi_closed: bool = True

    def is_empty(self) -> bool:
        if self.lo is None or self.hi is None:
            return False
        if self.lo < self.hi:
            return False
        return not (self.lo == self.hi and self.lo_closed and self.hi_closed)

    def contains(self, x: Fraction) -> bool:
        if self.lo is not None:
            if x < self.lo or (x == self.lo and not self.lo_closed):
                return False
        if self.hi is not None:
            if x > self.hi or (x == self.hi and not self.hi_closed):
                return False
        return True

    def __repr__(self):
        left = "(-inf" if self.lo is None else ("[" if self.lo_closed else "(") + str(self.lo)
        right = "inf)" if self.hi is None else str(self.hi) + ("]" if self.hi_closed else ")")
        return f"{left}, {right}"


def _lo_key(iv: Interval):
    if iv.lo is None:
        return (0, Fraction(0), 0)
    return (1, iv.lo, 0 if iv.lo_closed else 1)


def _touches(a: Interval, b: Interval) -> bool:
    # b starts no later than a ends (plus adjacency), assuming b.lo >= a.lo
    if a.hi is None or b.lo is None:
        return True
    if b.lo < a.hi:
        return True
    if b.lo == a.hi:
        return a.hi_closed or b.lo_closed
    return False


@dataclass(frozen=True)
class IdleSet:
    """A normalized finite union of disjoint, non-adjacent intervals."""

    intervals: tuple

    @staticmethod
    def from_intervals(ivs) -> "IdleSet":
        ivs = [iv for iv in ivs if not iv.is_empty()]
        ivs.sort(key=_lo_key)
        merged: list = []
        for iv in ivs:
            if merged and _touches(merged[-1], iv):
                cur = merged[-1]
                if cur.hi is None:
                    continue
                if iv.hi is None or iv.hi > cur.hi or (iv.hi == cur.hi and iv.hi_closed):
                    merged[-1] = Interval(cur.lo, iv.hi, cur.lo_closed, iv.hi_closed)
            else:
                merged.append(iv)
        return IdleSet(tuple(merged))

    @staticmethod
    def empty() -> "IdleSet":
        return IdleSet(())

    @staticmethod
    def closed(lo: Fraction, hi: ExtScalar) -> "IdleSet":
        """[lo, hi], or [lo, inf) when hi is infinite; empty when hi < lo."""
        if is_inf(hi):
            return IdleSet.from_intervals([Interval(lo, None)])
        return IdleSet.from_intervals([Interval(lo, hi)])

    @staticmethod
    def below(hi: Fraction) -> "IdleSet":
        return IdleSet((Interval(None, hi),))

    @staticmethod
    def at(x: Fraction) -> "IdleSet":
        return IdleSet((Interval(x, x),))

    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, x: Fraction) -> bool:
        return any(iv.contains(x) for iv in self.intervals)

    def union(self, other: "IdleSet") -> "IdleSet":
        return IdleSet.from_intervals(list(self.intervals) + list(other.intervals))

    def intersect(self, other: "IdleSet") -> "IdleSet":
        out = []
        for a in self.intervals:
            for b in other.intervals:
                lo, lo_c = a.lo, a.lo_closed
                if b.lo is not None and (lo is None or b.lo > lo or (b.lo == lo and not b.lo_closed)):
                    lo, lo_c = b.lo, b.lo_closed
                hi, hi_c = a.hi, a.hi_closed
                if b.hi is not None and (hi is None or b.hi < hi or (b.hi == hi and not b.hi_closed)):
                    hi, hi_c = b.hi, b.hi_closed
                iv = Interval(lo, hi, lo_c, hi_c)
                if not iv.is_empty():
                    out.append(iv)
        return IdleSet.from_intervals(out)

    def truncate_above(self, u: Fraction) -> "IdleSet":
        """Intersect with (-inf, u]."""
        return self.intersect(IdleSet.below(u))

    def with_base(self, t: Fraction) -> "IdleSet":
        """Adjoin the vacuous past (-inf, t]."""
        return self.union(IdleSet.below(t))

    def sup(self) -> Optional[ExtScalar]:
        """Supremum, INF when unbounded above, None when empty."""
        if not self.intervals:
            return None
        hi = self.intervals[-1].hi
        return INF if hi is None else hi

    def __repr__(self):
        if not self.intervals:
            return "{}"
        return " u ".join(repr(iv) for iv in self.intervals)


# ---------------------------------------------------------------------------
# Transitions.

class Terminated:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "✓"


TERM = Terminated()

Successor = Union[Term, Terminated]


class Transition(NamedTuple):
    action: Action
    target: Successor


def _transition_key(tr: Transition):
    from .terms import _action_key  # local import to keep the public surface tidy

    tgt = (0,) if isinstance(tr.target, Terminated) else (1,) + term_key(tr.target)
    return (_action_key(tr.action), tgt)


class Stepper:
    """Memoizing evaluator for the transition and idle relations."""

    def __init__(self, cfg: SpeedConfig = DEFAULT_SPEED, unfold_budget: int = DEFAULT_UNFOLD_BUDGET):
        self.cfg = cfg
        self.unfold_budget = unfold_budget
        self._unfolds = 0
        self._steps: dict = {}
        self._idles: dict = {}
        self._unfolded: dict = {}

    # -- recursion ----------------------------------------------------------
    def _unfold(self, r: RecConst) -> Term:
        key = (r.var, r.spec)
        hit = self._unfolded.get(key)
        if hit is None:
            self._unfolds += 1
            if self._unfolds > self.unfold_budget:
                raise BudgetExceeded("recursion unfolding budget exceeded")
            hit = unfold(r)
            self._unfolded[key] = hit
        return hit

    # -- transitions ----------------------------------------------------------
    def steps(self, p: Term, t: Fraction, sigma: CommState) -> frozenset:
        key = (p, t, sigma)
        hit = self._steps.get(key)
        if hit is None:
            hit = frozenset(self._steps_of(p, t, sigma))
            self._steps[key] = hit
        return hit

    def _steps_of(self, p, t, sigma):
        if isinstance(p, (Dead, ADead, RDead)):
            return []
        if isinstance(p, Act):
            return self._act_steps(p.action, t, sigma)
        if isinstance(p, Alt):
            return list(self.steps(p.left, t, sigma)) + list(self.steps(p.right, t, sigma))
        if isinstance(p, Seq):
            out = []
            for a, succ in self.steps(p.left, t, sigma):
                if isinstance(succ, Terminated):
                    out.append(Transition(a, p.right))
                else:
                    out.append(Transition(a, Seq(succ, p.right)))
            return out
        if isinstance(p, Par):
            return self._merge_steps(p.left, p.right, t, sigma, both_sides=True)
        if isinstance(p, LeftMerge):
            return self._merge_steps(p.left, p.right, t, sigma, both_sides=False)
        if isinstance(p, Timeout):
            gate = self.idles(p.right, t, sigma)
            out = []
            for a, succ in self.steps(p.left, t, sigma):
                if gate.contains(bt(a)):
                    out.append(Transition(a, succ))
            return out
        if isinstance(p, StateOp):
            return self._state_steps(p, t, sigma)
        if isinstance(p, MaxProg):
            inner = self.steps(p.body, t, sigma)
            out = []
            for a, succ in self._priority_filter(inner, inner, p.pattern):
                if isinstance(succ, Terminated):
                    out.append(Transition(a, succ))
                else:
                    out.append(Transition(a, MaxProg(p.pattern, succ)))
            return out
        if isinstance(p, AuxMaxProg):
            left = self.steps(p.left, t, sigma)
            right = self.steps(p.right, t, sigma)
            out = []
            for a, succ in self._priority_filter(left, right, p.pattern):
                if isinstance(succ, Terminated):
                    out.append(Transition(a, succ))
                else:
                    out.append(Transition(a, MaxProg(p.pattern, succ)))
            return out
        if isinstance(p, RecConst):
            return list(self.steps(self._unfold(p), t, sigma))
        if isinstance(p, Var):
            raise ValueError(f"open term: free variable {p.name}")
        raise TypeError(f"unknown term {p!r}")

    def _act_steps(self, a: Action, t, sigma):
        k = a.kind
        if k is ActionKind.PSEND_ABS:
            if le(t, a.t1):
                return [Transition(Action(ActionKind.ASEND, a.channel, a.datum, a.t1, a.t1, a.point), TERM)]
            return []
        if k is ActionKind.PSEND_REL:
            u = t + a.t1
            return [Transition(Action(ActionKind.ASEND, a.channel, a.datum, u, u, a.point), TERM)]
        if k is ActionKind.PRECV_ABS:
            if not ext_lt(t, a.t2):
                return []
            v = rcpt(sigma, a.channel, a.datum, max2(t, a.t1), a.t2, a.point, self.cfg)
            if not v:
                return []
            u = min_rcpt(v)
            return [Transition(Action(ActionKind.ARECV, a.channel, a.datum, u, u, a.point), TERM)]
        if k is ActionKind.PRECV_REL:
            lo = t + a.t1
            hi = INF if is_inf(a.t2) else t + a.t2
            v = rcpt(sigma, a.channel, a.datum, lo, hi, a.point, self.cfg)
            if not v:
                return []
            u = min_rcpt(v)
            return [Transition(Action(ActionKind.ARECV, a.channel, a.datum, u, u, a.point), TERM)]
        # actual send/receive fire at their own instant while not expired
        if le(t, a.t1):
            return [Transition(a, TERM)]
        return []

    def _merge_steps(self, x, y, t, sigma, both_sides: bool):
        out = []
        idle_y = self.idles(y, t, sigma)
        for a, succ in self.steps(x, t, sigma):
            if idle_y.contains(bt(a)):
                if isinstance(succ, Terminated):
                    out.append(Transition(a, y))
                else:
                    out.append(Transition(a, Par(succ, y)))
        if both_sides:
            idle_x = self.idles(x, t, sigma)
            for a, succ in self.steps(y, t, sigma):
                if idle_x.contains(bt(a)):
                    if isinstance(succ, Terminated):
                        out.append(Transition(a, x))
                    else:
                        out.append(Transition(a, Par(x, succ)))
        return out

    def _state_steps(self, p: StateOp, t, sigma):
        if t != p.time or sigma != p.state:
            return []
        out = []
        for a, succ in self.steps(p.body, t, sigma):
            if chan(a) not in p.channels:
                if isinstance(succ, Terminated):
                    out.append(Transition(a, succ))
                else:
                    out.append(Transition(a, StateOp(p.channels, p.time, p.state, succ)))
                continue
            if a.kind is ActionKind.ASEND:
                new_state = record_send(sigma, a.channel, a.datum, bt(a), a.point)
                if isinstance(succ, Terminated):
                    out.append(Transition(a, succ))
                else:
                    out.append(Transition(a, StateOp(p.channels, bt(a), new_state, succ)))
            elif a.kind is ActionKind.ARECV:
                if isinstance(succ, Terminated):
                    out.append(Transition(a, succ))
                else:
                    out.append(Transition(a, StateOp(p.channels, bt(a), sigma, succ)))
        return out

    def _priority_filter(self, candidates, blockers, pattern):
        labels = [b.action for b in blockers]
        out = []
        for tr in candidates:
            a = Act(tr.action)
            if not any(priority_lt(pattern, a, Act(b)) for b in labels):
                out.append(tr)
        return out

    # -- idling ----------------------------------------------------------------
    def idles(self, p: Term, t: Fraction, sigma: CommState) -> IdleSet:
        key = (p, t, sigma)
        hit = self._idles.get(key)
        if hit is None:
            hit = self._idles_of(p, t, sigma)
            self._idles[key] = hit
        return hit

    def _idles_of(self, p, t, sigma):
        if isinstance(p, Dead):
            return IdleSet.empty()
        if isinstance(p, ADead):
            return IdleSet.closed(t, p.time)
        if isinstance(p, RDead):
            hi = INF if is_inf(p.time) else t + p.time
            return IdleSet.closed(t, hi)
        if isinstance(p, Act):
            return self._act_idles(p.action, t, sigma)
        if isinstance(p, Alt):
            return self.idles(p.left, t, sigma).union(self.idles(p.right, t, sigma))
        if isinstance(p, Seq):
            return self.idles(p.left, t, sigma)
        if isinstance(p, (Par, LeftMerge, Timeout)):
            return self.idles(p.left, t, sigma).intersect(self.idles(p.right, t, sigma))
        if isinstance(p, StateOp):
            if t != p.time or sigma != p.state:
                return IdleSet.empty()
            return self.idles(p.body, t, sigma).with_base(t)
        if isinstance(p, MaxProg):
            return self._priority_idles(self.idles(p.body, t, sigma), p.body, t, sigma, p.pattern)
        if isinstance(p, AuxMaxProg):
            return self._priority_idles(self.idles(p.left, t, sigma), p.right, t, sigma, p.pattern)
        if isinstance(p, RecConst):
            return self.idles(self._unfold(p), t, sigma)
        if isinstance(p, Var):
            raise ValueError(f"open term: free variable {p.name}")
        raise TypeError(f"unknown term {p!r}")

    def _act_idles(self, a: Action, t, sigma):
        k = a.kind
        if k is ActionKind.PSEND_ABS:
            return IdleSet.closed(t, a.t1)
        if k is ActionKind.PSEND_REL:
            return IdleSet.closed(t, t + a.t1)
        if k is ActionKind.PRECV_ABS:
            if not ext_lt(t, a.t2):
                return IdleSet.empty()
            v = rcpt(sigma, a.channel, a.datum, max2(t, a.t1), a.t2, a.point, self.cfg)
            if v:
                return IdleSet.below(min_rcpt(v))
            return IdleSet.closed(t, a.t2)
        if k is ActionKind.PRECV_REL:
            lo = t + a.t1
            hi = INF if is_inf(a.t2) else t + a.t2
            v = rcpt(sigma, a.channel, a.datum, lo, hi, a.point, self.cfg)
            if v:
                return IdleSet.below(min_rcpt(v))
            # lower bound at the ambient instant, mirroring the absolute case
            return IdleSet.closed(t, hi)
        return IdleSet.closed(t, a.t1)

    def _priority_idles(self, base: IdleSet, blocker: Term, t, sigma, pattern):
        cut = None
        for a, _ in self.steps(blocker, t, sigma):
            if pattern.matches(a):
                u = bt(a)
                if cut is None or lt(u, cut):
                    cut = u
        if cut is None:
            return base
        return base.truncate_above(cut)


def step_set(
    p: Term,
    t: Fraction,
    sigma: CommState = frozenset(),
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
) -> frozenset:
    """All transitions of p at ambient (t, sigma)."""
    return Stepper(cfg, unfold_budget).steps(p, t, sigma)


def idle_set(
    p: Term,
    t: Fraction,
    sigma: CommState = frozenset(),
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
) -> IdleSet:
    """The idling capability of p at ambient (t, sigma)."""
    return Stepper(cfg, unfold_budget).idles(p, t, sigma)


def advance(t: Fraction, sigma: CommState, a: Action) -> tuple:
    """The ambient pair after performing a: time moves to bt(a), sends are recorded."""
    if a.kind is ActionKind.ASEND:
        return bt(a), record_send(sigma, a.channel, a.datum, bt(a), a.point)
    return bt(a), sigma


# ---------------------------------------------------------------------------
# Trace exploration.

@dataclass(frozen=True)
class Exhaustive:
    depth: int = 20


@dataclass(frozen=True)
class RandomWalk:
    seed: int = 0
    depth: int = 20
    walks: int = 1


@dataclass(frozen=True)
class TraceEvent:
    time: Fraction
    action: Optional[Action]
    kind: str  # step | term | deadlock | cut
    depth: int

    def to_dict(self) -> dict:
        from .meadow import fmt_scalar

        return {
            "time": fmt_scalar(self.time),
            "action": None if self.action is None else fmt_action(self.action),
            "kind": self.kind,
            "depth": self.depth,
        }


Trace = tuple


def run(
    p: Term,
    t0: Fraction,
    sigma0: CommState = frozenset(),
    policy=Exhaustive(),
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
) -> tuple:
    """Maximal transition sequences up to the policy depth, deterministically ordered."""
    stepper = Stepper(cfg, unfold_budget)

    def expand(state, t, sigma, depth, prefix, acc):
        if depth >= policy.depth:
            acc.append(prefix + (TraceEvent(t, None, "cut", depth),))
            return
        transitions = sorted(stepper.steps(state, t, sigma), key=_transition_key)
        if not transitions:
            acc.append(prefix + (TraceEvent(t, None, "deadlock", depth),))
            return
        for a, succ in transitions:
            t2, sigma2 = advance(t, sigma, a)
            if isinstance(succ, Terminated):
                acc.append(prefix + (TraceEvent(t2, a, "term", depth + 1),))
            else:
                expand(succ, t2, sigma2, depth + 1, prefix + (TraceEvent(t2, a, "step", depth + 1),), acc)

    if isinstance(policy, Exhaustive):
        acc: list = []
        expand(p, t0, sigma0, 0, (), acc)
        return tuple(acc)

    rng = random.Random(policy.seed)
    traces = []
    for _ in range(policy.walks):
        prefix, state, t, sigma, depth = [], p, t0, sigma0, 0
        while True:
            if depth >= policy.depth:
                prefix.append(TraceEvent(t, None, "cut", depth))
                break
            transitions = sorted(stepper.steps(state, t, sigma), key=_transition_key)
            if not transitions:
                prefix.append(TraceEvent(t, None, "deadlock", depth))
                break
            a, succ = transitions[rng.randrange(len(transitions))]
            t, sigma = advance(t, sigma, a)
            depth += 1
            if isinstance(succ, Terminated):
                prefix.append(TraceEvent(t, a, "term", depth))
                break
            prefix.append(TraceEvent(t, a, "step", depth))
            state = succ
        traces.append(tuple(prefix))
    return tuple(traces)
