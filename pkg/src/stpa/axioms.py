"""Directed rewriting: axiom schemas, normalizers, canonical sums.

The equational tables are oriented left-to-right.  Commutativity,
associativity and idempotence of choice are not rewrite rules; canonical
sums (flattened, deduplicated, sorted) realize them.  Two derived rule
families are included and validated like the table rules: absorption of a
timed inaction into an action-prefixed summand whose time dominates it,
and the right-to-left reading of (x.y)>>z = (x>>z).y used to eliminate
the state operator over time-out-guarded summands.

Normal forms: `shnf` targets sums of guard atoms (actions, finite
inactions, time-out chains) with arbitrary tails; `hnf_state` eliminates
a state operator completely, producing sums of actual actions and
absolutely timed inactions whose tails are again state-operator terms;
`maxpr_eliminate` removes the priority operators from such sums.

Every rewrite can be recorded: a trace step holds the rule id, the
position path in the whole term, and the redex it replaced; replaying the
steps from the source term reproduces the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .comm import DEFAULT_SPEED, SpeedConfig, priority_lt, rcpt, min_rcpt, record_send
from .meadow import INF, ext_add, ext_le, ext_lt, is_inf, le, lt, max2
from .semantics import DEFAULT_UNFOLD_BUDGET, BudgetExceeded
from .terms import (
    ADead,
    Act,
    Action,
    ActionKind,
    ActionPattern,
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
    alt,
    alt_summands,
    arecv,
    asend,
    bt,
    chan,
    channels_of,
    children,
    is_atomic,
    pretty,
    rebuild,
    term_key,
    unfold,
)


class ChannelCoverage(ValueError):
    """A state operator is missing channels that occur in its scope."""


class NotEliminable(ValueError):
    """The requested normal form does not exist for this term."""


# ---------------------------------------------------------------------------
# Rewrite traces.

@dataclass(frozen=True)
class RewriteStep:
    rule: str
    path: tuple
    before: str


@dataclass(frozen=True)
class NormalFormClass:
    kind: str  # "HProc" | "SHProc" | "Other"
    witness: Optional[str] = None


def subterm_at(t: Term, path: tuple) -> Term:
    for i in path:
        t = children(t)[i]
    return t


def replace_at(t: Term, path: tuple, new: Term) -> Term:
    if not path:
        return new
    kids = list(children(t))
    kids[path[0]] = replace_at(kids[path[0]], path[1:], new)
    return rebuild(t, tuple(kids))


def _summand_paths(t: Term, prefix: tuple = ()):
    """(path, summand) pairs of the right-nested alternative spine."""
    out = []
    while isinstance(t, Alt):
        out.append((prefix + (0,), t.left))
        t = t.right
        prefix = prefix + (1,)
    out.append((prefix, t))
    return out


# ---------------------------------------------------------------------------
# Helpers shared by rules.

def _is_action(t) -> bool:
    return isinstance(t, Act)


def _plain_abs(a: Action) -> bool:
    return not a.is_potential_receive and a.is_absolute


def _plain_rel(a: Action) -> bool:
    return not a.is_potential_receive and a.is_relative


def _head_action(t: Term) -> Optional[Action]:
    """The action of a summand shaped a or a.x."""
    if isinstance(t, Act):
        return t.action
    if isinstance(t, Seq) and isinstance(t.left, Act):
        return t.left.action
    return None


def alt_canonical(p: Term) -> Term:
    """Flatten, deduplicate and sort alternatives, recursively."""
    kids = children(p)
    if kids:
        p = rebuild(p, tuple(alt_canonical(k) for k in kids))
    if not isinstance(p, Alt):
        return p
    parts = sorted(set(alt_summands(p)), key=term_key)
    return alt(*parts)


def cleanup_sum(p: Term) -> Term:
    """Canonical sum plus inaction joins, dominated-inaction absorption, and
    removal of immediate inaction beside other summands."""
    parts = alt_summands(alt_canonical(p))
    if len(parts) > 1:
        non_dead = [s for s in parts if not isinstance(s, Dead)]
        if non_dead:
            parts = non_dead
    adeads = [s for s in parts if isinstance(s, ADead)]
    rdeads = [s for s in parts if isinstance(s, RDead)]
    rest = [s for s in parts if not isinstance(s, (ADead, RDead))]
    if len(adeads) > 1:
        best = adeads[0].time
        for s in adeads[1:]:
            if ext_le(best, s.time):
                best = s.time
        adeads = [ADead(best)]
    if len(rdeads) > 1:
        best = rdeads[0].time
        for s in rdeads[1:]:
            if ext_le(best, s.time):
                best = s.time
        rdeads = [RDead(best)]

    def dominated(dead, want_abs):
        for s in rest:
            a = _head_action(s)
            if a is None or a.is_potential_receive:
                continue
            if want_abs != a.is_absolute:
                continue
            if ext_le(dead.time, bt(a)):
                return True
        return False

    adeads = [d for d in adeads if not dominated(d, True)]
    rdeads = [d for d in rdeads if not dominated(d, False)]
    parts = sorted(rest + adeads + rdeads, key=term_key)
    if not parts:
        parts = [Dead()]
    return alt(*parts)


# ---------------------------------------------------------------------------
# The directed rule registry.  Each rule rewrites at the root or reports
# no-match with None.

@dataclass(frozen=True)
class AxiomRule:
    rule_id: str
    group: str  # basic | merge | timeout | state | priority | recursion | derived
    apply: Callable[[Term], Optional[Term]]
    derived: bool = False


def _mk_rules() -> dict:
    rules = []

    def rule(rule_id, group, fn, derived=False):
        rules.append(AxiomRule(rule_id, group, fn, derived))

    # --- choice and sequencing -------------------------------------------
    def seq_dist_r(t):
        if isinstance(t, Seq) and isinstance(t.left, Alt):
            return Alt(Seq(t.left.left, t.right), Seq(t.left.right, t.right))
        return None

    rule("seq-dist-r", "basic", seq_dist_r)

    def seq_assoc(t):
        if isinstance(t, Seq) and isinstance(t.left, Seq):
            return Seq(t.left.left, Seq(t.left.right, t.right))
        return None

    rule("seq-assoc", "basic", seq_assoc)

    def alt_dead(t):
        if isinstance(t, Alt):
            parts = alt_summands(t)
            kept = [s for s in parts if not isinstance(s, Dead)]
            if kept and len(kept) < len(parts):
                return alt(*kept)
        return None

    rule("alt-dead", "basic", alt_dead)

    def dead_seq(t):
        if isinstance(t, Seq) and isinstance(t.left, Dead):
            return Dead()
        return None

    rule("dead-seq", "basic", dead_seq)

    def dead_def(t):
        if isinstance(t, Dead):
            return RDead(Fraction(0))
        return None

    rule("dead-def", "basic", dead_def)

    def adead_join(t):
        if isinstance(t, Alt) and isinstance(t.left, ADead) and isinstance(t.right, ADead):
            u, v = t.left.time, t.right.time
            return ADead(v) if ext_le(u, v) else ADead(u)
        return None

    rule("adead-join", "basic", adead_join)

    def rdead_join(t):
        if isinstance(t, Alt) and isinstance(t.left, RDead) and isinstance(t.right, RDead):
            u, v = t.left.time, t.right.time
            return RDead(v) if ext_le(u, v) else RDead(u)
        return None

    rule("rdead-join", "basic", rdead_join)

    def _absorb(t, dead_cls, want_abs, exact):
        if not isinstance(t, Alt):
            return None
        for a_side, d_side in ((t.left, t.right), (t.right, t.left)):
            if not isinstance(d_side, dead_cls):
                continue
            a = _head_action(a_side)
            if a is None or a.is_potential_receive or a.is_absolute != want_abs:
                continue
            if exact and not isinstance(a_side, Act):
                continue
            cond = d_side.time == bt(a) if exact else ext_le(d_side.time, bt(a))
            if cond:
                return a_side
        return None

    rule("adead-absorb", "basic", lambda t: _absorb(t, ADead, True, True))
    rule("rdead-absorb", "basic", lambda t: _absorb(t, RDead, False, True))
    rule("adead-absorb-le", "derived", lambda t: _absorb(t, ADead, True, False), derived=True)
    rule("rdead-absorb-le", "derived", lambda t: _absorb(t, RDead, False, False), derived=True)

    def adead_seq(t):
        if isinstance(t, Seq) and isinstance(t.left, ADead):
            return t.left
        return None

    rule("adead-seq", "basic", adead_seq)

    def rdead_seq(t):
        if isinstance(t, Seq) and isinstance(t.left, RDead):
            return t.left
        return None

    rule("rdead-seq", "basic", rdead_seq)

    # --- merge -------------------------------------------------------------
    def par_expand(t):
        if isinstance(t, Par):
            return Alt(LeftMerge(t.left, t.right), LeftMerge(t.right, t.left))
        return None

    rule("par-expand", "merge", par_expand)

    def _merge_atom(t):
        # atomic per the definition, extended to infinitely timed inaction
        return is_atomic(t) or isinstance(t, (ADead, RDead))

    def lmerge_atom(t):
        if isinstance(t, LeftMerge) and _merge_atom(t.left):
            return Seq(Timeout(t.left, t.right), t.right)
        return None

    rule("lmerge-atom", "merge", lmerge_atom)

    def lmerge_seq(t):
        if (
            isinstance(t, LeftMerge)
            and isinstance(t.left, Seq)
            and _merge_atom(t.left.left)
        ):
            return Seq(Timeout(t.left.left, t.right), Par(t.left.right, t.right))
        return None

    rule("lmerge-seq", "merge", lmerge_seq)

    def lmerge_dist(t):
        if isinstance(t, LeftMerge) and isinstance(t.left, Alt):
            return Alt(LeftMerge(t.left.left, t.right), LeftMerge(t.left.right, t.right))
        return None

    rule("lmerge-dist", "merge", lmerge_dist)

    # --- time-out ------------------------------------------------------------
    def tout_adead_join(t):
        if isinstance(t, Timeout) and isinstance(t.left, ADead) and isinstance(t.right, ADead):
            u, v = t.left.time, t.right.time
            return ADead(u) if ext_le(u, v) else ADead(v)
        return None

    rule("tout-adead-join", "timeout", tout_adead_join)

    def tout_rdead_join(t):
        if isinstance(t, Timeout) and isinstance(t.left, RDead) and isinstance(t.right, RDead):
            u, v = t.left.time, t.right.time
            return RDead(u) if ext_le(u, v) else RDead(v)
        return None

    rule("tout-rdead-join", "timeout", tout_rdead_join)

    def tout_act(t):
        # a >> a' = a when a acts no later than a' starts idling; restricted
        # to same-timing pairs, where the comparison is meaningful
        if isinstance(t, Timeout) and _is_action(t.left) and _is_action(t.right):
            a, b = t.left.action, t.right.action
            if a.is_absolute == b.is_absolute and ext_le(a.t2, b.t1):
                return t.left
        return None

    rule("tout-act", "timeout", tout_act)

    def tout_part_abs(t):
        if isinstance(t, Timeout) and _is_action(t.right) and _plain_abs(t.right.action):
            return Timeout(t.left, ADead(bt(t.right.action)))
        return None

    rule("tout-part-abs", "timeout", tout_part_abs)

    def tout_part_rel(t):
        if isinstance(t, Timeout) and _is_action(t.right) and _plain_rel(t.right.action):
            return Timeout(t.left, RDead(bt(t.right.action)))
        return None

    rule("tout-part-rel", "timeout", tout_part_rel)

    def tout_dist_r(t):
        if isinstance(t, Timeout) and isinstance(t.right, Alt):
            return Alt(Timeout(t.left, t.right.left), Timeout(t.left, t.right.right))
        return None

    rule("tout-dist-r", "timeout", tout_dist_r)

    def tout_seq_r(t):
        if isinstance(t, Timeout) and isinstance(t.right, Seq):
            return Timeout(t.left, t.right.left)
        return None

    rule("tout-seq-r", "timeout", tout_seq_r)

    def tout_nest_r(t):
        if isinstance(t, Timeout) and isinstance(t.right, Timeout):
            return Timeout(Timeout(t.left, t.right.left), t.right.right)
        return None

    rule("tout-nest-r", "timeout", tout_nest_r)

    def tout_adead(t):
        if isinstance(t, Timeout) and _is_action(t.left) and isinstance(t.right, ADead):
            a, u = t.left.action, t.right.time
            if a.is_absolute:
                if ext_lt(u, a.t1):
                    return t.right
                if ext_le(a.t2, u):
                    return t.left
        return None

    rule("tout-adead", "timeout", tout_adead)

    def tout_rdead(t):
        if isinstance(t, Timeout) and _is_action(t.left) and isinstance(t.right, RDead):
            a, u = t.left.action, t.right.time
            if a.is_relative:
                if ext_lt(u, a.t1):
                    return t.right
                if ext_le(a.t2, u):
                    return t.left
        return None

    rule("tout-rdead", "timeout", tout_rdead)

    def tout_dist_l(t):
        if isinstance(t, Timeout) and isinstance(t.left, Alt):
            return Alt(Timeout(t.left.left, t.right), Timeout(t.left.right, t.right))
        return None

    rule("tout-dist-l", "timeout", tout_dist_l)

    def tout_seq_l(t):
        if isinstance(t, Timeout) and isinstance(t.left, Seq):
            return Seq(Timeout(t.left.left, t.right), t.left.right)
        return None

    rule("tout-seq-l", "timeout", tout_seq_l)

    def tout_swap(t):
        # (x>>y)>>z = (x>>z)>>y, applied only toward the canonical order
        if isinstance(t, Timeout) and isinstance(t.left, Timeout):
            if term_key(t.right) < term_key(t.left.right):
                return Timeout(Timeout(t.left.left, t.right), t.left.right)
        return None

    rule("tout-swap", "timeout", tout_swap)

    def tsd_rev(t):
        # (x>>z).y = (x.y)>>z, the elimination direction for guarded summands
        if isinstance(t, Seq) and isinstance(t.left, Timeout):
            return Timeout(Seq(t.left.left, t.right), t.left.right)
        return None

    rule("tsd-rev", "derived", tsd_rev, derived=True)

    return {r.rule_id: r for r in rules}


def _mk_state_rules(cfg: SpeedConfig):
    """Rules for one state operator, parameterized by the speed."""

    def reception(sigma, a, t):
        if a.kind is ActionKind.PRECV_ABS:
            lo, hi = max2(t, a.t1), a.t2
        else:
            lo = t + a.t1
            hi = INF if is_inf(a.t2) else t + a.t2
        return rcpt(sigma, a.channel, a.datum, lo, hi, a.point, cfg)

    def split(t):
        """(C, time, sigma, head-action, tail-or-None) of an eligible redex."""
        if not isinstance(t, StateOp):
            return None
        body = t.body
        if isinstance(body, Act):
            return t, body.action, None
        if isinstance(body, Seq) and isinstance(body.left, Act):
            return t, body.left.action, body.right
        return None

    def wrap(op, head, tail, time, sigma):
        act = Act(head)
        if tail is None:
            return act
        return Seq(act, StateOp(op.channels, time, sigma, tail))

    def st_adead(t):
        if isinstance(t, StateOp) and isinstance(t.body, ADead):
            u = t.body.time
            return ADead(t.time) if ext_lt(u, t.time) else ADead(u)
        return None

    def st_rdead(t):
        if isinstance(t, StateOp) and isinstance(t.body, RDead):
            return ADead(ext_add(t.time, t.body.time))
        return None

    def st_chan_free(t):
        s = split(t)
        if s is None:
            return None
        op, a, tail = s
        if chan(a) in op.channels:
            return None
        if tail is None:
            return Act(a)
        return Seq(Act(a), StateOp(op.channels, op.time, op.state, tail))

    def st_psend_abs(t):
        s = split(t)
        if s is None:
            return None
        op, a, tail = s
        if a.kind is not ActionKind.PSEND_ABS or chan(a) not in op.channels:
            return None
        if lt(a.t1, op.time):
            return ADead(op.time)
        head = asend(a.channel, a.datum, a.t1, a.point)
        sigma = record_send(op.state, a.channel, a.datum, a.t1, a.point)
        return wrap(op, head, tail, a.t1, sigma)

    def st_psend_rel(t):
        s = split(t)
        if s is None:
            return None
        op, a, tail = s
        if a.kind is not ActionKind.PSEND_REL or chan(a) not in op.channels:
            return None
        u = op.time + a.t1
        head = asend(a.channel, a.datum, u, a.point)
        sigma = record_send(op.state, a.channel, a.datum, u, a.point)
        return wrap(op, head, tail, u, sigma)

    def st_precv_abs(t):
        s = split(t)
        if s is None:
            return None
        op, a, tail = s
        if a.kind is not ActionKind.PRECV_ABS or chan(a) not in op.channels:
            return None
        if ext_le(a.t2, op.time):
            return ADead(op.time)
        v = reception(op.state, a, op.time)
        if not v:
            return ADead(a.t2)
        u = min_rcpt(v)
        head = arecv(a.channel, a.datum, u, a.point)
        return wrap(op, head, tail, u, op.state)

    def st_precv_rel(t):
        s = split(t)
        if s is None:
            return None
        op, a, tail = s
        if a.kind is not ActionKind.PRECV_REL or chan(a) not in op.channels:
            return None
        v = reception(op.state, a, op.time)
        if not v:
            return ADead(ext_add(op.time, a.t2))
        u = min_rcpt(v)
        head = arecv(a.channel, a.datum, u, a.point)
        return wrap(op, head, tail, u, op.state)

    def st_asend(t):
        s = split(t)
        if s is None:
            return None
        op, a, tail = s
        if a.kind is not ActionKind.ASEND or chan(a) not in op.channels:
            return None
        if lt(a.t1, op.time):
            return ADead(op.time)
        # the record is threaded also for already-actual sends, matching
        # the transition rules
        sigma = record_send(op.state, a.channel, a.datum, a.t1, a.point)
        return wrap(op, a, tail, a.t1, sigma)

    def st_arecv(t):
        s = split(t)
        if s is None:
            return None
        op, a, tail = s
        if a.kind is not ActionKind.ARECV or chan(a) not in op.channels:
            return None
        if lt(a.t1, op.time):
            return ADead(op.time)
        return wrap(op, a, tail, a.t1, op.state)

    def st_alt(t):
        if isinstance(t, StateOp) and isinstance(t.body, Alt):
            return Alt(
                StateOp(t.channels, t.time, t.state, t.body.left),
                StateOp(t.channels, t.time, t.state, t.body.right),
            )
        return None

    def st_tout(t):
        if isinstance(t, StateOp) and isinstance(t.body, Timeout):
            return Timeout(
                StateOp(t.channels, t.time, t.state, t.body.left),
                StateOp(t.channels, t.time, t.state, t.body.right),
            )
        return None

    named = {
        "st-adead": st_adead,
        "st-rdead": st_rdead,
        "st-chan-free": st_chan_free,
        "st-psend-abs": st_psend_abs,
        "st-psend-rel": st_psend_rel,
        "st-precv-abs": st_precv_abs,
        "st-precv-rel": st_precv_rel,
        "st-asend": st_asend,
        "st-arecv": st_arecv,
        "st-alt": st_alt,
        "st-tout": st_tout,
    }
    return {
        rid: AxiomRule(rid, "state", fn) for rid, fn in named.items()
    }


def _mk_priority_rules():
    def mp_def(t):
        if isinstance(t, MaxProg):
            return AuxMaxProg(t.pattern, t.body, t.body)
        return None

    def _prio_atom(t):
        return (isinstance(t, Act) and t.action.is_actual) or isinstance(t, ADead)

    def mp_atom(t):
        if isinstance(t, AuxMaxProg) and _prio_atom(t.left) and _prio_atom(t.right):
            if priority_lt(t.pattern, t.left, t.right):
                return ADead(bt(t.right.action))
            return t.left
        return None

    def mp_seq_l(t):
        if isinstance(t, AuxMaxProg) and isinstance(t.left, Seq):
            return Seq(
                AuxMaxProg(t.pattern, t.left.left, t.right),
                MaxProg(t.pattern, t.left.right),
            )
        return None

    def mp_alt_l(t):
        if isinstance(t, AuxMaxProg) and isinstance(t.left, Alt):
            return Alt(
                AuxMaxProg(t.pattern, t.left.left, t.right),
                AuxMaxProg(t.pattern, t.left.right, t.right),
            )
        return None

    def mp_seq_r(t):
        if isinstance(t, AuxMaxProg) and isinstance(t.right, Seq):
            return AuxMaxProg(t.pattern, t.left, t.right.left)
        return None

    def mp_alt_r(t):
        if isinstance(t, AuxMaxProg) and isinstance(t.right, Alt):
            return AuxMaxProg(
                t.pattern, AuxMaxProg(t.pattern, t.left, t.right.left), t.right.right
            )
        return None

    named = {
        "mp-def": mp_def,
        "mp-atom": mp_atom,
        "mp-seq-l": mp_seq_l,
        "mp-alt-l": mp_alt_l,
        "mp-seq-r": mp_seq_r,
        "mp-alt-r": mp_alt_r,
    }
    return {rid: AxiomRule(rid, "priority", fn) for rid, fn in named.items()}


def _mk_rec_rules():
    def rdp(t):
        if isinstance(t, RecConst):
            return unfold(t)
        return None

    return {"rdp": AxiomRule("rdp", "recursion", rdp)}


RULES: dict = {}
RULES.update(_mk_rules())
RULES.update(_mk_state_rules(DEFAULT_SPEED))
RULES.update(_mk_priority_rules())
RULES.update(_mk_rec_rules())


def rules_for(cfg: SpeedConfig) -> dict:
    out = dict(RULES)
    out.update(_mk_state_rules(cfg))
    return out


def apply_axiom(rule_id: str, p: Term, cfg: SpeedConfig = DEFAULT_SPEED) -> Optional[Term]:
    """Apply one directed schema at the outermost matching position, or no-match."""
    table = rules_for(cfg) if rule_id.startswith("st-") else RULES
    rule = table[rule_id]

    def walk(t):
        r = rule.apply(t)
        if r is not None:
            return r
        kids = children(t)
        for i, k in enumerate(kids):
            r = walk(k)
            if r is not None:
                new = list(kids)
                new[i] = r
                return rebuild(t, tuple(new))
        return None

    return walk(p)


# ---------------------------------------------------------------------------
# Normal-form classification.

def _is_shproc_atom(t: Term) -> bool:
    if isinstance(t, (ADead, RDead, Act)):
        return True
    if isinstance(t, Timeout):
        return _is_shproc_atom(t.left) and _is_shproc_atom(t.right)
    return False


def classify(p: Term) -> NormalFormClass:
    """Head-shape classification with the first offending subterm as witness."""
    hproc = True
    for s in alt_summands(p):
        if isinstance(s, ADead):
            continue  # bare timed inaction is fine for both shapes
        head = s.left if isinstance(s, Seq) else s
        if isinstance(head, Act) and head.action.is_actual:
            continue
        hproc = False
        if not _is_shproc_atom(head):
            return NormalFormClass("Other", pretty(s))
    return NormalFormClass("HProc" if hproc else "SHProc")


def is_hproc(p: Term) -> bool:
    return classify(p).kind == "HProc"


def is_shproc(p: Term) -> bool:
    return classify(p).kind in ("HProc", "SHProc")


# ---------------------------------------------------------------------------
# Normalizers.

class Normalizer:
    """Strategy driver over the directed rules, optionally tracing."""

    def __init__(
        self,
        cfg: SpeedConfig = DEFAULT_SPEED,
        unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
        trace: Optional[list] = None,
    ):
        self.cfg = cfg
        self.unfold_budget = unfold_budget
        self._unfolds = 0
        self.trace = trace
        self._global: Optional[Term] = None
        self._state_rules = _mk_state_rules(cfg)

    # -- trace bookkeeping ---------------------------------------------------
    def _start(self, source: Term):
        if self.trace is not None:
            self._global = source

    def note(self, rule_id: str, path: tuple, contractum: Term) -> Term:
        if self.trace is not None:
            before = subterm_at(self._global, path)
            self.trace.append(RewriteStep(rule_id, path, pretty(before)))
            self._global = replace_at(self._global, path, contractum)
        return contractum

    # -- top-level operations ---------------------------------------------
    def shnf(self, p: Term) -> Term:
        self._start(p)
        return self._shnf(p, ())

    def hnf_state(self, channels, time, sigma, body) -> Term:
        root = StateOp(frozenset(channels), time, sigma, body)
        missing = channels_of(body) - root.channels
        if missing:
            raise ChannelCoverage(f"channels outside the operator scope: {sorted(missing)}")
        self._start(root)
        return self._state(root, ())

    def maxpr_eliminate(self, pattern: ActionPattern, p: Term) -> Term:
        root = MaxProg(pattern, p)
        self._start(root)
        return self._maxprog(root, ())

    def normalize(self, p: Term) -> Term:
        self._start(p)
        return self._deep(p, ())

    # -- strategy ------------------------------------------------------------
    def _unfold(self, r: RecConst) -> Term:
        self._unfolds += 1
        if self._unfolds > self.unfold_budget:
            raise BudgetExceeded("recursion unfolding budget exceeded")
        return unfold(r)

    def _shnf(self, p: Term, path: tuple) -> Term:
        if isinstance(p, (Dead, ADead, RDead, Act)):
            return p
        if isinstance(p, Alt):
            left = self._shnf(p.left, path + (0,))
            right = self._shnf(p.right, path + (1,))
            return self._cleanup(Alt(left, right), path)
        if isinstance(p, Seq):
            left = self._shnf(p.left, path + (0,))
            return self._seq_onto(left, p.right, path)
        if isinstance(p, Par):
            t = self.note(
                "par-expand",
                path,
                Alt(LeftMerge(p.left, p.right), LeftMerge(p.right, p.left)),
            )
            return self._shnf_alt_children(t, path)
        if isinstance(p, LeftMerge):
            return self._lmerge(p, path)
        if isinstance(p, Timeout):
            left = self._shnf(p.left, path + (0,))
            right = self._shnf(p.right, path + (1,))
            return self._timeout(Timeout(left, right), path)
        if isinstance(p, StateOp):
            return self._state(p, path)
        if isinstance(p, (MaxProg, AuxMaxProg)):
            return self._maxprog(p, path)
        if isinstance(p, RecConst):
            t = self.note("rdp", path, self._unfold(p))
            return self._shnf(t, path)
        if isinstance(p, Var):
            raise ValueError(f"open term: free variable {p.name}")
        raise TypeError(f"unknown term {p!r}")

    def _shnf_alt_children(self, t: Alt, path: tuple) -> Term:
        left = self._shnf(t.left, path + (0,))
        right = self._shnf(t.right, path + (1,))
        return self._cleanup(Alt(left, right), path)

    def _cleanup(self, t: Term, path: tuple) -> Term:
        c = cleanup_sum(t)
        if c != t:
            return self.note("cleanup-sum", path, c)
        return t

    def _seq_onto(self, left: Term, right: Term, path: tuple) -> Term:
        """Normalize left . right given left already in semi-head form."""
        if isinstance(left, Alt):
            t = self.note(
                "seq-dist-r", path, Alt(Seq(left.left, right), Seq(left.right, right))
            )
            l2 = self._seq_onto(t.left.left, t.left.right, path + (0,))
            r2 = self._seq_onto(t.right.left, t.right.right, path + (1,))
            return self._cleanup(Alt(l2, r2), path)
        if isinstance(left, Dead):
            return self.note("dead-seq", path, Dead())
        if isinstance(left, ADead):
            return self.note("adead-seq", path, left)
        if isinstance(left, RDead):
            return self.note("rdead-seq", path, left)
        if isinstance(left, Seq):
            t = self.note("seq-assoc", path, Seq(left.left, Seq(left.right, right)))
            return t
        # action or time-out atom head
        return Seq(left, right)

    def _lmerge(self, p: LeftMerge, path: tuple) -> Term:
        left = self._shnf(p.left, path + (0,))
        if isinstance(left, Alt):
            t = self.note(
                "lmerge-dist",
                path,
                Alt(LeftMerge(left.left, p.right), LeftMerge(left.right, p.right)),
            )
            l2 = self._lmerge(t.left, path + (0,))
            r2 = self._lmerge(t.right, path + (1,))
            return self._cleanup(Alt(l2, r2), path)
        if isinstance(left, Dead):
            left = self.note("dead-def", path + (0,), RDead(Fraction(0)))
        if isinstance(left, Seq):
            head, tail = left.left, left.right
            t = self.note(
                "lmerge-seq",
                path,
                Seq(Timeout(head, p.right), Par(tail, p.right)),
            )
        else:
            t = self.note("lmerge-atom", path, Seq(Timeout(left, p.right), p.right))
        restrictor = self._shnf(t.left.right, path + (0, 1))
        guard = self._timeout_vs(Timeout(t.left.left, restrictor), path + (0,))
        return self._seq_onto(guard, t.right, path)

    def _timeout(self, p: Timeout, path: tuple) -> Term:
        """Both children already in semi-head form; push the time-out inward."""
        if isinstance(p.left, Alt):
            t = self.note(
                "tout-dist-l",
                path,
                Alt(Timeout(p.left.left, p.right), Timeout(p.left.right, p.right)),
            )
            l2 = self._timeout(t.left, path + (0,))
            r2 = self._timeout(t.right, path + (1,))
            return self._cleanup(Alt(l2, r2), path)
        if isinstance(p.left, Dead):
            left = self.note("dead-def", path + (0,), RDead(Fraction(0)))
            return self._timeout(Timeout(left, p.right), path)
        if isinstance(p.left, Seq):
            t = self.note(
                "tout-seq-l", path, Seq(Timeout(p.left.left, p.right), p.left.right)
            )
            guard = self._timeout_vs(t.left, path + (0,))
            return self._seq_onto(guard, t.right, path)
        return self._timeout_vs(p, path)

    def _timeout_vs(self, p: Timeout, path: tuple) -> Term:
        """Reduce atom >> restrictor as far as the rules go."""
        left, right = p.left, p.right
        if isinstance(right, Alt):
            t = self.note(
                "tout-dist-r",
                path,
                Alt(Timeout(left, right.left), Timeout(left, right.right)),
            )
            l2 = self._timeout_vs(t.left, path + (0,))
            r2 = self._timeout_vs(t.right, path + (1,))
            return self._cleanup(Alt(l2, r2), path)
        if isinstance(right, Dead):
            r2 = self.note("dead-def", path + (1,), RDead(Fraction(0)))
            return self._timeout_vs(Timeout(left, r2), path)
        if isinstance(right, Seq):
            t = self.note("tout-seq-r", path, Timeout(left, right.left))
            return self._timeout_vs(t, path)
        if isinstance(right, Timeout):
            t = self.note(
                "tout-nest-r", path, Timeout(Timeout(left, right.left), right.right)
            )
            inner = self._timeout_vs(t.left, path + (0,))
            return self._timeout_vs(Timeout(inner, t.right), path)
        # right is now an atom
        for rid in (
            "tout-act",
            "tout-adead-join",
            "tout-rdead-join",
            "tout-adead",
            "tout-rdead",
        ):
            r = RULES[rid].apply(Timeout(left, right))
            if r is not None:
                out = self.note(rid, path, r)
                if isinstance(out, Timeout):
                    return self._timeout_vs(out, path)
                return out
        if isinstance(right, Act) and not right.action.is_potential_receive:
            rid = "tout-part-abs" if right.action.is_absolute else "tout-part-rel"
            t = self.note(rid, path, RULES[rid].apply(Timeout(left, right)))
            return self._timeout_vs(t, path)
        # irreducible: mixed timing or a potential receive restrictor
        return Timeout(left, right)

    # -- state operator ---------------------------------------------------
    def _state(self, p: StateOp, path: tuple) -> Term:
        missing = channels_of(p.body) - p.channels
        if missing:
            raise ChannelCoverage(
                f"channels outside the operator scope: {sorted(missing)}"
            )
        body = self._shnf(p.body, path + (0,))
        return self._state_sum(StateOp(p.channels, p.time, p.state, body), path)

    def _state_sum(self, p: StateOp, path: tuple) -> Term:
        if isinstance(p.body, Alt):
            t = self.note(
                "st-alt",
                path,
                Alt(
                    StateOp(p.channels, p.time, p.state, p.body.left),
                    StateOp(p.channels, p.time, p.state, p.body.right),
                ),
            )
            l2 = self._state_sum(t.left, path + (0,))
            r2 = self._state_sum(t.right, path + (1,))
            return self._cleanup(Alt(l2, r2), path)
        return self._state_summand(p, path)

    def _state_summand(self, p: StateOp, path: tuple) -> Term:
        body = p.body
        if isinstance(body, Dead):
            b = self.note("dead-def", path + (0,), RDead(Fraction(0)))
            return self._state_summand(StateOp(p.channels, p.time, p.state, b), path)
        if isinstance(body, Seq) and isinstance(body.left, Dead):
            b = self.note("dead-seq", path + (0,), Dead())
            return self._state_summand(StateOp(p.channels, p.time, p.state, b), path)
        if isinstance(body, Seq) and isinstance(body.left, (ADead, RDead)):
            rid = "adead-seq" if isinstance(body.left, ADead) else "rdead-seq"
            b = self.note(rid, path + (0,), body.left)
            return self._state_summand(StateOp(p.channels, p.time, p.state, b), path)
        if isinstance(body, Timeout):
            t = self.note(
                "st-tout",
                path,
                Timeout(
                    StateOp(p.channels, p.time, p.state, body.left),
                    StateOp(p.channels, p.time, p.state, body.right),
                ),
            )
            left = self._state_sum(t.left, path + (0,))
            right = self._state(t.right, path + (1,))
            return self._timeout_hnf(Timeout(left, right), path)
        if isinstance(body, Seq) and isinstance(body.left, Timeout):
            t = self.note(
                "tsd-rev",
                path + (0,),
                Timeout(Seq(body.left.left, body.right), body.left.right),
            )
            return self._state_summand(
                StateOp(p.channels, p.time, p.state, t), path
            )
        for rid, rule in self._state_rules.items():
            r = rule.apply(p)
            if r is not None:
                return self.note(rid, path, r)
        raise NotEliminable(f"no state-operator rule applies to {pretty(p)}")

    def _timeout_hnf(self, p: Timeout, path: tuple) -> Term:
        """Eliminate a time-out whose operands are head normal forms."""
        out = self._timeout(p, path)
        if classify(out).kind == "Other":
            raise NotEliminable(f"time-out not eliminable: {pretty(out)}")
        return out

    # -- priority operators -------------------------------------------------
    def _maxprog(self, p: Term, path: tuple) -> Term:
        if isinstance(p, MaxProg):
            body = self._deep_body(p.body, path + (0,))
            t = self.note("mp-def", path, AuxMaxProg(p.pattern, body, body))
            return self._aux(t, path)
        body_l = self._deep_body(p.left, path + (0,))
        body_r = self._deep_body(p.right, path + (1,))
        return self._aux(AuxMaxProg(p.pattern, body_l, body_r), path)

    def _deep_body(self, body: Term, path: tuple) -> Term:
        if isinstance(body, StateOp):
            return self._state(body, path)
        if isinstance(body, (MaxProg, AuxMaxProg)):
            return self._maxprog(body, path)
        if classify(body).kind == "HProc":
            return body
        return self._shnf(body, path)

    def _aux(self, p: AuxMaxProg, path: tuple) -> Term:
        if classify(p.left).kind != "HProc" or classify(p.right).kind != "HProc":
            raise NotEliminable(
                "priority elimination needs actualized (head-normal) operands"
            )
        if isinstance(p.left, Alt):
            t = self.note(
                "mp-alt-l",
                path,
                Alt(
                    AuxMaxProg(p.pattern, p.left.left, p.right),
                    AuxMaxProg(p.pattern, p.left.right, p.right),
                ),
            )
            l2 = self._aux(t.left, path + (0,))
            r2 = self._aux(t.right, path + (1,))
            return self._cleanup(Alt(l2, r2), path)
        if isinstance(p.left, Seq):
            t = self.note(
                "mp-seq-l",
                path,
                Seq(
                    AuxMaxProg(p.pattern, p.left.left, p.right),
                    MaxProg(p.pattern, p.left.right),
                ),
            )
            head = self._aux(t.left, path + (0,))
            tail = self._maxpr_tail(t.right, path + (1,))
            return self._seq_onto(head, tail, path)
        return self._aux_atom(p, path)

    def _aux_atom(self, p: AuxMaxProg, path: tuple) -> Term:
        if isinstance(p.right, Alt):
            t = self.note(
                "mp-alt-r",
                path,
                AuxMaxProg(
                    p.pattern,
                    AuxMaxProg(p.pattern, p.left, p.right.left),
                    p.right.right,
                ),
            )
            inner = self._aux_atom(t.left, path + (0,))
            return self._aux_atom(AuxMaxProg(p.pattern, inner, t.right), path)
        if isinstance(p.right, Seq):
            t = self.note("mp-seq-r", path, AuxMaxProg(p.pattern, p.left, p.right.left))
            return self._aux_atom(t, path)
        r = RULES["mp-atom"].apply(p)
        if r is None:
            raise NotEliminable(f"priority not decidable for {pretty(p)}")
        return self.note("mp-atom", path, r)

    def _maxpr_tail(self, t: MaxProg, path: tuple) -> Term:
        body = t.body
        if isinstance(body, Var):
            return t  # the linearization pass renames variables itself
        return self._maxprog(t, path)

    # -- full normalization ----------------------------------------------------
    def _deep(self, p: Term, path: tuple) -> Term:
        if isinstance(p, StateOp):
            h = self._state(p, path)
            return self._deep_tails(h, path)
        if isinstance(p, (MaxProg, AuxMaxProg)):
            h = self._maxprog(p, path)
            return self._deep_tails(h, path)
        sh = self._shnf(p, path)
        return self._deep_tails(sh, path)

    def _deep_tails(self, p: Term, path: tuple) -> Term:
        changed = False
        pieces = []
        for sub, s in _summand_paths(p, path):
            if isinstance(s, Seq) and isinstance(s.right, (StateOp, MaxProg)):
                tail = self._deep(s.right, sub + (1,))
                pieces.append(Seq(s.left, tail))
                changed = changed or tail != s.right
            else:
                pieces.append(s)
        if not changed:
            return p
        return self._cleanup(alt(*pieces), path)


# ---------------------------------------------------------------------------
# Public operations.

def shnf(
    p: Term,
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
    trace: Optional[list] = None,
) -> Term:
    """Semi-head normal form, derivably equal to p."""
    return Normalizer(cfg, unfold_budget, trace).shnf(p)


def hnf_state(
    channels,
    time: Fraction,
    sigma,
    p: Term,
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
    trace: Optional[list] = None,
) -> Term:
    """Head normal form of the state operator applied to p."""
    return Normalizer(cfg, unfold_budget, trace).hnf_state(channels, time, sigma, p)


def maxpr_eliminate(
    pattern: ActionPattern,
    p: Term,
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
    trace: Optional[list] = None,
) -> Term:
    """Remove the priority operators from a head-normal term."""
    return Normalizer(cfg, unfold_budget, trace).maxpr_eliminate(pattern, p)


def normalize(
    p: Term,
    cfg: SpeedConfig = DEFAULT_SPEED,
    unfold_budget: int = DEFAULT_UNFOLD_BUDGET,
    trace: Optional[list] = None,
) -> Term:
    """Normalize recursively, following state-operator tails."""
    return Normalizer(cfg, unfold_budget, trace).normalize(p)


def replay(source: Term, steps, cfg: SpeedConfig = DEFAULT_SPEED) -> Term:
    """Re-apply a recorded trace; the result must equal the normalizer output."""
    table = rules_for(cfg)
    current = source
    for step in steps:
        sub = subterm_at(current, step.path)
        if step.rule == "cleanup-sum":
            new = cleanup_sum(sub)
        elif step.rule == "alt-canonical":
            new = alt_canonical(sub)
        else:
            new = table[step.rule].apply(sub)
            if new is None:
                raise ValueError(f"trace step {step.rule} no longer applies")
        current = replace_at(current, step.path, new)
    return current
