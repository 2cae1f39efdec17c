"""Communication states and the broadcast reception machinery.

A communication state is the finite set of all sends performed so far:
(channel, datum, send time, send point).  A datum sent at time s' from
point xi' is hearable at point xi at exactly one instant, s' plus the
travel time dist(xi, xi')/v.  The reception-time set collects, for a
receive window, every such instant that falls inside it.

Also here: the time-indexed actual-action test and the priority ordering
on atomic terms that drives the maximal-progress operators.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .meadow import ExtScalar, Point, dist, ext_le, le, lt, scalar
from .terms import Act, ADead, ActionPattern, Action, Term, bt
from . import meadow


class SendRecord(NamedTuple):
    channel: str
    datum: str
    time: Fraction
    point: Point


CommState = frozenset
EMPTY_STATE: CommState = frozenset()


def send_record(c, d, t, xi) -> SendRecord:
    return SendRecord(c, d, scalar(t), xi)


def record_send(sigma: CommState, c, d, t, xi) -> CommState:
    """The state after one more send; idempotent set insertion."""
    return sigma | {send_record(c, d, t, xi)}


@dataclass(frozen=True)
class SpeedConfig:
    """Global transmission speed, strictly positive."""

    speed: Fraction = Fraction(1)

    def __post_init__(self):
        if not lt(meadow.ZERO, self.speed):
            raise ValueError("transmission speed must be positive")


DEFAULT_SPEED = SpeedConfig()


def rcpt(
    sigma: CommState,
    c: str,
    d: str,
    lo: Fraction,
    hi: ExtScalar,
    xi: Point,
    cfg: SpeedConfig = DEFAULT_SPEED,
) -> frozenset:
    """Reception instants for datum d on channel c at point xi within [lo, hi].

    An instant s qualifies when some record (c, d, s', xi') has s' <= hi and
    (s - s') * v = dist(xi, xi'), i.e. s = s' + dist(xi, xi')/v.
    """
    out = set()
    for rec in sigma:
        if rec.channel != c or rec.datum != d:
            continue
        if not ext_le(rec.time, hi):
            continue
        s = rec.time + dist(xi, rec.point) / cfg.speed
        if le(lo, s) and ext_le(s, hi):
            out.add(s)
    return frozenset(out)


def min_rcpt(values: frozenset) -> Fraction:
    """Fold the meadow minimum over a nonempty reception-time set."""
    it = iter(sorted(values, key=lambda x: (x.numerator, x.denominator)))
    out = next(it)
    for v in it:
        out = meadow.min2(out, v)
    return out


def in_aact_at(a: Action, t: Fraction) -> bool:
    """Membership in the set of actual actions timed at t."""
    return a.is_actual and bt(a) == t


def priority_lt(pattern: ActionPattern, alpha: Term, alpha2: Term) -> bool:
    """The ordering under which alpha2 takes priority over alpha.

    Holds iff alpha2 is an actual H-action and either alpha is an actual
    action or absolutely timed inaction that idles longer, or both are
    actual actions at the same instant with alpha outside H.
    """
    if not (isinstance(alpha2, Act) and alpha2.action.is_actual):
        return False
    if not pattern.matches(alpha2.action):
        return False
    t2 = bt(alpha2.action)
    if isinstance(alpha, Act) and alpha.action.is_actual:
        t1 = bt(alpha.action)
        if lt(t2, t1):
            return True
        return t1 == t2 and not pattern.matches(alpha.action)
    if isinstance(alpha, ADead):
        return ext_lt_time(t2, alpha.time)
    return False


def ext_lt_time(t: Fraction, u: ExtScalar) -> bool:
    return meadow.ext_lt(t, u)
