"""The positive-acknowledgement-with-retransmission case study.

Sender, receiver and two lossy repeaters, spatially distributed, with
frames carrying an alternating bit.  `build_par` produces the prioritized
state-wrapped composition exactly as specified; `closed_system` adds a
driver that offers the input data on ch1 (synchronizing on the delivered
data and forwarded acknowledgements it can overhear) and consumes
deliveries on ch2, so the whole system is executable under the
transition rules.

`check_delivery` explores the closed system exhaustively under a
fairness bound on consecutive repeater errors and verifies that every
completed fair trace delivers the input sequence in order, exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from .comm import SpeedConfig
from .meadow import Point, dist, le, lt, point, scalar
from .semantics import Stepper, Terminated, advance
from .terms import (
    Act,
    ActionKind,
    Action,
    Alt,
    MaxProg,
    Par,
    RecConst,
    RecSpec,
    Seq,
    StateOp,
    Term,
    Var,
    alt,
    bt,
    precv_rel,
    psend_rel,
    recv_pattern,
    seq,
    term_key,
)

CH1, CH2, CH3, CH4, CH5, CH6 = "ch1", "ch2", "ch3", "ch4", "ch5", "ch6"
PROTOCOL_CHANNELS = frozenset({CH3, CH4, CH5, CH6})
ALL_CHANNELS = frozenset({CH1, CH2, CH3, CH4, CH5, CH6})
ACK = "ack"
ERR = "err"


def frame(d: str, b: int) -> str:
    return f"{d}#{b}"


@dataclass(frozen=True)
class ParParams:
    """Geometry, delays, timeout, speed, and exploration bounds."""

    data: tuple = ("d1", "d2")
    xi_s: Point = point(0, 0, 0)
    xi_k: Point = point(1, 0, 0)
    xi_r: Point = point(2, 0, 0)
    xi_l: Point = point(1, 0, 0)
    t_s: Fraction = Fraction(1)
    t_k: Fraction = Fraction(1)
    t_l: Fraction = Fraction(1)
    t_r: Fraction = Fraction(1)
    t_r2: Fraction = Fraction(1)
    timeout: Fraction = Fraction(10)
    speed: Fraction = Fraction(1)
    retransmission_bound: int = 3
    depth: int = 40

    def __post_init__(self):
        for delay in (self.t_s, self.t_k, self.t_l, self.t_r, self.t_r2):
            if lt(delay, Fraction(0)):
                raise ValueError("delays must be nonnegative")
        if not lt(Fraction(0), self.timeout):
            raise ValueError("timeout must be positive")
        if not self.data:
            raise ValueError("need at least one datum")

    @property
    def cfg(self) -> SpeedConfig:
        return SpeedConfig(self.speed)


def sender(params: ParParams) -> RecConst:
    eqs = [("S", Var("S0"))]
    for b in (0, 1):
        eqs.append(
            (
                f"S{b}",
                alt(
                    *[
                        Seq(
                            Act(precv_rel(CH1, d, 0, None_inf(), params.xi_s)),
                            Var(f"Sp_{d}_{b}"),
                        )
                        for d in params.data
                    ]
                ),
            )
        )
        for d in params.data:
            eqs.append(
                (
                    f"Sp_{d}_{b}",
                    Seq(
                        Act(psend_rel(CH3, frame(d, b), params.t_s, params.xi_s)),
                        Var(f"Spp_{d}_{b}"),
                    ),
                )
            )
            eqs.append(
                (
                    f"Spp_{d}_{b}",
                    Alt(
                        Seq(
                            Act(
                                precv_rel(CH5, ACK, 0, params.timeout, params.xi_s)
                            ),
                            Var(f"S{1 - b}"),
                        ),
                        Seq(
                            Act(
                                psend_rel(CH3, frame(d, b), params.timeout, params.xi_s)
                            ),
                            Var(f"Spp_{d}_{b}"),
                        ),
                    ),
                )
            )
    return RecConst("S", RecSpec(tuple(eqs)))


def receiver(params: ParParams) -> RecConst:
    eqs = [("R", Var("R0"))]
    for b in (0, 1):
        right = [
            Seq(
                Act(precv_rel(CH4, frame(d, b), 0, None_inf(), params.xi_r)),
                Var(f"Rp_{d}_{b}"),
            )
            for d in params.data
        ]
        wrong = [
            Seq(
                Act(precv_rel(CH4, frame(d, 1 - b), 0, None_inf(), params.xi_r)),
                Var(f"Rpp_{b}"),
            )
            for d in params.data
        ]
        eqs.append((f"R{b}", alt(*(right + wrong))))
        for d in params.data:
            eqs.append(
                (
                    f"Rp_{d}_{b}",
                    Seq(
                        Act(psend_rel(CH2, d, params.t_r, params.xi_r)),
                        Var(f"Rpp_{1 - b}"),
                    ),
                )
            )
        eqs.append(
            (
                f"Rpp_{b}",
                Seq(
                    Act(psend_rel(CH6, ACK, params.t_r2, params.xi_r)),
                    Var(f"R{b}"),
                ),
            )
        )
    return RecConst("R", RecSpec(tuple(eqs)))


def repeater_k(params: ParParams) -> RecConst:
    receive = [
        Seq(
            Act(precv_rel(CH3, frame(d, b), 0, None_inf(), params.xi_k)),
            Var(f"Kp_{d}_{b}"),
        )
        for d in params.data
        for b in (0, 1)
    ]
    eqs = [("K", alt(*receive))]
    for d in params.data:
        for b in (0, 1):
            eqs.append(
                (
                    f"Kp_{d}_{b}",
                    Alt(
                        Seq(
                            Act(psend_rel(CH4, frame(d, b), params.t_k, params.xi_k)),
                            Var("K"),
                        ),
                        Seq(
                            Act(psend_rel(CH4, ERR, params.t_k, params.xi_k)),
                            Var("K"),
                        ),
                    ),
                )
            )
    return RecConst("K", RecSpec(tuple(eqs)))


def repeater_l(params: ParParams) -> RecConst:
    eqs = (
        (
            "L",
            Seq(Act(precv_rel(CH6, ACK, 0, None_inf(), params.xi_l)), Var("Lp")),
        ),
        (
            "Lp",
            Alt(
                Seq(Act(psend_rel(CH5, ACK, params.t_l, params.xi_l)), Var("L")),
                Seq(Act(psend_rel(CH5, ERR, params.t_l, params.xi_l)), Var("L")),
            ),
        ),
    )
    return RecConst("L", RecSpec(eqs))


def None_inf():
    from .meadow import INF

    return INF


def protocol_pattern():
    """Priority set: every actual receive on the internal channels."""
    return recv_pattern(CH3, CH4, CH5, CH6)


def build_par(params: ParParams) -> Term:
    """The prioritized protocol: priorities over the state-wrapped parallel
    composition of sender, repeaters and receiver."""
    body = Par(Par(Par(sender(params), repeater_k(params)), repeater_l(params)), receiver(params))
    wrapped = StateOp(PROTOCOL_CHANNELS, Fraction(0), frozenset(), body)
    return MaxProg(protocol_pattern(), wrapped)


def cycle_time(params: ParParams) -> Fraction:
    """One full protocol cycle: frame out, ack back."""
    v = params.speed
    return (
        dist(params.xi_s, params.xi_k) / v
        + params.t_k
        + dist(params.xi_k, params.xi_r) / v
        + params.t_r
        + params.t_r2
        + dist(params.xi_r, params.xi_l) / v
        + params.t_l
        + dist(params.xi_l, params.xi_s) / v
    )


def cycle_condition(params: ParParams) -> bool:
    """The timeout exceeds a complete protocol cycle (strictly)."""
    return lt(cycle_time(params), params.timeout)


def driver(params: ParParams) -> Term:
    """Environment: offer each datum on ch1, consume its delivery on ch2,
    then overhear the acknowledgement passing on ch5 before the next offer.

    The driver sits at the sender's point, so an offer is hearable exactly
    at its own instant; synchronizing on the overheard acknowledgement
    guarantees the sender is listening again before the next offer.
    """
    steps = []
    for i, d in enumerate(params.data):
        delay = Fraction(0) if i == 0 else Fraction(1)
        steps.append(Act(psend_rel(CH1, d, delay, params.xi_s)))
        steps.append(Act(precv_rel(CH2, d, 0, None_inf(), params.xi_s)))
        if i + 1 < len(params.data):
            steps.append(Act(precv_rel(CH5, ACK, 0, None_inf(), params.xi_s)))
    return seq(*steps)


def closed_system(params: ParParams, with_priority: bool = True) -> Term:
    """Protocol plus driver under a state operator covering all channels."""
    body = Par(
        Par(Par(Par(sender(params), repeater_k(params)), repeater_l(params)), receiver(params)),
        driver(params),
    )
    wrapped = StateOp(ALL_CHANNELS, Fraction(0), frozenset(), body)
    if with_priority:
        return MaxProg(protocol_pattern(), wrapped)
    return wrapped


# ---------------------------------------------------------------------------
# Exploration.

@dataclass(frozen=True)
class ExploredTrace:
    events: tuple  # of (time, Action) in order
    outcome: str  # "end" | "cut"
    deliveries: tuple
    k_errors: int
    l_errors: int
    retransmission_after_error: bool
    skipped_reception: bool


@dataclass(frozen=True)
class DeliveryReport:
    ok: bool
    violation: Optional[ExploredTrace]
    traces: int
    completed: int
    truncated: int
    retransmission_witness: bool


def _is_err_send(a: Action, channel: str) -> bool:
    return a.kind is ActionKind.ASEND and a.channel == channel and a.datum == ERR


def _is_pass_send(a: Action, channel: str) -> bool:
    return a.kind is ActionKind.ASEND and a.channel == channel and a.datum != ERR


def explore(
    params: ParParams,
    with_priority: bool = True,
    depth: Optional[int] = None,
    max_traces: int = 250_000,
) -> tuple:
    """All fair maximal traces of the closed system, deterministically ordered.

    Fairness: a repeater may not err more than `retransmission_bound`
    times in a row; branches beyond the bound are pruned.
    """
    depth = params.depth if depth is None else depth
    stepper = Stepper(params.cfg)
    system = closed_system(params, with_priority)
    pattern = protocol_pattern()
    out: list = []

    def fair(a: Action, k_streak: int, l_streak: int):
        if _is_err_send(a, CH4):
            k_streak += 1
        elif _is_pass_send(a, CH4):
            k_streak = 0
        if _is_err_send(a, CH5):
            l_streak += 1
        elif _is_pass_send(a, CH5):
            l_streak = 0
        bound = params.retransmission_bound
        return (k_streak <= bound and l_streak <= bound), k_streak, l_streak

    def walk(term, t, sigma, events, k_streak, l_streak, k_err, l_err, retrans, skipped, level):
        if len(out) >= max_traces:
            return
        transitions = sorted(
            stepper.steps(term, t, sigma), key=lambda tr: term_key(Act(tr.action))
        )
        if not transitions or level >= depth:
            outcome = "end" if not transitions else "cut"
            deliveries = tuple(
                a.datum for _, a in events if a.kind is ActionKind.ASEND and a.channel == CH2
            )
            out.append(
                ExploredTrace(
                    tuple(events), outcome, deliveries, k_err, l_err, retrans, skipped
                )
            )
            return
        enabled_h = [
            bt(tr.action) for tr in transitions if pattern.matches(tr.action)
        ]
        earliest_h = min(enabled_h) if enabled_h else None
        for a, succ in transitions:
            ok, ks, ls = fair(a, k_streak, l_streak)
            if not ok:
                continue
            skip_here = earliest_h is not None and lt(earliest_h, bt(a))
            seen_err = k_err + (1 if _is_err_send(a, CH4) else 0)
            retrans_here = retrans or (
                k_err > 0 and _is_pass_send(a, CH3)
            )
            t2, sigma2 = advance(t, sigma, a)
            nxt_events = events + [(bt(a), a)]
            if isinstance(succ, Terminated):
                deliveries = tuple(
                    d.datum
                    for _, d in nxt_events
                    if d.kind is ActionKind.ASEND and d.channel == CH2
                )
                out.append(
                    ExploredTrace(
                        tuple(nxt_events),
                        "end",
                        deliveries,
                        seen_err,
                        l_err + (1 if _is_err_send(a, CH5) else 0),
                        retrans_here,
                        skipped or skip_here,
                    )
                )
            else:
                walk(
                    succ,
                    t2,
                    sigma2,
                    nxt_events,
                    ks,
                    ls,
                    seen_err,
                    l_err + (1 if _is_err_send(a, CH5) else 0),
                    retrans_here,
                    skipped or skip_here,
                    level + 1,
                )

    walk(system, Fraction(0), frozenset(), [], 0, 0, 0, 0, False, False, 0)
    return tuple(out)


def check_delivery(params: ParParams, inputs: Optional[tuple] = None) -> DeliveryReport:
    """Verify loss-free, duplicate-free, in-order delivery over all fair traces."""
    inputs = tuple(params.data if inputs is None else inputs)
    if inputs != tuple(params.data):
        params = replace(params, data=inputs)
    traces = explore(params, with_priority=True)
    completed = truncated = 0
    witness = False
    violation = None
    for tr in traces:
        witness = witness or tr.retransmission_after_error
        if tr.outcome == "end":
            completed += 1
            if tr.deliveries != inputs and violation is None:
                violation = tr
        else:
            truncated += 1
            n = len(tr.deliveries)
            if tr.deliveries != inputs[:n] and violation is None:
                violation = tr
    return DeliveryReport(
        ok=violation is None,
        violation=violation,
        traces=len(traces),
        completed=completed,
        truncated=truncated,
        retransmission_witness=witness,
    )


def find_reception_skip(params: ParParams, with_priority: bool) -> Optional[ExploredTrace]:
    """A trace in which an enabled prioritized reception instant passes unused."""
    for tr in explore(params, with_priority=with_priority):
        if tr.skipped_reception:
            return tr
    return None
