"""Workbench for a space-time process algebra with broadcast communication.

Exact rational arithmetic, process-term construction and parsing,
axiom-driven normalization, structural operational semantics,
linearization to recursive specifications, bisimulation checking, and an
executable positive-acknowledgement retransmission protocol study.
"""

from .meadow import INF, NotRepresentable, Point, Scalar, dist, point, scalar
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
    alt,
    arecv,
    asend,
    precv_abs,
    precv_rel,
    pretty,
    psend_abs,
    psend_rel,
    rec_spec,
    recv_pattern,
    seq,
)
from .comm import EMPTY_STATE, SpeedConfig, rcpt, record_send, send_record
from .syntax import ParseError, parse_term
from .semantics import IdleSet, Stepper, TERM, idle_set, run, step_set

__all__ = [name for name in dir() if not name.startswith("_")]
