"""Requester and requestee request state machines.

Transitions are pure: ``(record, event, now) -> (record, effects)``. An
event that is not allowed in the current state raises :class:`IllegalEvent`
and leaves the record untouched. Protocol messages (``Msg_*``) and deadline
events reaching a record that is already closed are absorbed silently,
since the transport may deliver duplicates or stale notices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

from .trust import Task


class IllegalEvent(ValueError):
    pass


class Role(Enum):
    REQUESTER = "requester"
    REQUESTEE = "requestee"


class RequesterState(Enum):
    LOOKING_FOR_VOLUNTEERS = "looking for volunteers"
    PENDING_ASSIGNMENT_1 = "pending assignment 1"
    PENDING_ASSIGNMENT_2 = "pending assignment 2"
    ASSIGNED = "assigned"
    COMPLETED = "completed"
    RATED = "rated"
    CANCELLED = "cancelled"
    EXPIRED = "expired"


class RequesteeState(Enum):
    UNANSWERED = "unanswered"
    DECLINED = "declined"
    ACCEPTED = "accepted"
    COMMITTED = "committed"
    HELP_NOT_NEEDED = "help not needed"
    COMPLETED = "completed"
    CANCELLED = "cancelled"
    EXPIRED = "expired"


class EventKind(Enum):
    CLICK_HELP = "Click_Help"
    MSG_VOLUNTEER = "Msg_Volunteer"
    CLICK_ASSIGN = "Click_Assign"
    MSG_DONE = "Msg_Done"
    PASSED_END_DATE = "Passed_EndDate"
    CLICK_RATE = "Click_Rate"
    PASSED_DEADLINE_V = "Passed_DeadlineV"
    PASSED_DEADLINE_A = "Passed_DeadlineA"
    CLICK_CANCEL = "Click_Cancel"
    MSG_CANCEL = "Msg_Cancel"
    CLICK_CHAT = "Click_Chat"
    MSG_CHAT = "Msg_Chat"
    CLICK_CALL = "Click_Call"
    MSG_HELP = "Msg_Help"
    CLICK_DECLINE = "Click_Decline"
    CLICK_ACCEPT = "Click_Accept"
    MSG_ASSIGNED = "Msg_Assigned"
    MSG_NOT_NEEDED = "Msg_NotNeeded"
    MSG_CANCELLED = "Msg_Cancelled"
    CLICK_DONE = "Click_Done"

    @property
    def is_message(self) -> bool:
        return self.value.startswith("Msg_")

    @property
    def is_deadline(self) -> bool:
        return self.value.startswith("Passed_")


R = RequesterState
E = RequesteeState
K = EventKind

REQUESTER_TERMINAL = frozenset({R.RATED, R.CANCELLED, R.EXPIRED})
REQUESTEE_TERMINAL = frozenset({E.HELP_NOT_NEEDED, E.COMPLETED, E.CANCELLED, E.EXPIRED})
CHAT_EVENTS = frozenset({K.CLICK_CHAT, K.MSG_CHAT, K.CLICK_CALL})
DEADLINE_ORDER = (K.PASSED_DEADLINE_V, K.PASSED_DEADLINE_A, K.PASSED_END_DATE)

COLORS = {
    R.LOOKING_FOR_VOLUNTEERS: "yellow",
    R.PENDING_ASSIGNMENT_1: "green",
    R.PENDING_ASSIGNMENT_2: "red",
    R.ASSIGNED: "yellow",
    R.COMPLETED: "green",
    R.RATED: "grey",
    R.CANCELLED: "grey",
    R.EXPIRED: "grey",
    E.UNANSWERED: "green",
    E.DECLINED: "grey",
    E.ACCEPTED: "yellow",
    E.COMMITTED: "red",
    E.HELP_NOT_NEEDED: "grey",
    E.COMPLETED: "grey",
    E.CANCELLED: "grey",
    E.EXPIRED: "grey",
}


@dataclass(frozen=True)
class LifecycleEvent:
    kind: EventKind
    actor: str
    task_id: str
    volunteer: Optional[str] = None  # Click_Assign target
    value: Optional[int] = None  # Click_Rate score
    excluded: tuple[str, ...] = ()  # Msg_NotNeeded: members it does not concern


@dataclass(frozen=True)
class Effect:
    """Side effect requested by a transition.

    ``kind`` is ``"flood"`` (``message`` is a protocol message type name),
    ``"send"`` (``message`` is a lifecycle event kind delivered to ``to``) or
    ``"record_rating"``.
    """

    kind: str
    message: Optional[str] = None
    to: Optional[str] = None
    excluded: tuple[str, ...] = ()
    value: Optional[int] = None

    def label(self) -> str:
        if self.kind == "flood":
            return f"flood:{self.message}"
        if self.kind == "send":
            return f"send:{self.message}"
        return self.kind


@dataclass
class RequestRecord:
    task_id: str
    role: Role
    state: RequesterState | RequesteeState
    owner: str
    requester: str
    volunteer_by: float
    assign_by: float
    end_date: float
    task: Optional[Task] = None
    volunteers: tuple[str, ...] = ()
    chosen: Optional[str] = None
    fired: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.volunteer_by <= self.assign_by <= self.end_date:
            raise ValueError(
                f"deadlines out of order: {self.volunteer_by!r}, {self.assign_by!r}, {self.end_date!r}"
            )
        if self.chosen is not None and self.chosen not in self.volunteers:
            raise ValueError(f"chosen volunteer {self.chosen!r} is not among {self.volunteers!r}")

    @property
    def color(self) -> str:
        return color_of(self)

    @property
    def terminal(self) -> bool:
        return self.state in REQUESTER_TERMINAL or self.state in REQUESTEE_TERMINAL


def default_assign_by(volunteer_by: float, end_date: float) -> float:
    return (volunteer_by + end_date) / 2


def new_requester_record(owner, task_id, volunteer_by, end_date, task=None, assign_by=None) -> RequestRecord:
    return RequestRecord(
        task_id=task_id,
        role=Role.REQUESTER,
        state=R.LOOKING_FOR_VOLUNTEERS,
        owner=owner,
        requester=owner,
        volunteer_by=volunteer_by,
        assign_by=default_assign_by(volunteer_by, end_date) if assign_by is None else assign_by,
        end_date=end_date,
        task=task,
    )


def new_requestee_record(owner, requester, task_id, volunteer_by, end_date, task=None, assign_by=None) -> RequestRecord:
    return RequestRecord(
        task_id=task_id,
        role=Role.REQUESTEE,
        state=E.UNANSWERED,
        owner=owner,
        requester=requester,
        volunteer_by=volunteer_by,
        assign_by=default_assign_by(volunteer_by, end_date) if assign_by is None else assign_by,
        end_date=end_date,
        task=task,
    )


def color_of(rec: RequestRecord) -> str:
    return COLORS[rec.state]


def _illegal(rec: RequestRecord, ev: LifecycleEvent, why: str = "") -> IllegalEvent:
    msg = f"{ev.kind.value} not allowed in state {rec.state.value!r} of {rec.role.value} {rec.task_id!r}"
    return IllegalEvent(f"{msg}: {why}" if why else msg)


def _without(volunteers: tuple[str, ...], who: str) -> tuple[str, ...]:
    return tuple(v for v in volunteers if v != who)


def requester_transition(rec: RequestRecord, ev: LifecycleEvent, now: float):
    """Apply ``ev`` to a requester-side record; returns ``(record, effects)``."""
    if rec.role is not Role.REQUESTER:
        raise IllegalEvent(f"record {rec.task_id!r} is not a requester record")
    s, k = rec.state, ev.kind
    stay = (rec, [])

    if s in REQUESTER_TERMINAL:
        if k.is_message or k.is_deadline:
            return stay
        raise _illegal(rec, ev, "request is closed")

    if k is K.MSG_VOLUNTEER:
        if s in (R.LOOKING_FOR_VOLUNTEERS, R.PENDING_ASSIGNMENT_1):
            vols = rec.volunteers if ev.actor in rec.volunteers else rec.volunteers + (ev.actor,)
            return replace(rec, state=R.PENDING_ASSIGNMENT_1, volunteers=vols), []
        raise _illegal(rec, ev, "no longer accepting volunteers")

    if k is K.CLICK_ASSIGN:
        if s in (R.PENDING_ASSIGNMENT_1, R.PENDING_ASSIGNMENT_2):
            if ev.volunteer not in rec.volunteers:
                raise _illegal(rec, ev, f"{ev.volunteer!r} has not volunteered")
            return replace(rec, state=R.ASSIGNED, chosen=ev.volunteer), [
                Effect("send", K.MSG_ASSIGNED.value, to=ev.volunteer),
                Effect("flood", "NOTNEEDED", excluded=(ev.volunteer,)),
            ]
        raise _illegal(rec, ev)

    if k is K.PASSED_DEADLINE_V:
        if s is R.LOOKING_FOR_VOLUNTEERS:
            return replace(rec, state=R.EXPIRED), []
        if s is R.PENDING_ASSIGNMENT_1:
            return replace(rec, state=R.PENDING_ASSIGNMENT_2), []
        return stay

    if k is K.PASSED_DEADLINE_A:
        if s is R.PENDING_ASSIGNMENT_2:
            return replace(rec, state=R.EXPIRED), []
        return stay

    if k is K.PASSED_END_DATE:
        if s is R.ASSIGNED:
            return replace(rec, state=R.COMPLETED), []
        return stay

    if k is K.MSG_DONE:
        if s is R.ASSIGNED and ev.actor == rec.chosen:
            return replace(rec, state=R.COMPLETED), []
        raise _illegal(rec, ev)

    if k is K.CLICK_RATE:
        if s is R.COMPLETED:
            if isinstance(ev.value, bool) or not isinstance(ev.value, int) or not 1 <= ev.value <= 7:
                raise _illegal(rec, ev, f"rating {ev.value!r} outside 1..7")
            return replace(rec, state=R.RATED), [Effect("record_rating", to=rec.chosen, value=ev.value)]
        raise _illegal(rec, ev)

    if k is K.CLICK_CANCEL:
        if s in (R.LOOKING_FOR_VOLUNTEERS, R.PENDING_ASSIGNMENT_1, R.PENDING_ASSIGNMENT_2):
            return replace(rec, state=R.CANCELLED), [Effect("flood", "CANCELLED")]
        if s is R.ASSIGNED:
            return replace(rec, state=R.CANCELLED), [Effect("send", K.MSG_CANCELLED.value, to=rec.chosen)]
        raise _illegal(rec, ev, "request already completed")

    if k is K.MSG_CANCEL:
        if s is R.COMPLETED:
            raise _illegal(rec, ev, "request already completed")
        if ev.actor not in rec.volunteers:
            return stay
        if s is R.ASSIGNED:
            if ev.actor == rec.chosen:
                return replace(rec, state=R.CANCELLED), []
            return replace(rec, volunteers=_without(rec.volunteers, ev.actor)), []
        vols = _without(rec.volunteers, ev.actor)
        if vols:
            return replace(rec, volunteers=vols), []
        if s is R.PENDING_ASSIGNMENT_1 and now < rec.volunteer_by:
            return replace(rec, state=R.LOOKING_FOR_VOLUNTEERS, volunteers=vols), []
        return replace(rec, state=R.CANCELLED, volunteers=vols), [Effect("flood", "CANCELLED")]

    if k in CHAT_EVENTS:
        if s in (R.PENDING_ASSIGNMENT_1, R.PENDING_ASSIGNMENT_2, R.ASSIGNED):
            return stay
        raise _illegal(rec, ev, "no volunteer to talk to")

    raise _illegal(rec, ev, "not a requester event")


def requestee_transition(rec: RequestRecord, ev: LifecycleEvent, now: float):
    """Apply ``ev`` to a requestee-side record; returns ``(record, effects)``."""
    if rec.role is not Role.REQUESTEE:
        raise IllegalEvent(f"record {rec.task_id!r} is not a requestee record")
    s, k = rec.state, ev.kind
    stay = (rec, [])

    if s in REQUESTEE_TERMINAL:
        if k.is_message or k.is_deadline:
            return stay
        raise _illegal(rec, ev, "request is closed")

    if k is K.MSG_HELP:
        return stay

    if k is K.CLICK_ACCEPT:
        if s in (E.UNANSWERED, E.DECLINED):
            return replace(rec, state=E.ACCEPTED), [Effect("send", K.MSG_VOLUNTEER.value, to=rec.requester)]
        raise _illegal(rec, ev)

    if k is K.CLICK_DECLINE:
        if s is E.UNANSWERED:
            return replace(rec, state=E.DECLINED), []
        raise _illegal(rec, ev)

    if k is K.CLICK_CANCEL:
        withdraw = [Effect("send", K.MSG_CANCEL.value, to=rec.requester)]
        if s is E.ACCEPTED:
            nxt = E.DECLINED if now < rec.volunteer_by else E.CANCELLED
            return replace(rec, state=nxt), withdraw
        if s is E.COMMITTED:
            return replace(rec, state=E.CANCELLED), withdraw
        raise _illegal(rec, ev, "not volunteering")

    if k is K.MSG_ASSIGNED:
        if s is E.ACCEPTED:
            return replace(rec, state=E.COMMITTED), []
        raise _illegal(rec, ev)

    if k is K.MSG_NOT_NEEDED:
        if rec.owner in ev.excluded or s is E.COMMITTED:
            return stay
        return replace(rec, state=E.HELP_NOT_NEEDED), []

    if k is K.PASSED_DEADLINE_V:
        if s in (E.UNANSWERED, E.DECLINED):
            return replace(rec, state=E.EXPIRED), []
        return stay

    if k is K.PASSED_DEADLINE_A:
        if s is E.ACCEPTED:
            return replace(rec, state=E.EXPIRED), []
        return stay

    if k is K.PASSED_END_DATE:
        if s is E.COMMITTED:
            return replace(rec, state=E.COMPLETED), []
        return stay

    if k is K.CLICK_DONE:
        if s is E.COMMITTED:
            return replace(rec, state=E.COMPLETED), [Effect("send", K.MSG_DONE.value, to=rec.requester)]
        raise _illegal(rec, ev)

    if k is K.MSG_CANCELLED:
        return replace(rec, state=E.CANCELLED), []

    if k in CHAT_EVENTS:
        if s in (E.ACCEPTED, E.COMMITTED):
            return stay
        raise _illegal(rec, ev, "not volunteering")

    raise _illegal(rec, ev, "not a requestee event")


def transition(rec: RequestRecord, ev: LifecycleEvent, now: float):
    if rec.role is Role.REQUESTER:
        return requester_transition(rec, ev, now)
    return requestee_transition(rec, ev, now)


def deadline_of(rec: RequestRecord, kind: EventKind) -> float:
    return {
        K.PASSED_DEADLINE_V: rec.volunteer_by,
        K.PASSED_DEADLINE_A: rec.assign_by,
        K.PASSED_END_DATE: rec.end_date,
    }[kind]


def fire_deadlines(records: Iterable[RequestRecord], clock: float) -> list[tuple[RequestRecord, LifecycleEvent]]:
    """Deadline events newly crossed at ``clock``, each emitted once per record.

    Marks the emitted deadlines on the records themselves, so calling again
    at the same clock yields nothing.
    """
    due = []
    for idx, rec in enumerate(records):
        for rank, kind in enumerate(DEADLINE_ORDER):
            if kind not in rec.fired and clock >= deadline_of(rec, kind):
                due.append((deadline_of(rec, kind), rank, idx, rec, kind))
                rec.fired = rec.fired | {kind}
    due.sort(key=lambda item: item[:3])
    return [(rec, LifecycleEvent(kind, rec.owner, rec.task_id)) for _, _, _, rec, kind in due]


def log_line(clock: float, node: str, task_id: str, event: EventKind, old, new) -> str:
    """One line of the append-only transition log."""
    return json.dumps(
        {"clock": clock, "node": node, "task_id": task_id, "event": event.value, "old": old.value, "new": new.value},
        sort_keys=True,
    )
