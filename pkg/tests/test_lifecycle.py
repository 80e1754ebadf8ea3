import csv
import json
from dataclasses import replace

import pytest

from uhelp.lifecycle import (
    CHAT_EVENTS,
    COLORS,
    EventKind,
    IllegalEvent,
    LifecycleEvent,
    RequesteeState,
    RequesterState,
    Role,
    color_of,
    fire_deadlines,
    log_line,
    new_requestee_record,
    new_requester_record,
    transition,
)

from conftest import DATA

K = EventKind
V_BY, A_BY, END = 10.0, 20.0, 30.0


def load_golden():
    with (DATA / "lifecycle_golden.csv").open(newline="") as fh:
        return list(csv.DictReader(fh))


GOLDEN = load_golden()


def golden_case(row):
    """Build (record, event, now) for one golden row from its role, state and context."""
    role, ctx = Role(row["role"]), row["context"]
    kind = EventKind(row["event"])
    now = 15.0 if ctx in ("sole_after_v", "after_v") else 5.0
    if role is Role.REQUESTER:
        state = RequesterState(row["state"])
        rec = new_requester_record("r", "t1", V_BY, END)
        vols, chosen = (), None
        if state is not RequesterState.LOOKING_FOR_VOLUNTEERS:
            vols = ("v1",) if ctx.startswith("sole") else ("v1", "v2")
        if state in (RequesterState.ASSIGNED, RequesterState.COMPLETED):
            chosen = "v1"
        rec = replace(rec, state=state, volunteers=vols, chosen=chosen)
        actor = {K.MSG_VOLUNTEER: "v3", K.MSG_DONE: "v1", K.MSG_CANCEL: "v1"}.get(kind, "r")
        if ctx == "stranger":
            actor = "v9" if kind is K.MSG_CANCEL else actor
        if ctx == "other_volunteer":
            actor = "v2"
        volunteer = "v9" if ctx == "stranger" else "v1"
        ev = LifecycleEvent(kind, actor, "t1", volunteer=volunteer if kind is K.CLICK_ASSIGN else None,
                            value=6 if kind is K.CLICK_RATE else None)
    else:
        rec = replace(new_requestee_record("e1", "r", "t1", V_BY, END), state=RequesteeState(row["state"]))
        actor = "e1" if kind.value.startswith("Click_") else "r"
        ev = LifecycleEvent(kind, actor, "t1", excluded=("e1",) if ctx == "excluded" else ())
    return rec, ev, now


@pytest.mark.parametrize("row", GOLDEN, ids=[f"{r['role']}|{r['state']}|{r['event']}|{r['context']}" for r in GOLDEN])
def test_golden_table(row):
    rec, ev, now = golden_case(row)
    if row["expected"] == "reject":
        with pytest.raises(IllegalEvent):
            transition(rec, ev, now)
        return
    new, effects = transition(rec, ev, now)
    assert new.state.value == row["expected"]
    assert ";".join(e.label() for e in effects) == row["effects"]


def test_golden_covers_every_pair():
    seen = {(r["role"], r["state"], r["event"]) for r in GOLDEN if not r["context"]}
    expected = {(role.value, s.value, k.value)
                for role, states in ((Role.REQUESTER, RequesterState), (Role.REQUESTEE, RequesteeState))
                for s in states for k in EventKind}
    assert seen == expected


class TestRequester:
    def rec(self, **kw):
        return replace(new_requester_record("r", "t1", V_BY, END), **kw)

    def test_volunteers_accumulate(self):
        rec, _ = transition(self.rec(), LifecycleEvent(K.MSG_VOLUNTEER, "v1", "t1"), 0)
        rec, _ = transition(rec, LifecycleEvent(K.MSG_VOLUNTEER, "v2", "t1"), 1)
        rec, _ = transition(rec, LifecycleEvent(K.MSG_VOLUNTEER, "v1", "t1"), 2)
        assert rec.state is RequesterState.PENDING_ASSIGNMENT_1 and rec.volunteers == ("v1", "v2")

    def test_assign_effects(self):
        rec = self.rec(state=RequesterState.PENDING_ASSIGNMENT_1, volunteers=("v1", "v2"))
        new, effects = transition(rec, LifecycleEvent(K.CLICK_ASSIGN, "r", "t1", volunteer="v2"), 0)
        assert new.chosen == "v2"
        assert effects[0].to == "v2" and effects[1].excluded == ("v2",)

    def test_rate_effect_and_bounds(self):
        rec = self.rec(state=RequesterState.COMPLETED, volunteers=("v1",), chosen="v1")
        _, effects = transition(rec, LifecycleEvent(K.CLICK_RATE, "r", "t1", value=7), 0)
        assert (effects[0].kind, effects[0].to, effects[0].value) == ("record_rating", "v1", 7)
        with pytest.raises(IllegalEvent):
            transition(rec, LifecycleEvent(K.CLICK_RATE, "r", "t1", value=0), 0)

    def test_chat_invariant(self):
        for state in RequesterState:
            rec = self.rec(state=state, volunteers=("v1",), chosen="v1" if state is RequesterState.ASSIGNED else None)
            for kind in CHAT_EVENTS:
                try:
                    new, effects = transition(rec, LifecycleEvent(kind, "r", "t1"), 0)
                except IllegalEvent:
                    continue
                assert new.state is state and effects == []

    def test_wrong_role(self):
        rec = new_requestee_record("e1", "r", "t1", V_BY, END)
        from uhelp.lifecycle import requester_transition

        with pytest.raises(IllegalEvent):
            requester_transition(rec, LifecycleEvent(K.CLICK_HELP, "r", "t1"), 0)


class TestRequestee:
    def test_change_of_mind(self):
        rec = new_requestee_record("e1", "r", "t1", V_BY, END)
        rec, eff = transition(rec, LifecycleEvent(K.CLICK_ACCEPT, "e1", "t1"), 1)
        assert rec.state is RequesteeState.ACCEPTED and eff[0].to == "r"
        rec, _ = transition(rec, LifecycleEvent(K.CLICK_CANCEL, "e1", "t1"), 2)
        assert rec.state is RequesteeState.DECLINED
        rec, _ = transition(rec, LifecycleEvent(K.CLICK_ACCEPT, "e1", "t1"), 3)
        assert rec.state is RequesteeState.ACCEPTED

    def test_duplicates_absorbed(self):
        rec = new_requestee_record("e1", "r", "t1", V_BY, END)
        rec, _ = transition(rec, LifecycleEvent(K.MSG_NOT_NEEDED, "r", "t1"), 1)
        for kind in (K.MSG_NOT_NEEDED, K.MSG_CANCELLED, K.MSG_HELP):
            again, eff = transition(rec, LifecycleEvent(kind, "r", "t1"), 2)
            assert again is rec and eff == []


class TestRecords:
    def test_deadline_order(self):
        with pytest.raises(ValueError):
            new_requester_record("r", "t1", 10, 5)
        assert new_requester_record("r", "t1", 10, 30).assign_by == 20

    def test_chosen_must_volunteer(self):
        with pytest.raises(ValueError):
            replace(new_requester_record("r", "t1", 1, 2), chosen="x")

    @pytest.mark.parametrize("state, color", [
        (RequesterState.PENDING_ASSIGNMENT_2, "red"), (RequesterState.RATED, "grey"),
        (RequesterState.LOOKING_FOR_VOLUNTEERS, "yellow"), (RequesterState.COMPLETED, "green"),
    ])
    def test_requester_colors(self, state, color):
        assert color_of(replace(new_requester_record("r", "t1", 1, 2), state=state)) == color

    @pytest.mark.parametrize("state, color", [
        (RequesteeState.COMMITTED, "red"), (RequesteeState.UNANSWERED, "green"),
        (RequesteeState.ACCEPTED, "yellow"), (RequesteeState.DECLINED, "grey"),
    ])
    def test_requestee_colors(self, state, color):
        assert color_of(replace(new_requestee_record("e", "r", "t1", 1, 2), state=state)) == color

    def test_colors_total(self):
        assert set(COLORS) == set(RequesterState) | set(RequesteeState)


class TestDeadlines:
    def test_before_all(self):
        assert fire_deadlines([new_requester_record("r", "t1", V_BY, END)], 5) == []

    def test_all_at_once_in_order(self):
        recs = [new_requester_record("r", "t1", V_BY, END), new_requestee_record("e", "r", "t2", 5, 40)]
        events = fire_deadlines(recs, 100)
        assert [(r.task_id, e.kind) for r, e in events] == [
            ("t2", K.PASSED_DEADLINE_V), ("t1", K.PASSED_DEADLINE_V), ("t1", K.PASSED_DEADLINE_A),
            ("t2", K.PASSED_DEADLINE_A), ("t1", K.PASSED_END_DATE), ("t2", K.PASSED_END_DATE),
        ]
        assert fire_deadlines(recs, 100) == []

    def test_incremental(self):
        rec = new_requester_record("r", "t1", V_BY, END)
        assert [e.kind for _, e in fire_deadlines([rec], 12)] == [K.PASSED_DEADLINE_V]
        assert [e.kind for _, e in fire_deadlines([rec], 30)] == [K.PASSED_DEADLINE_A, K.PASSED_END_DATE]


def test_log_line():
    line = json.loads(log_line(3.0, "r", "t1", K.MSG_VOLUNTEER, RequesterState.LOOKING_FOR_VOLUNTEERS,
                               RequesterState.PENDING_ASSIGNMENT_1))
    assert line == {"clock": 3.0, "node": "r", "task_id": "t1", "event": "Msg_Volunteer",
                    "old": "looking for volunteers", "new": "pending assignment 1"}
