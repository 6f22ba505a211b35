"""Virtual triage flow: questionnaire scoring, appointment slotting and the
hand-off into a scheduled conference session with a nurse."""

import re
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from .auth import Subject
from .errors import (
    IncompleteQuestionnaire,
    InvalidEmail,
    InvalidToken,
    NoSlotsAvailable,
    NotFound,
)
from .registry import SYSTEM

AGE_GROUPS = ("0-17", "18-39", "40-59", "60-74", "75+")
ELDER_GROUPS = ("60-74", "75+")

DEFAULT_WEIGHTS = {"fever": 2, "cough": 1, "tiredness": 1, "contact_confirmed_case": 2,
                   "elder_bonus": 1}
URGENT_MIN_SCORE = 4

SLOT_MINUTES = 20
BUSINESS_START_H = 9
BUSINESS_END_H = 17
URGENT_POOL_END_H = 11  # first two business hours reserved for urgent cases
SEARCH_DAYS = 14

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")


def score_questionnaire(q: dict, weights: dict = DEFAULT_WEIGHTS) -> int:
    score = 0
    for key in ("fever", "cough", "tiredness", "contact_confirmed_case"):
        if q[key]:
            score += weights[key]
    if q["age_group"] in ELDER_GROUPS:
        score += weights["elder_bonus"]
    return score


def tier_of(score: int) -> str:
    if score >= URGENT_MIN_SCORE:
        return "urgent"
    if score >= 1:
        return "standard"
    return "advice"


@dataclass
class Appointment:
    id: str
    requester_name: str
    requester_email: str
    slot_ts: float
    session_id: str
    invite_token: str
    participant_id: str
    status: str = "scheduled"  # scheduled | completed | no_show | cancelled


class TriageService:
    def __init__(self, registry, conference, auth, bus, clock, ids, outbox,
                 project_id: str, nurse_user_id: str,
                 weights: dict | None = None):
        self.registry = registry
        self.conference = conference
        self.auth = auth
        self.bus = bus
        self.clock = clock
        self.ids = ids
        self.outbox = outbox
        self.project_id = project_id
        self.nurse_user_id = nurse_user_id
        self.weights = weights or DEFAULT_WEIGHTS
        self.submissions: dict[str, dict] = {}
        self.appointments: dict[str, Appointment] = {}
        self._booked: set[float] = set()
        bus.subscribe("session.*.closed", callback=self._on_session_closed)

    # -- questionnaire -------------------------------------------------------

    def submit(self, questionnaire: dict) -> dict:
        required = ("age_group", "gender", "fever", "cough", "tiredness",
                    "is_healthcare_worker", "contact_confirmed_case")
        missing = [k for k in required if k not in questionnaire]
        if missing:
            raise IncompleteQuestionnaire(f"missing fields: {missing}")
        if questionnaire["age_group"] not in AGE_GROUPS:
            raise IncompleteQuestionnaire(f"bad age_group {questionnaire['age_group']!r}")
        score = score_questionnaire(questionnaire, self.weights)
        result = {
            "result_id": self.ids.new_id(),
            "score": score,
            "tier": tier_of(score),
            "flag_healthcare_worker": bool(questionnaire["is_healthcare_worker"]),
        }
        self.submissions[result["result_id"]] = {**result, "questionnaire": questionnaire}
        return result

    # -- scheduling ----------------------------------------------------------

    def _slot_iter(self, pool: str):
        """Yield free candidate slots in a pool, earliest first."""
        now = datetime.fromtimestamp(self.clock.now(), tz=timezone.utc)
        day = now.replace(hour=0, minute=0, second=0, microsecond=0)
        start_h, end_h = ((BUSINESS_START_H, URGENT_POOL_END_H) if pool == "urgent"
                          else (URGENT_POOL_END_H, BUSINESS_END_H))
        for offset in range(SEARCH_DAYS):
            current = day + timedelta(days=offset, hours=start_h)
            end = day + timedelta(days=offset, hours=end_h)
            while current < end:
                ts = current.timestamp()
                if ts > self.clock.now() and ts not in self._booked:
                    yield ts
                current += timedelta(minutes=SLOT_MINUTES)

    def _allocate_slot(self, tier: str) -> float:
        pools = ("urgent", "standard") if tier == "urgent" else ("standard", "urgent")
        for pool in pools:
            for ts in self._slot_iter(pool):
                self._booked.add(ts)
                return ts
        raise NoSlotsAvailable("calendar exhausted")

    def _participant_for(self, name: str, email: str) -> str:
        for participant in self.registry.store.list("participant"):
            if (participant["project_id"] == self.project_id
                    and participant.get("email") == email):
                return participant["id"]
        doc = self.registry.create("participant", {
            "project_id": self.project_id, "display_name": name,
            "email": email, "consent_data_storage": True,
        }, SYSTEM)
        return doc["id"]

    def schedule(self, result_id: str, name: str, email: str) -> dict:
        result = self.submissions.get(result_id)
        if result is None:
            raise NotFound(f"triage result {result_id}")
        if not name:
            raise IncompleteQuestionnaire("name required")
        if not _EMAIL_RE.match(email or ""):
            raise InvalidEmail(f"malformed email {email!r}")
        slot_ts = self._allocate_slot(result["tier"])
        participant_id = self._participant_for(name, email)
        nurse = Subject("user", self.nurse_user_id)
        conf = self.conference.create_conference(nurse, None, [participant_id],
                                                 notify=False)
        invite = conf["invites"][0]
        appointment = Appointment(
            id=self.ids.new_id(), requester_name=name, requester_email=email,
            slot_ts=slot_ts, session_id=conf["session_id"],
            invite_token=invite["token"], participant_id=participant_id)
        self.appointments[appointment.id] = appointment
        self.outbox.send(
            to=email, subject="Your teleconsultation appointment",
            body=(f"Your appointment is scheduled at {slot_ts:.0f}. "
                  f"Join with this link: {invite['join_url']}"),
            join_url=invite["join_url"], slot_ts=slot_ts)
        return {"appointment_id": appointment.id, "slot_ts": slot_ts,
                "session_id": conf["session_id"], "join_url": invite["join_url"],
                "tier": result["tier"]}

    def join_appointment(self, token: str) -> dict:
        return self.conference.join(token)

    def get_appointment(self, appointment_id: str) -> dict:
        appointment = self.appointments.get(appointment_id)
        if appointment is None:
            raise NotFound(f"appointment {appointment_id}")
        return {
            "id": appointment.id, "requester_name": appointment.requester_name,
            "slot_ts": appointment.slot_ts, "session_id": appointment.session_id,
            "status": appointment.status,
        }

    def _on_session_closed(self, event) -> None:
        session_id = event.topic.split(".")[1]
        status = event.payload.get("status")
        for appointment in self.appointments.values():
            if appointment.session_id == session_id and appointment.status == "scheduled":
                appointment.status = "completed" if status == "completed" else "cancelled"
