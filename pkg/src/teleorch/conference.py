"""Videoconference orchestration: invites, waiting room, host controls and
an opaque signaling relay.

The server never inspects signaling payloads; it forwards them verbatim.
Room membership and media flags are mirrored into the session event log so
the final room state can be reconstructed by replay.
"""

import json
from dataclasses import dataclass, field

from .auth import Scope, Subject
from .errors import (
    AlreadyStarted,
    InvalidToken,
    InvariantViolation,
    NotHost,
    NotMember,
    RoomFull,
    RoomNotActive,
    SessionEnded,
    TargetNotMember,
    TooManyParticipants,
    Unauthorized,
)
from .registry import SYSTEM

DEFAULT_MAX_PARTICIPANTS = 5
INVITE_TTL_S = 7 * 24 * 3600
NOTE_GRACE_S = 24 * 3600


def member_ref(subject_kind: str, subject_id: str) -> str:
    return f"{subject_kind}:{subject_id}"


@dataclass
class MemberState:
    connected: bool = True
    mic_on: bool = True
    cam_on: bool = True
    joined_ts: float | None = None


@dataclass
class Invite:
    token: str
    session_id: str
    invitee_ref: str
    expires_at: float
    valid: bool = True


@dataclass
class Room:
    session_id: str
    host_user_id: str
    status: str = "created"  # created | active | ended
    waiting: list = field(default_factory=list)  # ordered member refs
    members: dict = field(default_factory=dict)  # ref -> MemberState
    max_participants: int = DEFAULT_MAX_PARTICIPANTS
    frames: dict = field(default_factory=dict)  # ref -> list of frames
    ended_ts: float | None = None

    def participant_count(self) -> int:
        admitted = sum(1 for ref in self.members if ref.startswith("participant:"))
        queued = sum(1 for ref in self.waiting if ref.startswith("participant:"))
        return admitted + queued

    def snapshot(self) -> dict:
        return {
            "session_id": self.session_id,
            "host_user_id": self.host_user_id,
            "status": self.status,
            "waiting": list(self.waiting),
            "members": {ref: {"connected": m.connected, "mic_on": m.mic_on,
                              "cam_on": m.cam_on, "joined_ts": m.joined_ts}
                        for ref, m in self.members.items()},
            "member_order": list(self.members),  # admission order survives JSON
            "max_participants": self.max_participants,
        }


class ConferenceService:
    def __init__(self, registry, auth, bus, clock, ids, outbox,
                 base_url: str = "https://localhost", invite_ttl_s: int = INVITE_TTL_S):
        self.registry = registry
        self.auth = auth
        self.bus = bus
        self.clock = clock
        self.ids = ids
        self.outbox = outbox
        self.base_url = base_url
        self.invite_ttl_s = invite_ttl_s
        self.rooms: dict[str, Room] = {}
        self.invites: dict[str, Invite] = {}
        self.session_type_id: str | None = None

    # -- helpers -------------------------------------------------------------

    def _session_type(self) -> str:
        if self.session_type_id is None:
            st = self.registry.create("session_type",
                                      {"service_key": "conference", "name": "Videoconference"},
                                      SYSTEM)
            self.session_type_id = st["id"]
        return self.session_type_id

    def _room(self, session_id: str) -> Room:
        room = self.rooms.get(session_id)
        if room is None:
            raise SessionEnded(f"no live room for session {session_id}")
        return room

    def _require_host(self, room: Room, actor: Subject) -> None:
        if actor.kind != "user" or actor.id != room.host_user_id:
            raise NotHost("only the host may do this")

    def _event(self, room: Room, kind: str, actor_ref: str, payload: dict | None = None) -> None:
        kind_part, _, id_part = actor_ref.partition(":")
        self.registry.append_event(room.session_id, {
            "kind": kind,
            "actor": {"subject_kind": kind_part, "subject_id": id_part},
            "payload": payload or {},
        }, SYSTEM)

    def _send_frame(self, room: Room, ref: str, frame: dict) -> None:
        room.frames.setdefault(ref, []).append(frame)

    def _broadcast(self, room: Room, frame: dict, exclude: str | None = None) -> int:
        count = 0
        for ref, member in room.members.items():
            if ref == exclude or not member.connected:
                continue
            self._send_frame(room, ref, frame)
            count += 1
        return count

    def _broadcast_state(self, room: Room) -> None:
        self._broadcast(room, {"frame": "room_state", "room": room.snapshot()})

    def join_url(self, token: str) -> str:
        return f"{self.base_url}/join?token={token}"

    def _issue_invite(self, session_id: str, invitee_ref: str) -> Invite:
        invite = Invite(token=self.ids.new_token(), session_id=session_id,
                        invitee_ref=invitee_ref,
                        expires_at=self.clock.now() + self.invite_ttl_s)
        self.invites[invite.token] = invite
        return invite

    def _notify_invitee(self, invite: Invite) -> None:
        kind, _, pid = invite.invitee_ref.partition(":")
        to = invite.invitee_ref
        if kind == "participant":
            participant = self.registry.store.get("participant", pid)
            to = (participant or {}).get("email") or invite.invitee_ref
        self.outbox.send(to=to, subject="Telehealth session invitation",
                         body=f"Click to join your session: {self.join_url(invite.token)}",
                         join_url=self.join_url(invite.token))

    # -- lifecycle -----------------------------------------------------------

    def create_conference(self, host: Subject, session_type_id: str | None,
                          participant_ids: list, max_participants: int | None = None,
                          notify: bool = True) -> dict:
        if host.kind != "user":
            raise Unauthorized("host must be a user")
        limit = max_participants or DEFAULT_MAX_PARTICIPANTS
        if len(participant_ids) > limit:
            raise TooManyParticipants(
                f"{len(participant_ids)} invitees exceed the group limit of {limit}")
        session = self.registry.open_session(
            "conference", session_type_id or self._session_type(), host,
            user_ids=[host.id], participant_ids=list(participant_ids), status="planned")
        room = Room(session_id=session["id"], host_user_id=host.id,
                    max_participants=limit)
        host_ref = member_ref("user", host.id)
        room.members[host_ref] = MemberState(joined_ts=self.clock.now())
        self.rooms[session["id"]] = room
        invites = []
        for pid in participant_ids:
            invite = self._issue_invite(session["id"], member_ref("participant", pid))
            if notify:
                self._notify_invitee(invite)
            invites.append({"token": invite.token, "participant_id": pid,
                            "join_url": self.join_url(invite.token)})
        return {"session_id": session["id"], "invites": invites}

    def join(self, token: str) -> dict:
        invite = self.invites.get(token)
        if invite is None or not invite.valid:
            raise InvalidToken("unknown or revoked invite token")
        if self.clock.now() >= invite.expires_at:
            raise InvalidToken("invite expired")
        room = self.rooms.get(invite.session_id)
        if room is None or room.status == "ended":
            raise SessionEnded("session has ended")
        ref = invite.invitee_ref
        if room.status == "created":
            if ref not in room.waiting and ref not in room.members:
                if (ref.startswith("participant:")
                        and room.participant_count() >= room.max_participants):
                    raise RoomFull("waiting room at capacity")
                room.waiting.append(ref)
                if self.registry.store.get("session", room.session_id)["status"] == "in_progress":
                    self._event(room, "join", ref)
            return {"state": "waiting", "room": room.snapshot(), "member_ref": ref}
        # active room: admit immediately
        if ref not in room.members:
            if (ref.startswith("participant:")
                    and room.participant_count() >= room.max_participants):
                raise RoomFull("room at capacity")
            self._admit(room, ref)
            self._broadcast_state(room)
        return {"state": "admitted", "room": room.snapshot(), "member_ref": ref}

    def _admit(self, room: Room, ref: str) -> None:
        room.members[ref] = MemberState(joined_ts=self.clock.now())
        self._event(room, "admitted", ref)

    def start(self, actor: Subject, session_id: str) -> dict:
        room = self._room(session_id)
        self._require_host(room, actor)
        if room.status != "created":
            raise AlreadyStarted(f"room is {room.status}")
        room.status = "active"
        self.registry.begin_session(session_id, SYSTEM)
        self._event(room, "started", member_ref("user", room.host_user_id))
        for ref in list(room.waiting):  # FIFO admission
            self._admit(room, ref)
        room.waiting.clear()
        self._broadcast_state(room)
        return room.snapshot()

    # -- signaling -----------------------------------------------------------

    def relay_signal(self, session_id: str, from_ref: str, payload,
                     to_ref: str | None = None) -> int:
        room = self._room(session_id)
        if room.status != "active":
            raise RoomNotActive(f"room is {room.status}")
        sender = room.members.get(from_ref)
        if sender is None or not sender.connected:
            raise NotMember(f"{from_ref} is not an admitted, connected member")
        if to_ref is not None:
            if to_ref == from_ref:
                raise InvariantViolation("sender cannot target itself")
            target = room.members.get(to_ref)
            if target is None or not target.connected:
                raise TargetNotMember(f"{to_ref} is not an admitted, connected member")
            self._send_frame(room, to_ref,
                             {"frame": "signal", "from": from_ref, "payload": payload})
            return 1
        return self._broadcast(room, {"frame": "signal", "from": from_ref,
                                      "payload": payload}, exclude=from_ref)

    # -- host controls -------------------------------------------------------

    def set_media(self, actor_ref: str, session_id: str, target_ref: str,
                  device: str, on: bool) -> dict:
        room = self._room(session_id)
        if device not in ("mic", "cam", "sharing"):
            raise InvariantViolation("device must be mic|cam|sharing")
        is_host = actor_ref == member_ref("user", room.host_user_id)
        if not is_host and actor_ref != target_ref:
            raise Unauthorized("only the host may control other members' media")
        member = room.members.get(target_ref)
        if member is None:
            raise NotMember(f"{target_ref} not in room")
        if device == "mic":
            member.mic_on = on
        elif device == "cam":
            member.cam_on = on
        self._event(room, "media", actor_ref,
                    {"target": target_ref, "device": device, "on": on})
        self._broadcast(room, {"frame": "media", "target": target_ref,
                               "device": device, "on": on})
        return room.snapshot()

    def add_participant(self, actor: Subject, session_id: str, participant_id: str) -> dict:
        room = self._room(session_id)
        self._require_host(room, actor)
        if room.participant_count() >= room.max_participants:
            raise RoomFull(f"group limit of {room.max_participants} reached")
        session = self.registry.store.get("session", session_id)
        if participant_id not in session["participant_ids"]:
            self.registry.set_session_members(
                session_id, SYSTEM,
                participant_ids=session["participant_ids"] + [participant_id])
        invite = self._issue_invite(session_id, member_ref("participant", participant_id))
        self._notify_invitee(invite)
        return {"token": invite.token, "participant_id": participant_id,
                "join_url": self.join_url(invite.token)}

    def remove_participant(self, actor: Subject, session_id: str, ref: str) -> dict:
        room = self._room(session_id)
        self._require_host(room, actor)
        if ref not in room.members and ref not in room.waiting:
            raise NotMember(f"{ref} not in room")
        if ref in room.members:
            self._send_frame(room, ref, {"frame": "room_state", "removed": True})
            del room.members[ref]
        if ref in room.waiting:
            room.waiting.remove(ref)
        for invite in self.invites.values():
            if invite.session_id == session_id and invite.invitee_ref == ref:
                invite.valid = False
        if room.status == "active":
            self._event(room, "leave", ref, {"removed": True})
        self._broadcast_state(room)
        return room.snapshot()

    def tool_event(self, actor: Subject, session_id: str, kind: str, params: dict) -> int:
        room = self._room(session_id)
        self._require_host(room, actor)
        if room.status != "active":
            raise RoomNotActive(f"room is {room.status}")
        if kind not in ("timer_start", "timer_stop"):
            raise InvariantViolation("tool kind must be timer_start|timer_stop")
        self._event(room, "tool", member_ref("user", room.host_user_id),
                    {"kind": kind, "params": params})
        return self._broadcast(room, {"frame": "tool", "kind": kind, "params": params})

    def attach_note(self, actor: Subject, session_id: str, text: str) -> dict:
        room = self.rooms.get(session_id)
        if room is None:
            raise SessionEnded(f"no room for session {session_id}")
        self._require_host(room, actor)
        if room.status == "ended":
            if room.ended_ts is None or self.clock.now() > room.ended_ts + NOTE_GRACE_S:
                raise SessionEnded("note window closed")
        return self.registry.attach_asset(session_id, "note.txt", "text/plain",
                                          text.encode(), actor)

    def end(self, actor: Subject, session_id: str) -> dict:
        room = self._room(session_id)
        self._require_host(room, actor)
        if room.status == "ended":
            raise SessionEnded("already ended")
        was_active = room.status == "active"
        self._broadcast(room, {"frame": "room_state", "status": "ended"})
        if was_active:
            self._event(room, "ended", member_ref("user", room.host_user_id))
        for member in room.members.values():
            member.connected = False
        room.status = "ended"
        room.ended_ts = self.clock.now()
        status = "completed" if was_active else "cancelled"
        return self.registry.close_session(session_id, status, SYSTEM)

    def drain_frames(self, session_id: str, ref: str) -> list:
        room = self.rooms.get(session_id)
        if room is None:
            return []
        frames = room.frames.get(ref, [])
        room.frames[ref] = []
        return frames


def replay_room(events: list, host_user_id: str,
                max_participants: int = DEFAULT_MAX_PARTICIPANTS) -> dict:
    """Reconstruct final membership and media flags from the event log.

    Independent of the live Room bookkeeping; used to audit event-log
    completeness.
    """
    status = "created"
    waiting: list = []
    members: dict[str, dict] = {member_ref("user", host_user_id):
                                {"mic_on": True, "cam_on": True}}
    for event in events:
        actor = event.get("actor", {})
        ref = member_ref(actor.get("subject_kind", "?"), actor.get("subject_id", "?"))
        kind = event["kind"]
        if kind == "join":
            if ref not in waiting and ref not in members:
                waiting.append(ref)
        elif kind == "admitted":
            if ref in waiting:
                waiting.remove(ref)
            members[ref] = {"mic_on": True, "cam_on": True}
        elif kind == "started":
            status = "active"
        elif kind == "leave":
            members.pop(ref, None)
            if ref in waiting:
                waiting.remove(ref)
        elif kind == "media":
            payload = event.get("payload", {})
            target = members.get(payload.get("target"))
            if target is not None and payload.get("device") in ("mic", "cam"):
                target[payload["device"] + "_on"] = payload["on"]
        elif kind == "ended":
            status = "ended"
    return {"status": status, "waiting": waiting, "members": members}
