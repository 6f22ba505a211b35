"""Multi-tenant registry of sites, projects, people, devices and sessions.

The session record is the central artifact: it links the owning service,
users, participants and devices with timestamped events and stored assets.
All writes go through the store transaction so referential checks and the
write land atomically.
"""

import base64
import hashlib
from typing import Any

from .auth import Scope, Subject
from .errors import (
    AlreadyClosed,
    ConsentMissing,
    DependentsExist,
    DuplicateKey,
    InvariantViolation,
    NotFound,
    ReferenceNotFound,
    SessionNotActive,
    Unauthorized,
)

# Internal actor for service-to-service plumbing (upload pipelines etc.).
SYSTEM = Subject("user", "__system__")

ENTITY_KINDS = (
    "site", "project", "user", "user_group", "participant", "device",
    "session_type", "service_registration",
)

_REDACTED_FIELDS = ("password_digest", "secret_digest", "salt", "secret")

DEVICE_KINDS = ("wearable", "medical", "robot", "hub")


def checksum(content: bytes) -> str:
    return "sha256:" + hashlib.sha256(content).hexdigest()


class Registry:
    def __init__(self, store, bus, clock, ids, auth):
        self.store = store
        self.bus = bus
        self.clock = clock
        self.ids = ids
        self.auth = auth

    # ------------------------------------------------------------------ util

    def _is_system(self, actor: Subject) -> bool:
        return actor == SYSTEM or self.auth.is_superadmin(actor)

    def _require(self, decision, what: str):
        if not decision:
            raise Unauthorized(f"{what}: {decision.reason}")

    def _redact(self, doc: dict) -> dict:
        return {k: v for k, v in doc.items() if k not in _REDACTED_FIELDS}

    def _publish(self, topic: str, payload: dict):
        self.bus.publish(topic, payload, publisher="core-registry")

    def _scope_of(self, kind: str, doc: dict) -> Scope:
        """Authorization scope of one entity document."""
        if kind == "site":
            return Scope(site_id=doc["id"])
        if kind == "project":
            return Scope(site_id=doc["site_id"], project_id=doc["id"])
        if kind == "participant":
            project = self.store.get("project", doc["project_id"])
            return Scope(site_id=project["site_id"], project_id=project["id"],
                         entity_kind="participant", entity_id=doc["id"])
        if kind == "device":
            return Scope(site_id=doc["site_id"], project_id=doc["project_id"],
                         entity_kind="device", entity_id=doc["id"])
        # users, groups, session types and service registrations are
        # platform-level resources
        return Scope()

    # ----------------------------------------------------------------- CRUD

    def create(self, kind: str, fields: dict, actor: Subject) -> dict:
        if kind not in ENTITY_KINDS:
            raise ReferenceNotFound(f"unknown entity kind {kind!r}")
        with self.store.transaction():
            doc = dict(fields)
            doc["id"] = doc.get("id") or self.ids.new_id()
            self._validate(kind, doc, creating=True)
            if not self._is_system(actor):
                scope = self._creation_scope(kind, doc)
                action = "admin" if kind in ("site", "project") else "write"
                self._require(self.auth.authorize(actor, action, scope),
                              f"create {kind}")
            self.store.put(kind, doc["id"], doc)
        self._publish(f"registry.{kind}.created", {"id": doc["id"]})
        return self._redact(doc)

    def _creation_scope(self, kind: str, doc: dict) -> Scope:
        # Creation is authorized against the parent scope, not the new id.
        if kind == "project":
            return Scope(site_id=doc["site_id"])
        if kind == "participant":
            project = self.store.get("project", doc["project_id"])
            return Scope(site_id=project["site_id"], project_id=project["id"])
        if kind == "device":
            return Scope(site_id=doc["site_id"], project_id=doc["project_id"])
        return Scope()  # site, user, group, session_type: platform scope

    def get(self, kind: str, doc_id: str, actor: Subject) -> dict:
        doc = self.store.get(kind, doc_id)
        if doc is None:
            raise NotFound(f"{kind} {doc_id}")
        if not self._is_system(actor) and kind != "session_type":
            self._require(self.auth.authorize(actor, "read", self._scope_of(kind, doc)),
                          f"read {kind}")
        return self._redact(doc)

    def list_children(self, kind: str, parent_id: str | None, actor: Subject) -> list[dict]:
        parent_field = {"project": "site_id", "participant": "project_id",
                        "device": "project_id"}.get(kind)
        out = []
        for doc in self.store.list(kind):
            if parent_field and parent_id is not None and doc.get(parent_field) != parent_id:
                continue
            if not self._is_system(actor) and kind != "session_type":
                if not self.auth.authorize(actor, "read", self._scope_of(kind, doc)):
                    continue
            out.append(self._redact(doc))
        out.sort(key=lambda d: d["id"])
        return out

    def update(self, kind: str, doc_id: str, patch: dict, actor: Subject) -> dict:
        with self.store.transaction():
            doc = self.store.get(kind, doc_id)
            if doc is None:
                raise NotFound(f"{kind} {doc_id}")
            if not self._is_system(actor):
                self._require(self.auth.authorize(actor, "write", self._scope_of(kind, doc)),
                              f"update {kind}")
            merged = {**doc, **patch, "id": doc["id"]}
            self._validate(kind, merged, creating=False)
            self.store.put(kind, doc_id, merged)
        self._publish(f"registry.{kind}.updated", {"id": doc_id})
        return self._redact(merged)

    def delete(self, kind: str, doc_id: str, actor: Subject) -> None:
        with self.store.transaction():
            doc = self.store.get(kind, doc_id)
            if doc is None:
                raise NotFound(f"{kind} {doc_id}")
            if not self._is_system(actor):
                self._require(self.auth.authorize(actor, "admin", self._scope_of(kind, doc)),
                              f"delete {kind}")
            dependents = self._dependents(kind, doc_id)
            if dependents:
                raise DependentsExist(f"{kind} {doc_id} has dependents: {dependents}")
            self.store.delete(kind, doc_id)
        self._publish(f"registry.{kind}.deleted", {"id": doc_id})

    def _dependents(self, kind: str, doc_id: str) -> list[str]:
        refs = {
            "site": [("project", "site_id"), ("device", "site_id")],
            "project": [("participant", "project_id"), ("device", "project_id")],
            "participant": [("device", "assigned_participant_id")],
            "user": [],
            "session_type": [("session", "session_type_id")],
        }.get(kind, [])
        found = []
        for dep_kind, field in refs:
            for doc in self.store.list(dep_kind):
                if doc.get(field) == doc_id:
                    found.append(f"{dep_kind}:{doc['id']}")
        for session in self.store.list("session"):
            key = {"participant": "participant_ids", "user": "user_ids",
                   "device": "device_ids"}.get(kind)
            if key and doc_id in session.get(key, []):
                found.append(f"session:{session['id']}")
        return found

    # ----------------------------------------------------------- validation

    def _ref(self, kind: str, doc_id):
        doc = self.store.get(kind, doc_id)
        if doc is None:
            raise ReferenceNotFound(f"{kind} {doc_id} not found")
        return doc

    def _unique(self, kind: str, field, value, self_id):
        for doc in self.store.list(kind):
            if doc["id"] != self_id and doc.get(field) == value:
                raise DuplicateKey(f"{kind}.{field}={value!r} already exists")

    def _validate(self, kind: str, doc: dict, creating: bool) -> None:
        if kind == "site":
            if not doc.get("name"):
                raise InvariantViolation("site name non-empty")
        elif kind == "project":
            site = self._ref("site", doc.get("site_id"))
            if not doc.get("name"):
                raise InvariantViolation("project name non-empty")
            for other in self.store.list("project"):
                if (other["id"] != doc["id"] and other["site_id"] == site["id"]
                        and other["name"] == doc["name"]):
                    raise DuplicateKey("project name duplicated within site")
        elif kind == "user":
            if not doc.get("username"):
                raise InvariantViolation("username non-empty")
            self._unique("user", "username", doc["username"], doc["id"])
            doc.setdefault("is_superadmin", False)
            doc.setdefault("grants", [])
            self._validate_grants(doc["grants"])
        elif kind == "user_group":
            doc.setdefault("member_user_ids", [])
            doc.setdefault("grants", [])
            for uid in doc["member_user_ids"]:
                self._ref("user", uid)
            self._validate_grants(doc["grants"])
        elif kind == "participant":
            self._ref("project", doc.get("project_id"))
            doc.setdefault("consent_data_storage", True)
            doc.setdefault("email", None)
        elif kind == "device":
            site = self._ref("site", doc.get("site_id"))
            project = self._ref("project", doc.get("project_id"))
            if project["site_id"] != site["id"]:
                raise InvariantViolation("device project must belong to device site")
            if doc.get("kind") not in DEVICE_KINDS:
                raise InvariantViolation(f"device kind must be one of {DEVICE_KINDS}")
            doc.setdefault("enabled", True)
            doc.setdefault("assigned_participant_id", None)
            if doc["assigned_participant_id"] is not None:
                participant = self._ref("participant", doc["assigned_participant_id"])
                if participant["project_id"] != project["id"]:
                    raise InvariantViolation(
                        "assigned participant must belong to the device's project")
        elif kind == "session_type":
            if not doc.get("service_key"):
                raise InvariantViolation("session_type service_key non-empty")
        elif kind == "service_registration":
            self._unique("service_registration", "service_key", doc.get("service_key"), doc["id"])
            self._unique("service_registration", "route_prefix", doc.get("route_prefix"), doc["id"])

    def _validate_grants(self, grants: list[dict]) -> None:
        for grant in grants:
            if grant.get("scope_kind") not in ("site", "project"):
                raise InvariantViolation("grant scope_kind must be site|project")
            if grant.get("role") not in ("admin", "member"):
                raise InvariantViolation("grant role must be admin|member")
            self._ref(grant["scope_kind"], grant.get("scope_id"))

    # -------------------------------------------------------------- sessions

    def session_scope(self, session: dict) -> Scope:
        pids = tuple(session.get("participant_ids", []))
        site_id = project_id = None
        if pids:
            participant = self.store.get("participant", pids[0])
            if participant:
                project = self.store.get("project", participant["project_id"])
                project_id = project["id"]
                site_id = project["site_id"]
        return Scope(site_id=site_id, project_id=project_id,
                     entity_kind="session", entity_id=session["id"],
                     participant_ids=pids)

    def _is_session_member(self, session: dict, actor: Subject) -> bool:
        created_by = session.get("created_by", {})
        if created_by.get("subject_kind") == actor.kind and created_by.get("subject_id") == actor.id:
            return True
        key = {"user": "user_ids", "participant": "participant_ids",
               "device": "device_ids"}[actor.kind]
        return actor.id in session.get(key, [])

    def open_session(self, service_key: str, session_type_id: str, creator: Subject,
                     user_ids=(), participant_ids=(), device_ids=(),
                     status: str = "planned", start_ts: float | None = None) -> dict:
        if status not in ("planned", "in_progress"):
            raise InvariantViolation("open status must be planned|in_progress")
        with self.store.transaction():
            self._ref("session_type", session_type_id)
            for uid in user_ids:
                self._ref("user", uid)
            for did in device_ids:
                self._ref("device", did)
            projects = set()
            for pid in participant_ids:
                participant = self._ref("participant", pid)
                projects.add(participant["project_id"])
            if not self._is_system(creator):
                for project_id in projects:
                    project = self.store.get("project", project_id)
                    if creator.kind == "device":
                        # Devices create sessions only through their upload scope.
                        scope = Scope(site_id=project["site_id"], project_id=project_id,
                                      entity_kind="upload",
                                      participant_ids=tuple(participant_ids))
                    else:
                        scope = Scope(site_id=project["site_id"], project_id=project_id)
                    self._require(self.auth.authorize(creator, "write", scope),
                                  "open_session")
            session = {
                "id": self.ids.new_id(),
                "session_type_id": session_type_id,
                "service_key": service_key,
                "created_by": {"subject_kind": creator.kind, "subject_id": creator.id},
                "status": status,
                "start_ts": (start_ts if start_ts is not None else self.clock.now())
                            if status == "in_progress" else None,
                "end_ts": None,
                "user_ids": list(user_ids),
                "participant_ids": list(participant_ids),
                "device_ids": list(device_ids),
                "events": [],
                "asset_ids": [],
            }
            self.store.put("session", session["id"], session)
        self._publish(f"session.{session['id']}.created", {"service_key": service_key})
        return session

    def get_session(self, session_id: str, actor: Subject) -> dict:
        session = self.store.get("session", session_id)
        if session is None:
            raise NotFound(f"session {session_id}")
        if not self._is_system(actor) and not self._is_session_member(session, actor):
            scope = self.session_scope(session)
            self._require(self.auth.authorize(actor, "read", scope), "read session")
        return session

    def list_sessions(self, actor: Subject, service_key: str | None = None) -> list[dict]:
        out = []
        for session in self.store.list("session"):
            if service_key and session["service_key"] != service_key:
                continue
            if self._is_system(actor) or self._is_session_member(session, actor):
                out.append(session)
                continue
            scope = self.session_scope(session)
            try:
                if self.auth.authorize(actor, "read", scope):
                    out.append(session)
            except Exception:
                continue
        out.sort(key=lambda s: s["id"])
        return out

    def begin_session(self, session_id: str, actor: Subject) -> dict:
        """planned -> in_progress; stamps start_ts."""
        with self.store.transaction():
            session = self.get_session(session_id, actor)
            if session["status"] != "planned":
                raise SessionNotActive(f"session is {session['status']}")
            session["status"] = "in_progress"
            session["start_ts"] = self.clock.now()
            self.store.put("session", session_id, session)
        return session

    def set_session_members(self, session_id: str, actor: Subject,
                            participant_ids=None, user_ids=None) -> dict:
        with self.store.transaction():
            session = self.get_session(session_id, actor)
            if participant_ids is not None:
                for pid in participant_ids:
                    self._ref("participant", pid)
                session["participant_ids"] = list(participant_ids)
            if user_ids is not None:
                session["user_ids"] = list(user_ids)
            self.store.put("session", session_id, session)
        return session

    def append_event(self, session_id: str, event: dict, actor: Subject) -> dict:
        if not event.get("kind"):
            raise InvariantViolation("event kind non-empty")
        with self.store.transaction():
            session = self.store.get("session", session_id)
            if session is None:
                raise NotFound(f"session {session_id}")
            if session["status"] != "in_progress":
                raise SessionNotActive(f"session is {session['status']}")
            if not self._is_system(actor) and not self._is_session_member(session, actor):
                raise Unauthorized("only session members may append events")
            entry = {
                "ts": event.get("ts", self.clock.now()),
                "kind": event["kind"],
                "actor": event.get("actor", {"subject_kind": actor.kind,
                                             "subject_id": actor.id}),
                "payload": event.get("payload", {}),
            }
            actor_key = (entry["actor"].get("subject_kind"), entry["actor"].get("subject_id"))
            for prior in reversed(session["events"]):
                if (prior["actor"].get("subject_kind"),
                        prior["actor"].get("subject_id")) == actor_key:
                    if entry["ts"] < prior["ts"]:
                        raise InvariantViolation("event timestamps must be monotonic per actor")
                    break
            session["events"].append(entry)
            self.store.put("session", session_id, session)
        self._publish(f"session.{session_id}.event", {"kind": entry["kind"]})
        return entry

    def attach_asset(self, session_id: str, name: str, media_type: str,
                     content: bytes, actor: Subject) -> dict:
        with self.store.transaction():
            session = self.store.get("session", session_id)
            if session is None:
                raise NotFound(f"session {session_id}")
            if not self._is_system(actor) and not self._is_session_member(session, actor):
                raise Unauthorized("only session members may attach assets")
            for pid in session["participant_ids"]:
                participant = self.store.get("participant", pid)
                if not participant or not participant.get("consent_data_storage"):
                    raise ConsentMissing(f"participant {pid} has not consented to storage")
            asset = {
                "id": self.ids.new_id(),
                "session_id": session_id,
                "name": name,
                "media_type": media_type,
                "byte_size": len(content),
                "checksum": checksum(content),
            }
            self.store.put("asset", asset["id"], asset)
            self.store.put("asset_blob", asset["id"],
                           {"b64": base64.b64encode(content).decode()})
            session["asset_ids"].append(asset["id"])
            self.store.put("session", session_id, session)
        self._publish(f"session.{session_id}.asset", {"asset_id": asset["id"]})
        return asset

    def get_asset(self, asset_id: str, actor: Subject) -> dict:
        asset = self.store.get("asset", asset_id)
        if asset is None:
            raise NotFound(f"asset {asset_id}")
        self.get_session(asset["session_id"], actor)  # access check via session
        return asset

    def get_asset_content(self, asset_id: str, actor: Subject) -> bytes:
        asset = self.get_asset(asset_id, actor)
        blob = self.store.get("asset_blob", asset_id)
        return base64.b64decode(blob["b64"])

    def close_session(self, session_id: str, status: str, actor: Subject,
                      end_ts: float | None = None) -> dict:
        if status not in ("completed", "cancelled"):
            raise InvariantViolation("close status must be completed|cancelled")
        with self.store.transaction():
            session = self.store.get("session", session_id)
            if session is None:
                raise NotFound(f"session {session_id}")
            if session["status"] in ("completed", "cancelled"):
                raise AlreadyClosed(f"session already {session['status']}")
            if not self._is_system(actor):
                created_by = session["created_by"]
                is_creator = (created_by["subject_kind"] == actor.kind
                              and created_by["subject_id"] == actor.id)
                is_host = actor.kind == "user" and session["user_ids"][:1] == [actor.id]
                if not (is_creator or is_host):
                    scope = self.session_scope(session)
                    self._require(self.auth.authorize(actor, "admin", scope),
                                  "close session")
            if session["status"] == "in_progress":
                session["end_ts"] = end_ts if end_ts is not None else self.clock.now()
                if session["end_ts"] < session["start_ts"]:
                    raise InvariantViolation("end_ts must be >= start_ts")
            session["status"] = status
            self.store.put("session", session_id, session)
        self._publish(f"session.{session_id}.closed", {"status": status})
        return session

    # -------------------------------------------------------------- exports

    def export_session(self, session_id: str, actor: Subject) -> dict:
        session = self.get_session(session_id, actor)
        assets = [self.store.get("asset", aid) for aid in session["asset_ids"]]
        duration = None
        if session["start_ts"] is not None and session["end_ts"] is not None:
            duration = session["end_ts"] - session["start_ts"]
        return {**session, "duration_s": duration, "assets": assets}
