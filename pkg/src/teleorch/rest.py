"""REST adapters: translate gateway requests into service calls.

One handler class per service; the gateway injects the verified subject
into ``request.context`` before these run.
"""

from .auth import Subject
from .errors import InvalidToken, NotFound, Unauthorized
from .httpapi import Request, Response, Router

CORE_RESOURCES = {
    "sites": "site", "projects": "project", "users": "user", "groups": "user_group",
    "participants": "participant", "devices": "device",
    "session-types": "session_type",
}


def subject_of(request: Request) -> Subject:
    ctx = request.context
    if not ctx.get("subject_id"):
        raise Unauthorized("no authenticated subject")
    return Subject(ctx["subject_kind"], ctx["subject_id"])


class AuthHandler:
    def __init__(self, auth):
        self.auth = auth
        self.router = Router()
        self.router.add("POST", "/api/auth/login", self.login)

    def handle(self, request):
        return self.router.handle(request)

    def login(self, request):
        token = self.auth.authenticate(request.json)
        subject = self.auth.verify(token)
        return Response.of({"token": token, "subject_kind": subject.kind,
                            "subject_id": subject.id})


class CoreHandler:
    def __init__(self, registry):
        self.registry = registry
        r = self.router = Router()
        r.add("GET", "/api/core/{resource}", self.list)
        r.add("POST", "/api/core/{resource}", self.create)
        r.add("GET", "/api/core/{resource}/{id}", self.get)
        r.add("PATCH", "/api/core/{resource}/{id}", self.update)
        r.add("DELETE", "/api/core/{resource}/{id}", self.delete)
        r.add("POST", "/api/core/sessions/{id}/events", self.append_event)
        r.add("POST", "/api/core/sessions/{id}/assets", self.attach_asset)
        r.add("POST", "/api/core/sessions/{id}/close", self.close_session)
        r.add("GET", "/api/core/sessions/{id}/export", self.export_session)
        r.add("GET", "/api/core/assets/{id}/content", self.asset_content)
        r.add("POST", "/api/core/sessions", self.open_session)

    def handle(self, request):
        return self.router.handle(request)

    def _kind(self, resource: str) -> str:
        kind = CORE_RESOURCES.get(resource)
        if kind is None and resource not in ("sessions", "assets"):
            raise NotFound(f"unknown resource {resource!r}")
        return kind or resource.rstrip("s")

    def list(self, request, resource):
        actor = subject_of(request)
        if resource == "sessions":
            docs = self.registry.list_sessions(actor, request.query.get("service_key"))
        else:
            docs = self.registry.list_children(self._kind(resource),
                                               request.query.get("parent_id"), actor)
        return Response.of({"items": docs})

    def create(self, request, resource):
        if resource == "sessions":
            return self.open_session(request)
        doc = self.registry.create(self._kind(resource), request.json, subject_of(request))
        return Response.of(doc, status=201)

    def get(self, request, resource, id):
        actor = subject_of(request)
        if resource == "sessions":
            return Response.of(self.registry.get_session(id, actor))
        if resource == "assets":
            return Response.of(self.registry.get_asset(id, actor))
        return Response.of(self.registry.get(self._kind(resource), id, actor))

    def update(self, request, resource, id):
        doc = self.registry.update(self._kind(resource), id, request.json,
                                   subject_of(request))
        return Response.of(doc)

    def delete(self, request, resource, id):
        self.registry.delete(self._kind(resource), id, subject_of(request))
        return Response.of({"deleted": id})

    def open_session(self, request):
        body = request.json
        session = self.registry.open_session(
            body.get("service_key", ""), body.get("session_type_id"),
            subject_of(request),
            user_ids=body.get("user_ids", []),
            participant_ids=body.get("participant_ids", []),
            device_ids=body.get("device_ids", []),
            status=body.get("status", "planned"))
        return Response.of(session, status=201)

    def append_event(self, request, id):
        entry = self.registry.append_event(id, request.json, subject_of(request))
        return Response.of(entry, status=201)

    def attach_asset(self, request, id):
        asset = self.registry.attach_asset(
            id, request.query.get("name", "asset.bin"),
            request.headers.get("content-type", "application/octet-stream"),
            request.body or b"", subject_of(request))
        return Response.of(asset, status=201)

    def close_session(self, request, id):
        session = self.registry.close_session(id, request.json.get("status", "completed"),
                                              subject_of(request))
        return Response.of(session)

    def export_session(self, request, id):
        return Response.of(self.registry.export_session(id, subject_of(request)))

    def asset_content(self, request, id):
        actor = subject_of(request)
        asset = self.registry.get_asset(id, actor)
        content = self.registry.get_asset_content(id, actor)
        return Response.raw(content, asset["media_type"])


class ConferenceHandler:
    def __init__(self, conference):
        self.conference = conference
        r = self.router = Router()
        r.add("POST", "/api/conference/sessions", self.create)
        r.add("POST", "/api/conference/sessions/{id}/start", self.start)
        r.add("POST", "/api/conference/sessions/{id}/end", self.end)
        r.add("POST", "/api/conference/sessions/{id}/participants", self.add_participant)
        r.add("DELETE", "/api/conference/sessions/{id}/participants/{ref}", self.remove)
        r.add("POST", "/api/conference/sessions/{id}/signal", self.signal)
        r.add("POST", "/api/conference/sessions/{id}/media", self.media)
        r.add("POST", "/api/conference/sessions/{id}/tool", self.tool)
        r.add("POST", "/api/conference/sessions/{id}/notes", self.note)
        r.add("GET", "/api/conference/sessions/{id}/frames", self.frames)
        r.add("GET", "/api/conference/join", self.join)

    def handle(self, request):
        return self.router.handle(request)

    def create(self, request):
        body = request.json
        result = self.conference.create_conference(
            subject_of(request), body.get("session_type_id"),
            body.get("participant_ids", []), body.get("max_participants"))
        return Response.of(result, status=201)

    def join(self, request):
        token = request.query.get("token")
        if not token:
            raise InvalidToken("token query parameter required")
        return Response.of(self.conference.join(token))

    def start(self, request, id):
        return Response.of(self.conference.start(subject_of(request), id))

    def end(self, request, id):
        return Response.of(self.conference.end(subject_of(request), id))

    def add_participant(self, request, id):
        return Response.of(self.conference.add_participant(
            subject_of(request), id, request.json["participant_id"]), status=201)

    def remove(self, request, id, ref):
        return Response.of(self.conference.remove_participant(subject_of(request), id, ref))

    def signal(self, request, id):
        body = request.json
        count = self.conference.relay_signal(id, body["from"], body["payload"],
                                             body.get("to"))
        return Response.of({"delivered": count})

    def media(self, request, id):
        body = request.json
        actor_ref = body.get("actor_ref")
        if actor_ref is None:
            subject = subject_of(request)
            actor_ref = f"{subject.kind}:{subject.id}"
        return Response.of(self.conference.set_media(
            actor_ref, id, body["target"], body["device"], body["on"]))

    def tool(self, request, id):
        body = request.json
        count = self.conference.tool_event(subject_of(request), id,
                                           body["kind"], body.get("params", {}))
        return Response.of({"delivered": count})

    def note(self, request, id):
        asset = self.conference.attach_note(subject_of(request), id,
                                            request.json.get("text", ""))
        return Response.of(asset, status=201)

    def frames(self, request, id):
        ref = request.query.get("member")
        return Response.of({"frames": self.conference.drain_frames(id, ref)})


class DeviceHandler:
    def __init__(self, devices):
        self.devices = devices
        r = self.router = Router()
        r.add("POST", "/api/device/upload", self.upload)
        r.add("POST", "/api/device/assign", self.assign)
        r.add("GET", "/api/device/quarantine", self.list_quarantine)
        r.add("POST", "/api/device/quarantine/{id}/resolve", self.resolve)

    def handle(self, request):
        return self.router.handle(request)

    def upload(self, request):
        subject = subject_of(request)
        if subject.kind != "device":
            raise Unauthorized("uploads require a device token")
        return Response.of(self.devices.upload(request.json, subject), status=201)

    def assign(self, request):
        body = request.json
        self.devices.assign_device(body["device_id"], body["participant_id"],
                                   subject_of(request))
        return Response.of({"assigned": True})

    def list_quarantine(self, request):
        return Response.of({"items": self.devices.list_quarantine(subject_of(request))})

    def resolve(self, request, id):
        body = request.json
        result = self.devices.review_quarantine(id, body["action"], subject_of(request),
                                                body.get("participant_id"))
        return Response.of(result)


class RobotHandler:
    def __init__(self, robots):
        self.robots = robots
        r = self.router = Router()
        r.add("GET", "/api/robot/fleet", self.fleet)
        r.add("POST", "/api/robot/{id}/teleop", self.start_teleop)
        r.add("DELETE", "/api/robot/{id}/teleop", self.end_teleop)
        r.add("POST", "/api/robot/channel/{cid}/cmd", self.command)
        r.add("POST", "/api/robot/channel/{cid}/heartbeat", self.heartbeat)
        r.add("POST", "/api/robot/{id}/telemetry", self.telemetry)
        r.add("GET", "/api/robot/{id}/coverage", self.coverage)

    def handle(self, request):
        return self.router.handle(request)

    def fleet(self, request):
        return Response.of({"robots": self.robots.fleet_status(subject_of(request))})

    def start_teleop(self, request, id):
        channel = self.robots.start_teleop(subject_of(request), id)
        return Response.of({"channel_id": channel.channel_id,
                            "session_id": channel.session_id,
                            "mode": channel.mode}, status=201)

    def end_teleop(self, request, id):
        runtime = self.robots._runtime(id)
        if runtime.channel is None:
            raise NotFound(f"no open channel for robot {id}")
        session = self.robots.end_teleop(runtime.channel.channel_id)
        return Response.of(session)

    def command(self, request, cid):
        self.robots.send_command(cid, request.json)
        return Response.of({"accepted": True})

    def heartbeat(self, request, cid):
        self.robots.operator_heartbeat(cid)
        return Response.of({"ok": True})

    def telemetry(self, request, id):
        subject = subject_of(request)
        if subject.kind != "device" or subject.id != id:
            raise Unauthorized("telemetry requires the robot's own device token")
        self.robots.report_telemetry(id, request.json)
        return Response.of({"ok": True})

    def coverage(self, request, id):
        return Response.of(self.robots.coverage(id, subject_of(request)))


class TriageHandler:
    def __init__(self, triage):
        self.triage = triage
        r = self.router = Router()
        r.add("POST", "/api/triage/submit", self.submit)
        r.add("POST", "/api/triage/schedule", self.schedule)
        r.add("GET", "/api/triage/join", self.join)
        r.add("GET", "/api/triage/appointments/{id}", self.appointment)

    def handle(self, request):
        return self.router.handle(request)

    def submit(self, request):
        return Response.of(self.triage.submit(request.json), status=201)

    def schedule(self, request):
        body = request.json
        return Response.of(self.triage.schedule(body["result_id"], body.get("name", ""),
                                                body.get("email", "")), status=201)

    def join(self, request):
        token = request.query.get("token")
        if not token:
            raise InvalidToken("token query parameter required")
        return Response.of(self.triage.join_appointment(token))

    def appointment(self, request, id):
        return Response.of(self.triage.get_appointment(id))
