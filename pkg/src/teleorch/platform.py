"""Single-binary assembly: wires store, bus, auth, registry, the services
and the gateway; provides idempotent demo seeding for the CLI."""

from .auth import AuthService, Subject
from .bus import EventBus
from .clock import SimClock, SystemClock
from .conference import ConferenceService
from .devices import DeviceService
from .gateway import Gateway, InProcessEndpoint, RouteEntry
from .ids import IdGenerator
from .outbox import Outbox
from .registry import SYSTEM, Registry
from .rest import (
    AuthHandler,
    ConferenceHandler,
    CoreHandler,
    DeviceHandler,
    RobotHandler,
    TriageHandler,
)
from .robots import RobotService
from .store import FileStore, MemoryStore
from .triage import TriageService
from . import sim

DEFAULT_CONFIG = {
    "bind_address": "127.0.0.1:8080",
    "base_url": "https://localhost",
    "auth": {"token_secret": "dev-secret", "token_ttl_s": 8 * 3600},
    "admin": {"username": "admin", "password": "admin-password"},
    "rssi": {"good_dbm": -60.0, "dead_dbm": -75.0},
}

DEMO_WORLD = """\
####################
#R.......##........#
#........##........#
#...####.##.####...#
#...#..............#
#...#..######......#
#C..#..#....#...a..#
#......#....#......#
#......#....#......#
####################
---
{"resolution": 0.5, "routers": [{"p0_dbm": -40, "pathloss_exp": 2.5}],
 "labels": {"a": "activity_room"}}
"""

DEMO_DEVICE_TOKENS = {
    "thermometer-1": "demo-token-thermometer-1",
    "wearable-1": "demo-token-wearable-1",
    "robot-1": "demo-token-robot-1",
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


class Platform:
    def __init__(self, config: dict | None = None, clock=None, seed: int | None = None,
                 data_path: str | None = None):
        self.config = _merge(DEFAULT_CONFIG, config or {})
        self.clock = clock or SystemClock()
        self.ids = IdGenerator(seed)
        self.store = FileStore(data_path) if data_path else MemoryStore()
        self.bus = EventBus(clock=self.clock)
        self.auth = AuthService(self.store, self.clock,
                                self.config["auth"]["token_secret"], bus=self.bus,
                                ttl_s=self.config["auth"]["token_ttl_s"])
        self.registry = Registry(self.store, self.bus, self.clock, self.ids, self.auth)
        self.outbox = Outbox(self.clock)
        self.conference = ConferenceService(self.registry, self.auth, self.bus,
                                            self.clock, self.ids, self.outbox,
                                            base_url=self.config["base_url"])
        self.devices = DeviceService(self.registry, self.auth, self.bus,
                                     self.clock, self.ids)
        self.robots = RobotService(self.registry, self.auth, self.bus, self.clock,
                                   self.ids,
                                   good_dbm=self.config["rssi"]["good_dbm"],
                                   dead_dbm=self.config["rssi"]["dead_dbm"])
        self.triage = None  # wired by seed_demo once the triage project exists
        self.gateway = Gateway(self.auth, bus=self.bus)
        self._bootstrap_admin()
        self._register_routes()

    # -- wiring --------------------------------------------------------------

    def _bootstrap_admin(self) -> None:
        admin = self.config["admin"]
        existing = next((u for u in self.store.list("user")
                         if u["username"] == admin["username"]), None)
        if existing is None:
            user = self.registry.create("user", {"username": admin["username"],
                                                 "is_superadmin": True}, SYSTEM)
            self.auth.set_password(user["id"], admin["password"])
            self.admin_user_id = user["id"]
        else:
            self.admin_user_id = existing["id"]

    def _register_routes(self) -> None:
        core = InProcessEndpoint(CoreHandler(self.registry))
        conf = InProcessEndpoint(ConferenceHandler(self.conference))
        dev = InProcessEndpoint(DeviceHandler(self.devices))
        robot = InProcessEndpoint(RobotHandler(self.robots))
        self.endpoints = {"auth": InProcessEndpoint(AuthHandler(self.auth)),
                          "core-registry": core, "conference-service": conf,
                          "device-service": dev, "robot-service": robot}
        gw = self.gateway
        gw.register_route(RouteEntry("/api/auth", "auth", public=True),
                          self.endpoints["auth"])
        gw.register_route(RouteEntry("/api/core", "core-registry"), core)
        gw.register_route(RouteEntry("/api/conference", "conference-service"), conf)
        gw.register_route(RouteEntry("/api/conference/join", "conference-service",
                                     public=True))
        gw.register_route(RouteEntry("/api/device", "device-service"), dev)
        gw.register_route(RouteEntry("/api/robot", "robot-service"), robot)
        for service_key, prefix in [("auth", "/api/auth"),
                                    ("core-registry", "/api/core"),
                                    ("conference-service", "/api/conference"),
                                    ("device-service", "/api/device"),
                                    ("robot-service", "/api/robot")]:
            if not any(s["service_key"] == service_key
                       for s in self.store.list("service_registration")):
                self.registry.create("service_registration",
                                     {"service_key": service_key,
                                      "route_prefix": prefix,
                                      "endpoint": "in-process"}, SYSTEM)

    def wire_triage(self, project_id: str, nurse_user_id: str) -> None:
        self.triage = TriageService(self.registry, self.conference, self.auth,
                                    self.bus, self.clock, self.ids, self.outbox,
                                    project_id, nurse_user_id)
        endpoint = InProcessEndpoint(TriageHandler(self.triage))
        self.endpoints["triage-service"] = endpoint
        gw = self.gateway
        if "/api/triage" not in gw.routes:
            gw.register_route(RouteEntry("/api/triage", "triage-service"), endpoint)
            gw.register_route(RouteEntry("/api/triage/submit", "triage-service",
                                         public=True))
            gw.register_route(RouteEntry("/api/triage/schedule", "triage-service",
                                         public=True))
            gw.register_route(RouteEntry("/api/triage/join", "triage-service",
                                         public=True))
            if not any(s["service_key"] == "triage-service"
                       for s in self.store.list("service_registration")):
                self.registry.create("service_registration",
                                     {"service_key": "triage-service",
                                      "route_prefix": "/api/triage",
                                      "endpoint": "in-process"}, SYSTEM)

    # -- seeding -------------------------------------------------------------

    def _find_or_create(self, kind: str, match: dict, fields: dict) -> dict:
        for doc in self.store.list(kind):
            if all(doc.get(k) == v for k, v in match.items()):
                return doc
        return self.registry.create(kind, fields, SYSTEM)

    def seed_demo(self) -> dict:
        """Create the demo tenant; safe to run repeatedly."""
        site = self._find_or_create("site", {"name": "Demo Care Facility"},
                                    {"name": "Demo Care Facility"})
        clinic = self._find_or_create("project", {"name": "Clinic", "site_id": site["id"]},
                                      {"name": "Clinic", "site_id": site["id"]})
        residence = self._find_or_create("project",
                                         {"name": "Residence", "site_id": site["id"]},
                                         {"name": "Residence", "site_id": site["id"]})
        triage_project = self._find_or_create("project",
                                              {"name": "Triage", "site_id": site["id"]},
                                              {"name": "Triage", "site_id": site["id"]})

        def user(username, grants):
            doc = self._find_or_create("user", {"username": username},
                                       {"username": username, "grants": grants})
            self.auth.set_password(doc["id"], f"{username}-password")
            return doc

        clinician = user("clinician", [{"scope_kind": "project", "scope_id": clinic["id"],
                                        "role": "member"}])
        nurse = user("nurse", [{"scope_kind": "project", "scope_id": triage_project["id"],
                                "role": "member"}])
        operator = user("operator", [{"scope_kind": "project",
                                      "scope_id": residence["id"], "role": "member"}])
        site_admin = user("site-admin", [{"scope_kind": "site", "scope_id": site["id"],
                                          "role": "admin"}])

        participants = []
        for name in ("alice", "bob", "carol", "dave", "erin", "frank"):
            participants.append(self._find_or_create(
                "participant", {"display_name": name, "project_id": clinic["id"]},
                {"display_name": name, "project_id": clinic["id"],
                 "email": f"{name}@example.org", "consent_data_storage": True}))

        devices = {}
        for name, kind, project in (("thermometer-1", "medical", residence),
                                    ("wearable-1", "wearable", residence),
                                    ("robot-1", "robot", residence)):
            devices[name] = self._find_or_create(
                "device", {"name": name},
                {"name": name, "kind": kind, "site_id": site["id"],
                 "project_id": project["id"]})
            self.auth.register_static_token("device", devices[name]["id"],
                                            DEMO_DEVICE_TOKENS[name])

        if devices["robot-1"]["id"] not in self.robots.robots:
            world = sim.parse_world(DEMO_WORLD)
            self.robots.register_robot(devices["robot-1"]["id"], world)

        self.wire_triage(triage_project["id"], nurse["id"])
        return {
            "site_id": site["id"],
            "projects": {"clinic": clinic["id"], "residence": residence["id"],
                         "triage": triage_project["id"]},
            "users": {"admin": self.admin_user_id, "clinician": clinician["id"],
                      "nurse": nurse["id"], "operator": operator["id"],
                      "site_admin": site_admin["id"]},
            "participants": [p["id"] for p in participants],
            "devices": {name: d["id"] for name, d in devices.items()},
            "counts": {
                "sites": len(list(self.store.list("site"))),
                "projects": len(list(self.store.list("project"))),
                "users": len(list(self.store.list("user"))),
                "participants": len(list(self.store.list("participant"))),
                "devices": len(list(self.store.list("device"))),
            },
        }

    # -- convenience ---------------------------------------------------------

    def login(self, username: str, password: str) -> str:
        return self.auth.authenticate({"username": username, "password": password})

    def admin_token(self) -> str:
        return self.auth.issue_token(Subject("user", self.admin_user_id))
