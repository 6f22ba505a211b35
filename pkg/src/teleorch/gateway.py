"""Single public entry point: longest-prefix routing, token verification and
per-service health probes.

Services sit behind endpoint objects implementing ``handle(request)`` and
``ping()``; in single-binary deployments these are in-process adapters, in
distributed ones an HTTP client with the same contract.
"""

import time
from dataclasses import dataclass

from .errors import (
    DuplicatePrefix,
    Expired,
    InvalidSignature,
    NoRoute,
    ServiceUnreachable,
)
from .httpapi import Request, Response, error_response

# Context injected by the gateway must never be accepted from outside.
TRUSTED_HEADERS = ("x-subject-kind", "x-subject-id")


@dataclass
class RouteEntry:
    route_prefix: str
    service_key: str
    public: bool = False


class InProcessEndpoint:
    def __init__(self, handler):
        self.handler = handler
        self.stopped = False

    def handle(self, request: Request) -> Response:
        if self.stopped:
            raise ServiceUnreachable("endpoint stopped")
        return self.handler.handle(request)

    def ping(self) -> None:
        if self.stopped:
            raise ServiceUnreachable("endpoint stopped")


class Gateway:
    def __init__(self, auth, bus=None):
        self.auth = auth
        self.bus = bus
        self.routes: dict[str, RouteEntry] = {}
        self.endpoints: dict[str, object] = {}

    def register_route(self, entry: RouteEntry, endpoint=None) -> None:
        if entry.route_prefix in self.routes:
            raise DuplicatePrefix(f"prefix {entry.route_prefix!r} already routed")
        new_table = dict(self.routes)
        new_table[entry.route_prefix] = entry
        self.routes = new_table  # atomic swap
        if endpoint is not None:
            self.endpoints[entry.service_key] = endpoint

    def match(self, path: str) -> RouteEntry | None:
        best = None
        for prefix, entry in self.routes.items():
            if path.startswith(prefix):
                if best is None or len(prefix) > len(best.route_prefix):
                    best = entry
        return best

    def dispatch(self, request: Request) -> Response:
        if request.path == "/healthz":
            return Response.of(self.health())
        for header in TRUSTED_HEADERS:
            request.headers.pop(header, None)
        request.context = {}
        entry = self.match(request.path)
        if entry is None:
            return error_response(NoRoute(f"no route for {request.path}"))
        if not entry.public:
            authz = request.headers.get("authorization", "")
            if not authz.startswith("Bearer "):
                return error_response(InvalidSignature("missing bearer token"))
            try:
                subject = self.auth.verify(authz[len("Bearer "):])
            except (InvalidSignature, Expired) as exc:
                return error_response(exc)
            request.context = {"subject_kind": subject.kind, "subject_id": subject.id}
        endpoint = self.endpoints.get(entry.service_key)
        if endpoint is None:
            return error_response(ServiceUnreachable(f"{entry.service_key} not registered"))
        try:
            return endpoint.handle(request)
        except ServiceUnreachable as exc:
            return error_response(exc)

    def health(self) -> dict:
        services = []
        for key in sorted(self.endpoints):
            started = time.perf_counter()
            try:
                self.endpoints[key].ping()
                reachable = True
            except Exception:
                reachable = False
            services.append({
                "service_key": key,
                "reachable": reachable,
                "latency_ms": round((time.perf_counter() - started) * 1000.0, 3),
            })
        report = {"services": services}
        if self.bus is not None:
            report["bus"] = self.bus.stats()
        return report
