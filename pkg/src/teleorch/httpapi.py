"""Minimal HTTP-shaped request/response contract shared by the gateway, the
in-process service endpoints and the CLI conformance client."""

import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import NotFound, PlatformError


@dataclass
class Request:
    method: str
    path: str
    query: dict = field(default_factory=dict)
    headers: dict = field(default_factory=dict)
    body: bytes | None = None
    context: dict = field(default_factory=dict)  # gateway-injected subject

    @property
    def json(self) -> Any:
        if not self.body:
            return {}
        return json.loads(self.body.decode("utf-8"))


@dataclass
class Response:
    status: int = 200
    body: bytes = b""
    headers: dict = field(default_factory=dict)

    @classmethod
    def of(cls, payload: Any, status: int = 200) -> "Response":
        return cls(status=status,
                   body=json.dumps(payload, sort_keys=True).encode("utf-8"),
                   headers={"content-type": "application/json"})

    @classmethod
    def raw(cls, content: bytes, media_type: str, status: int = 200) -> "Response":
        return cls(status=status, body=content, headers={"content-type": media_type})

    @property
    def json(self) -> Any:
        return json.loads(self.body.decode("utf-8")) if self.body else None


def error_response(exc: PlatformError) -> Response:
    return Response.of({"error": exc.code, "message": exc.message}, status=exc.http_status)


class Router:
    """Method + path-template dispatch, e.g. POST /sessions/{id}/start."""

    def __init__(self):
        self.routes: list[tuple[str, re.Pattern, Callable]] = []

    def add(self, method: str, template: str, fn: Callable) -> None:
        pattern = re.compile(
            "^" + re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", template) + "$")
        self.routes.append((method.upper(), pattern, fn))

    def handle(self, request: Request) -> Response:
        try:
            for method, pattern, fn in self.routes:
                if method != request.method.upper():
                    continue
                match = pattern.match(request.path)
                if match:
                    return fn(request, **match.groupdict())
            raise NotFound(f"no handler for {request.method} {request.path}")
        except PlatformError as exc:
            return error_response(exc)
