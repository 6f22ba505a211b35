"""Authentication and site/project-scoped authorization.

Tokens are header-free signed strings: a fixed-order payload
(kind|id|issued|expires) plus an HMAC-SHA256 signature. Authorization is a
pure function of the grants snapshot, the subject, the action and the
resource scope.
"""

import base64
import hashlib
import hmac
import secrets
from dataclasses import dataclass, field

from .errors import (
    BadCredentials,
    Expired,
    InvalidSignature,
    SubjectDisabled,
    UnknownScope,
)

DEFAULT_TTL_S = 8 * 3600

ACTIONS = ("read", "write", "admin")


@dataclass(frozen=True)
class Subject:
    kind: str  # user | participant | device
    id: str


@dataclass(frozen=True)
class Scope:
    """Resource path site[/project[/entity]].

    ``entity_kind``/``entity_id`` identify a leaf resource when the rule
    table needs it (participant records, sessions, device upload scopes);
    ``participant_ids`` lists the participants attached to that leaf.
    """

    site_id: str | None = None
    project_id: str | None = None
    entity_kind: str | None = None
    entity_id: str | None = None
    participant_ids: tuple = ()


@dataclass
class AuthzDecision:
    allowed: bool
    reason: str

    def __bool__(self):
        return self.allowed


def _digest(secret: str, salt: str) -> str:
    return hashlib.sha256((salt + ":" + secret).encode()).hexdigest()


class AuthService:
    def __init__(self, store, clock, signing_key: str, bus=None, ttl_s: int = DEFAULT_TTL_S):
        self.store = store
        self.clock = clock
        self.key = signing_key.encode()
        self.bus = bus
        self.ttl_s = ttl_s

    # -- credentials ---------------------------------------------------------

    def set_password(self, user_id: str, password: str) -> None:
        salt = secrets.token_hex(8)
        self.store.put("credential", f"password:{user_id}", {
            "subject_kind": "user", "subject_id": user_id,
            "kind": "password", "salt": salt,
            "secret_digest": _digest(password, salt),
        })

    def register_static_token(self, subject_kind: str, subject_id: str, token: str,
                              expires_at: float | None = None) -> None:
        salt = secrets.token_hex(8)
        self.store.put("credential", f"static:{_digest(token, 'idx')}", {
            "subject_kind": subject_kind, "subject_id": subject_id,
            "kind": "static_token", "salt": salt,
            "secret_digest": _digest(token, salt),
            "expires_at": expires_at,
        })

    def register_fingerprint(self, device_id: str, fingerprint: str) -> None:
        self.store.put("credential", f"fp:{fingerprint}", {
            "subject_kind": "device", "subject_id": device_id,
            "kind": "certificate_fingerprint",
            "secret_digest": fingerprint, "salt": "",
        })

    # -- authentication ------------------------------------------------------

    def authenticate(self, presentation: dict) -> str:
        """Accepts {username,password} | {static_token} | {fingerprint}.

        Failure is uniform BadCredentials regardless of which part was
        wrong, so usernames cannot be enumerated.
        """
        if "username" in presentation:
            cred, subject = self._match_password(presentation)
        elif "static_token" in presentation:
            cred, subject = self._match_static(presentation["static_token"])
        elif "fingerprint" in presentation:
            cred = self.store.get("credential", f"fp:{presentation['fingerprint']}")
            subject = Subject("device", cred["subject_id"]) if cred else None
        else:
            raise BadCredentials("no usable credential presented")
        if cred is None or subject is None:
            raise BadCredentials("authentication failed")
        self._check_enabled(subject)
        token = self.issue_token(subject)
        if self.bus is not None:
            self.bus.publish(f"auth.{subject.kind}.login", {"subject_id": subject.id},
                             publisher="auth")
        return token

    def _match_password(self, presentation):
        user = next((u for u in self.store.list("user")
                     if u["username"] == presentation.get("username")), None)
        if user is None:
            return None, None
        cred = self.store.get("credential", f"password:{user['id']}")
        if cred is None:
            return None, None
        if not hmac.compare_digest(cred["secret_digest"],
                                   _digest(presentation.get("password", ""), cred["salt"])):
            return None, None
        return cred, Subject("user", user["id"])

    def _match_static(self, token: str):
        cred = self.store.get("credential", f"static:{_digest(token, 'idx')}")
        if cred is None:
            return None, None
        if not hmac.compare_digest(cred["secret_digest"], _digest(token, cred["salt"])):
            return None, None
        if cred.get("expires_at") is not None and self.clock.now() >= cred["expires_at"]:
            return None, None
        return cred, Subject(cred["subject_kind"], cred["subject_id"])

    def _check_enabled(self, subject: Subject) -> None:
        if subject.kind == "device":
            dev = self.store.get("device", subject.id)
            if dev is None or not dev.get("enabled", True):
                raise SubjectDisabled("device disabled")

    # -- tokens --------------------------------------------------------------

    def issue_token(self, subject: Subject, ttl_s: int | None = None) -> str:
        now = self.clock.now()
        payload = f"{subject.kind}|{subject.id}|{now:.3f}|{now + (ttl_s or self.ttl_s):.3f}"
        raw = payload.encode()
        sig = hmac.new(self.key, raw, hashlib.sha256).digest()
        return (base64.urlsafe_b64encode(raw).decode().rstrip("=") + "." +
                base64.urlsafe_b64encode(sig).decode().rstrip("="))

    def verify(self, token: str) -> Subject:
        try:
            body, sig = token.split(".", 1)
            raw = base64.urlsafe_b64decode(body + "=" * (-len(body) % 4))
            got = base64.urlsafe_b64decode(sig + "=" * (-len(sig) % 4))
            want = hmac.new(self.key, raw, hashlib.sha256).digest()
            if not hmac.compare_digest(got, want):
                raise InvalidSignature("signature mismatch")
            kind, subject_id, _issued, expires = raw.decode().split("|")
        except InvalidSignature:
            raise
        except Exception as exc:
            raise InvalidSignature(f"unparseable token: {exc}") from exc
        if self.clock.now() >= float(expires):
            raise Expired("token expired")
        return Subject(kind, subject_id)

    # -- authorization -------------------------------------------------------

    def grants_for(self, user_id: str) -> list[dict]:
        user = self.store.get("user", user_id)
        grants = list((user or {}).get("grants", []))
        for group in self.store.list("user_group"):
            if user_id in group.get("member_user_ids", []):
                grants.extend(group.get("grants", []))
        return grants

    def authorize(self, subject: Subject, action: str, scope: Scope) -> AuthzDecision:
        if action not in ACTIONS:
            raise UnknownScope(f"unknown action {action!r}")
        self._resolve(scope)

        if subject.kind == "user":
            user = self.store.get("user", subject.id)
            if user is None:
                return AuthzDecision(False, "unknown_user")
            if user.get("is_superadmin"):
                return AuthzDecision(True, "superadmin")
            if scope.site_id is None:
                return AuthzDecision(False, "platform_scope_requires_superadmin")
            for grant in self.grants_for(subject.id):
                if (grant["scope_kind"] == "site" and grant["scope_id"] == scope.site_id
                        and grant["role"] == "admin"):
                    return AuthzDecision(True, "site_admin")
                if (grant["scope_kind"] == "project" and scope.project_id is not None
                        and grant["scope_id"] == scope.project_id):
                    if grant["role"] == "admin":
                        return AuthzDecision(True, "project_admin")
                    if action in ("read", "write"):
                        return AuthzDecision(True, "project_member")
            return AuthzDecision(False, "no_matching_grant")

        if subject.kind == "participant":
            if (scope.entity_kind == "participant" and scope.entity_id == subject.id
                    and action == "read"):
                return AuthzDecision(True, "own_record")
            if (scope.entity_kind == "session" and subject.id in scope.participant_ids
                    and action in ("read", "write")):
                return AuthzDecision(True, "own_session")
            return AuthzDecision(False, "participant_scope_only")

        if subject.kind == "device":
            if scope.entity_kind == "upload" and action == "write":
                dev = self.store.get("device", subject.id)
                assigned = (dev or {}).get("assigned_participant_id")
                if assigned and assigned in scope.participant_ids:
                    return AuthzDecision(True, "assigned_upload")
            return AuthzDecision(False, "device_upload_only")

        return AuthzDecision(False, "unknown_subject_kind")

    def _resolve(self, scope: Scope) -> None:
        if scope.site_id is not None and not self.store.exists("site", scope.site_id):
            raise UnknownScope(f"site {scope.site_id} not found")
        if scope.project_id is not None:
            project = self.store.get("project", scope.project_id)
            if project is None:
                raise UnknownScope(f"project {scope.project_id} not found")
            if scope.site_id is not None and project["site_id"] != scope.site_id:
                raise UnknownScope("project not in named site")

    def is_superadmin(self, subject: Subject) -> bool:
        if subject.kind != "user":
            return False
        user = self.store.get("user", subject.id)
        return bool(user and user.get("is_superadmin"))
