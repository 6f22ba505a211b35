"""Error taxonomy shared by every service.

Each error carries a stable machine code and the HTTP status the gateway
maps it to.
"""


class PlatformError(Exception):
    code = "error"
    http_status = 400

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class Unauthorized(PlatformError):
    code = "unauthorized"
    http_status = 403


class NotFound(PlatformError):
    code = "not_found"
    http_status = 404


class ReferenceNotFound(PlatformError):
    code = "reference_not_found"
    http_status = 422


class DuplicateKey(PlatformError):
    code = "duplicate_key"
    http_status = 409


class DependentsExist(PlatformError):
    code = "dependents_exist"
    http_status = 409


class InvariantViolation(PlatformError):
    code = "invariant_violation"
    http_status = 422


class SessionNotActive(PlatformError):
    code = "session_not_active"
    http_status = 409


class AlreadyClosed(PlatformError):
    code = "already_closed"
    http_status = 409


class ConsentMissing(PlatformError):
    code = "consent_missing"
    http_status = 403


# -- auth --------------------------------------------------------------------

class BadCredentials(PlatformError):
    code = "bad_credentials"
    http_status = 401


class SubjectDisabled(PlatformError):
    code = "subject_disabled"
    http_status = 403


class InvalidSignature(PlatformError):
    code = "invalid_signature"
    http_status = 401


class Expired(PlatformError):
    code = "expired"
    http_status = 401


class UnknownScope(PlatformError):
    code = "unknown_scope"
    http_status = 422


# -- gateway -----------------------------------------------------------------

class NoRoute(PlatformError):
    code = "no_route"
    http_status = 404


class ServiceUnreachable(PlatformError):
    code = "service_unreachable"
    http_status = 502


class DuplicatePrefix(PlatformError):
    code = "duplicate_prefix"
    http_status = 409


# -- event bus ---------------------------------------------------------------

class MalformedTopic(PlatformError):
    code = "malformed_topic"


class MalformedPattern(PlatformError):
    code = "malformed_pattern"


# -- conference --------------------------------------------------------------

class TooManyParticipants(PlatformError):
    code = "too_many_participants"
    http_status = 409


class InvalidToken(PlatformError):
    code = "invalid_token"
    http_status = 401


class SessionEnded(PlatformError):
    code = "session_ended"
    http_status = 410


class RoomFull(PlatformError):
    code = "room_full"
    http_status = 409


class NotHost(PlatformError):
    code = "not_host"
    http_status = 403


class AlreadyStarted(PlatformError):
    code = "already_started"
    http_status = 409


class NotMember(PlatformError):
    code = "not_member"
    http_status = 403


class TargetNotMember(PlatformError):
    code = "target_not_member"
    http_status = 422


class RoomNotActive(PlatformError):
    code = "room_not_active"
    http_status = 409


# -- device ------------------------------------------------------------------

class DeviceDisabled(PlatformError):
    code = "device_disabled"
    http_status = 403


class MalformedBatch(PlatformError):
    code = "malformed_batch"
    http_status = 422


class ProjectMismatch(PlatformError):
    code = "project_mismatch"
    http_status = 422


class AlreadyResolved(PlatformError):
    code = "already_resolved"
    http_status = 409


class EmptySeries(PlatformError):
    code = "empty_series"
    http_status = 422


# -- robot -------------------------------------------------------------------

class RobotBusy(PlatformError):
    code = "robot_busy"
    http_status = 409


class RobotOffline(PlatformError):
    code = "robot_offline"
    http_status = 409


class ChannelClosed(PlatformError):
    code = "channel_closed"
    http_status = 409


class NotInTeleop(PlatformError):
    code = "not_in_teleop"
    http_status = 409


class CommandOutOfRange(PlatformError):
    code = "command_out_of_range"
    http_status = 422


class NoSampledCell(PlatformError):
    code = "no_sampled_cell"
    http_status = 422


class MalformedTelemetry(PlatformError):
    code = "malformed_telemetry"
    http_status = 422


# -- sim ---------------------------------------------------------------------

class NoPath(PlatformError):
    code = "no_path"
    http_status = 422


class OutOfBounds(PlatformError):
    code = "out_of_bounds"
    http_status = 422


class ScriptError(PlatformError):
    code = "script_error"


# -- triage ------------------------------------------------------------------

class IncompleteQuestionnaire(PlatformError):
    code = "incomplete_questionnaire"
    http_status = 422


class NoSlotsAvailable(PlatformError):
    code = "no_slots_available"
    http_status = 409


class InvalidEmail(PlatformError):
    code = "invalid_email"
    http_status = 422


# -- cli ---------------------------------------------------------------------

class ScenarioFailed(PlatformError):
    code = "scenario_failed"


class BadConfig(PlatformError):
    code = "bad_config"
