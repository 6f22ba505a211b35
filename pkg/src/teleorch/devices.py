"""Device registration, upload-creates-session ingestion and a simple
accelerometer activity summary.

Every accepted upload becomes exactly one completed session spanning the
batch's reading timestamps, carrying the canonical serialized batch as its
first asset. Uploads that cannot be attributed to a consenting participant
are quarantined for staff review.
"""

import json
import math
from dataclasses import dataclass

from .auth import Scope, Subject
from .errors import (
    AlreadyResolved,
    DeviceDisabled,
    EmptySeries,
    MalformedBatch,
    NotFound,
    ProjectMismatch,
    Unauthorized,
)
from .registry import SYSTEM

READING_KINDS = ("thermometer_c", "weight_kg", "bp_mmhg", "spo2_pct",
                 "heart_rate_bpm", "accel_g")

# Per-epoch mean |  ||a|| - 1g |  thresholds, in g.
SEDENTARY_MAX_G = 0.05
LIGHT_MAX_G = 0.20
MODERATE_MAX_G = 0.60

CATEGORIES = ("sedentary", "light", "moderate", "vigorous")


def canonical_batch(batch: dict) -> bytes:
    """Key-sorted compact JSON, UTF-8; checksum-stable across round-trips."""
    return json.dumps(batch, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


def validate_batch(batch: dict) -> None:
    readings = batch.get("readings")
    if not isinstance(readings, list) or not readings:
        raise MalformedBatch("readings must be a non-empty list")
    last_ts = -math.inf
    for reading in readings:
        ts = reading.get("ts")
        if not isinstance(ts, (int, float)) or not math.isfinite(ts):
            raise MalformedBatch("reading ts must be finite")
        if ts < last_ts:
            raise MalformedBatch("readings must be sorted by ts ascending")
        last_ts = ts
        kind = reading.get("kind")
        if kind not in READING_KINDS:
            raise MalformedBatch(f"unknown reading kind {kind!r}")
        values = reading.get("values")
        if kind == "spo2_pct":
            if not (0 <= float(values) <= 100):
                raise MalformedBatch("spo2 out of [0, 100]")
        if kind == "accel_g":
            if (not isinstance(values, (list, tuple)) or len(values) != 3
                    or not all(math.isfinite(v) for v in values)):
                raise MalformedBatch("accel values must be 3 finite components")


def classify_activity(series: list, epoch_s: int) -> dict:
    """Split an accel series into epochs and bucket each by mean dynamic
    acceleration.

    ``series``: sorted [(ts, (ax, ay, az) in g)]. A trailing partial epoch
    covering less than half of epoch_s is dropped.
    """
    if epoch_s <= 0:
        raise EmptySeries("epoch_s must be positive")
    if not series:
        raise EmptySeries("accel series is empty")
    t0 = series[0][0]
    epochs: dict[int, list] = {}
    for ts, accel in series:
        epochs.setdefault(int((ts - t0) // epoch_s), []).append((ts, accel))
    last_index = max(epochs)
    minutes = {c: 0.0 for c in CATEGORIES}
    counted = 0
    for index in sorted(epochs):
        samples = epochs[index]
        if index == last_index and index > 0:
            span = samples[-1][0] - (t0 + index * epoch_s)
            if span < epoch_s / 2:
                continue
        deviation = sum(abs(math.sqrt(a[0] ** 2 + a[1] ** 2 + a[2] ** 2) - 1.0)
                        for _, a in samples) / len(samples)
        if deviation < SEDENTARY_MAX_G:
            category = "sedentary"
        elif deviation < LIGHT_MAX_G:
            category = "light"
        elif deviation < MODERATE_MAX_G:
            category = "moderate"
        else:
            category = "vigorous"
        minutes[category] += epoch_s / 60.0
        counted += 1
    return {
        "epoch_s": epoch_s,
        "minutes": minutes,
        "total_active_minutes": minutes["light"] + minutes["moderate"] + minutes["vigorous"],
        "epochs_counted": counted,
    }


@dataclass
class QuarantineEntry:
    id: str
    batch: dict
    device_id: str
    reason: str  # unassigned_device | consent_missing
    resolved: bool = False
    released_session_id: str | None = None


class DeviceService:
    def __init__(self, registry, auth, bus, clock, ids):
        self.registry = registry
        self.auth = auth
        self.bus = bus
        self.clock = clock
        self.ids = ids
        self.quarantine: dict[str, QuarantineEntry] = {}
        self.session_type_id: str | None = None

    def _session_type(self) -> str:
        if self.session_type_id is None:
            st = self.registry.create("session_type",
                                      {"service_key": "device", "name": "Device upload"},
                                      SYSTEM)
            self.session_type_id = st["id"]
        return self.session_type_id

    def assign_device(self, device_id: str, participant_id: str, assigner: Subject) -> None:
        device = self.registry.store.get("device", device_id)
        if device is None:
            raise NotFound(f"device {device_id}")
        participant = self.registry.store.get("participant", participant_id)
        if participant is None:
            raise NotFound(f"participant {participant_id}")
        if participant["project_id"] != device["project_id"]:
            raise ProjectMismatch("device and participant belong to different projects")
        if not self.registry._is_system(assigner):
            project = self.registry.store.get("project", participant["project_id"])
            decision = self.auth.authorize(
                assigner, "write",
                Scope(site_id=project["site_id"], project_id=project["id"]))
            if not decision:
                raise Unauthorized(f"assign_device: {decision.reason}")
        self.registry.update("device", device_id,
                             {"assigned_participant_id": participant_id}, SYSTEM)
        self.bus.publish(f"device.{device_id}.assigned",
                         {"participant_id": participant_id}, publisher="device-service")

    def upload(self, batch: dict, device_subject: Subject) -> dict:
        device = self.registry.store.get("device", device_subject.id)
        if device is None:
            raise NotFound(f"device {device_subject.id}")
        if not device.get("enabled", True):
            raise DeviceDisabled(f"device {device['id']} disabled")
        batch = {"device_id": device["id"],
                 "readings": batch.get("readings", []),
                 "received_ts": self.clock.now()}
        validate_batch(batch)
        participant_id = device.get("assigned_participant_id")
        if participant_id is None:
            return self._quarantine(batch, device["id"], "unassigned_device")
        participant = self.registry.store.get("participant", participant_id)
        if not participant or not participant.get("consent_data_storage"):
            return self._quarantine(batch, device["id"], "consent_missing")
        session = self._create_session(batch, device["id"], participant_id)
        return {"session_id": session["id"]}

    def _quarantine(self, batch: dict, device_id: str, reason: str) -> dict:
        entry = QuarantineEntry(id=self.ids.new_id(), batch=batch,
                                device_id=device_id, reason=reason)
        self.quarantine[entry.id] = entry
        self.bus.publish(f"device.{device_id}.quarantined",
                         {"entry_id": entry.id, "reason": reason},
                         publisher="device-service")
        return {"quarantine_id": entry.id, "reason": reason}

    def _create_session(self, batch: dict, device_id: str, participant_id: str) -> dict:
        readings = batch["readings"]
        start_ts, end_ts = readings[0]["ts"], readings[-1]["ts"]
        session = self.registry.open_session(
            "device", self._session_type(),
            Subject("device", device_id),
            participant_ids=[participant_id], device_ids=[device_id],
            status="in_progress", start_ts=start_ts)
        self.registry.attach_asset(session["id"], "upload.json", "application/json",
                                   canonical_batch(batch), SYSTEM)
        accel = [(r["ts"], tuple(r["values"])) for r in readings if r["kind"] == "accel_g"]
        if accel:
            summary = classify_activity(accel, epoch_s=60)
            self.registry.attach_asset(session["id"], "activity_summary.json",
                                       "application/json",
                                       canonical_batch(summary), SYSTEM)
        self.registry.close_session(session["id"], "completed", SYSTEM, end_ts=end_ts)
        self.bus.publish(f"device.{device_id}.upload",
                         {"session_id": session["id"]}, publisher="device-service")
        return session

    def review_quarantine(self, entry_id: str, action: str, actor: Subject,
                          participant_id: str | None = None) -> dict:
        entry = self.quarantine.get(entry_id)
        if entry is None:
            raise NotFound(f"quarantine entry {entry_id}")
        if entry.resolved:
            raise AlreadyResolved(f"entry {entry_id} already resolved")
        device = self.registry.store.get("device", entry.device_id)
        if not self.registry._is_system(actor):
            project = self.registry.store.get("project", device["project_id"])
            decision = self.auth.authorize(
                actor, "write", Scope(site_id=project["site_id"], project_id=project["id"]))
            if not decision:
                raise Unauthorized(f"review_quarantine: {decision.reason}")
        if action == "discard":
            entry.resolved = True
            return {"resolved": True, "session_id": None}
        if action == "assign_and_release":
            if participant_id is None:
                raise ProjectMismatch("participant required for release")
            self.assign_device(entry.device_id, participant_id, actor)
            session = self._create_session(entry.batch, entry.device_id, participant_id)
            entry.resolved = True
            entry.released_session_id = session["id"]
            return {"resolved": True, "session_id": session["id"]}
        raise MalformedBatch(f"unknown quarantine action {action!r}")

    def list_quarantine(self, actor: Subject) -> list[dict]:
        out = []
        for entry in self.quarantine.values():
            out.append({"id": entry.id, "device_id": entry.device_id,
                        "reason": entry.reason, "resolved": entry.resolved,
                        "released_session_id": entry.released_session_id})
        out.sort(key=lambda e: e["id"])
        return out
