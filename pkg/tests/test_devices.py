import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from teleorch.auth import Subject
from teleorch.devices import (
    CATEGORIES,
    LIGHT_MAX_G,
    MODERATE_MAX_G,
    SEDENTARY_MAX_G,
    canonical_batch,
    classify_activity,
    validate_batch,
)
from teleorch.errors import (
    AlreadyResolved,
    DeviceDisabled,
    EmptySeries,
    MalformedBatch,
    ProjectMismatch,
    Unauthorized,
)
from teleorch.registry import SYSTEM, checksum


@pytest.fixture
def devices(platform, seeded):
    return platform.devices


@pytest.fixture
def wearable(seeded):
    return seeded["devices"]["wearable-1"]


@pytest.fixture
def resident(platform, seeded):
    doc = platform.registry.create(
        "participant", {"project_id": seeded["projects"]["residence"],
                        "display_name": "rose", "consent_data_storage": True},
        SYSTEM)
    return doc["id"]


def hr_batch(n=5, t0=1000.0, dt=60.0):
    return {"readings": [{"ts": t0 + k * dt, "kind": "heart_rate_bpm",
                          "values": 60 + k} for k in range(n)]}


# -------------------------------------------------------------- serialization

def test_canonical_batch_key_order_invariant():
    a = {"b": 1, "a": {"y": 2, "x": 3}}
    b = {"a": {"x": 3, "y": 2}, "b": 1}
    assert canonical_batch(a) == canonical_batch(b)
    assert checksum(canonical_batch(a)) == checksum(canonical_batch(b))


def test_canonical_batch_round_trip():
    batch = {"device_id": "d", "readings": [{"ts": 1.5, "kind": "spo2_pct",
                                             "values": 97.2, "note": "éπ"}]}
    blob = canonical_batch(batch)
    assert json.loads(blob.decode("utf-8")) == batch
    # re-serializing the parsed form is byte-identical
    assert canonical_batch(json.loads(blob.decode("utf-8"))) == blob


@settings(max_examples=50)
@given(st.dictionaries(st.text(min_size=1, max_size=5),
                       st.integers(-100, 100) | st.text(max_size=5),
                       max_size=6))
def test_canonical_batch_stable_property(doc):
    blob = canonical_batch(doc)
    assert canonical_batch(json.loads(blob.decode("utf-8"))) == blob


# ----------------------------------------------------------------- validation

def test_validate_rejects_bad_batches():
    with pytest.raises(MalformedBatch):
        validate_batch({"readings": []})
    with pytest.raises(MalformedBatch):
        validate_batch({"readings": [{"ts": 2, "kind": "heart_rate_bpm", "values": 60},
                                     {"ts": 1, "kind": "heart_rate_bpm", "values": 61}]})
    with pytest.raises(MalformedBatch):
        validate_batch({"readings": [{"ts": 1, "kind": "mystery", "values": 0}]})
    with pytest.raises(MalformedBatch):
        validate_batch({"readings": [{"ts": 1, "kind": "spo2_pct", "values": 120}]})
    with pytest.raises(MalformedBatch):
        validate_batch({"readings": [{"ts": 1, "kind": "accel_g",
                                      "values": [0.0, 1.0]}]})
    with pytest.raises(MalformedBatch):
        validate_batch({"readings": [{"ts": float("inf"), "kind": "spo2_pct",
                                      "values": 97}]})


def test_validate_accepts_good_batch():
    validate_batch({"readings": [
        {"ts": 1.0, "kind": "thermometer_c", "values": 36.6},
        {"ts": 1.0, "kind": "accel_g", "values": [0.0, 0.0, 1.0]},
        {"ts": 2.0, "kind": "spo2_pct", "values": 98},
    ]})


# ------------------------------------------------------------------- activity

def classify_reference(series, epoch_s):
    """Independent brute force: explicit per-epoch partition and bucketing."""
    t0 = series[0][0]
    buckets = {}
    for ts, a in series:
        buckets.setdefault(int((ts - t0) // epoch_s), []).append((ts, a))
    last = max(buckets)
    minutes = {c: 0.0 for c in CATEGORIES}
    for index, samples in sorted(buckets.items()):
        if index == last and index > 0:
            if samples[-1][0] - (t0 + index * epoch_s) < epoch_s / 2:
                continue
        dev = sum(abs(math.hypot(*a) - 1.0) for _, a in samples) / len(samples)
        if dev < SEDENTARY_MAX_G:
            minutes["sedentary"] += epoch_s / 60
        elif dev < LIGHT_MAX_G:
            minutes["light"] += epoch_s / 60
        elif dev < MODERATE_MAX_G:
            minutes["moderate"] += epoch_s / 60
        else:
            minutes["vigorous"] += epoch_s / 60
    return minutes


def test_activity_rest_is_sedentary():
    series = [(float(t), (0.0, 0.0, 1.0)) for t in range(0, 300, 1)]
    result = classify_activity(series, epoch_s=60)
    assert result["minutes"]["sedentary"] == 5.0
    assert result["total_active_minutes"] == 0.0


def test_activity_sinusoid_half_g():
    # 2 Hz sinusoid, 0.5 g amplitude on top of gravity: mean |dev| = 1/pi ~ 0.318
    series = [(t / 10.0, (0.0, 0.0, 1.0 + 0.5 * math.sin(2 * math.pi * 2 * t / 10.0)))
              for t in range(0, 1200)]
    result = classify_activity(series, epoch_s=60)
    assert result["minutes"]["moderate"] == pytest.approx(2.0)
    assert result["epochs_counted"] == 2


def test_activity_mixed_trace():
    rest = [(float(t), (0.0, 0.0, 1.0)) for t in range(0, 60)]
    hard = [(float(t), (0.0, 0.0, 1.8)) for t in range(60, 120)]
    result = classify_activity(rest + hard, epoch_s=60)
    assert result["minutes"]["sedentary"] == 1.0
    assert result["minutes"]["vigorous"] == 1.0
    assert result["total_active_minutes"] == 1.0


def test_activity_trailing_partial_epoch_dropped():
    series = [(float(t), (0.0, 0.0, 1.0)) for t in range(0, 80)]  # 60 + 20 s
    result = classify_activity(series, epoch_s=60)
    assert result["epochs_counted"] == 1
    longer = [(float(t), (0.0, 0.0, 1.0)) for t in range(0, 95)]  # 60 + 35 s
    assert classify_activity(longer, epoch_s=60)["epochs_counted"] == 2


def test_activity_empty_rejected():
    with pytest.raises(EmptySeries):
        classify_activity([], epoch_s=60)
    with pytest.raises(EmptySeries):
        classify_activity([(0.0, (0, 0, 1))], epoch_s=0)


def test_activity_matches_reference_on_random_traces():
    rng = random.Random(31)
    for _ in range(40):
        n = rng.randint(1, 400)
        t, series = 0.0, []
        for _ in range(n):
            t += rng.uniform(0.1, 3.0)
            amp = rng.choice([0.0, 0.02, 0.1, 0.4, 1.0]) * rng.random()
            series.append((t, (rng.uniform(-amp, amp), rng.uniform(-amp, amp),
                               1.0 + rng.uniform(-amp, amp))))
        epoch_s = rng.choice([30, 60, 120])
        result = classify_activity(series, epoch_s)
        assert result["minutes"] == pytest.approx(classify_reference(series, epoch_s))


# ------------------------------------------------------------------- ingestion

def test_assign_requires_same_project(devices, wearable, seeded):
    with pytest.raises(ProjectMismatch):
        devices.assign_device(wearable, seeded["participants"][0], SYSTEM)


def test_assign_requires_write_grant(devices, wearable, resident, clinician, operator):
    with pytest.raises(Unauthorized):
        devices.assign_device(wearable, resident, clinician)
    devices.assign_device(wearable, resident, operator)


def test_upload_creates_one_completed_session(platform, devices, wearable, resident):
    devices.assign_device(wearable, resident, SYSTEM)
    result = devices.upload(hr_batch(), Subject("device", wearable))
    session = platform.registry.get_session(result["session_id"], SYSTEM)
    assert session["status"] == "completed"
    assert session["start_ts"] == 1000.0
    assert session["end_ts"] == 1000.0 + 4 * 60.0
    assert session["participant_ids"] == [resident]
    assert len(session["asset_ids"]) == 1
    asset = platform.registry.get_asset(session["asset_ids"][0], SYSTEM)
    content = platform.registry.get_asset_content(session["asset_ids"][0], SYSTEM)
    assert asset["checksum"] == checksum(content)
    stored = json.loads(content.decode("utf-8"))
    assert stored["device_id"] == wearable
    assert len(stored["readings"]) == 5


def test_upload_with_accel_attaches_summary(platform, devices, wearable, resident):
    devices.assign_device(wearable, resident, SYSTEM)
    batch = {"readings": [{"ts": float(t), "kind": "accel_g",
                           "values": [0.0, 0.0, 1.0]} for t in range(0, 120)]}
    result = devices.upload(batch, Subject("device", wearable))
    session = platform.registry.get_session(result["session_id"], SYSTEM)
    names = {platform.registry.get_asset(a, SYSTEM)["name"]
             for a in session["asset_ids"]}
    assert names == {"upload.json", "activity_summary.json"}


def test_disabled_device_rejected(platform, devices, wearable, resident):
    devices.assign_device(wearable, resident, SYSTEM)
    platform.registry.update("device", wearable, {"enabled": False}, SYSTEM)
    with pytest.raises(DeviceDisabled):
        devices.upload(hr_batch(), Subject("device", wearable))


def test_unassigned_upload_quarantined(devices, wearable):
    result = devices.upload(hr_batch(), Subject("device", wearable))
    assert result["reason"] == "unassigned_device"
    listed = devices.list_quarantine(SYSTEM)
    assert [e["id"] for e in listed] == [result["quarantine_id"]]


def test_no_consent_upload_quarantined(platform, devices, wearable, resident):
    devices.assign_device(wearable, resident, SYSTEM)
    platform.registry.update("participant", resident,
                             {"consent_data_storage": False}, SYSTEM)
    result = devices.upload(hr_batch(), Subject("device", wearable))
    assert result["reason"] == "consent_missing"


def test_quarantine_release_creates_session(platform, devices, wearable, resident,
                                            operator):
    held = devices.upload(hr_batch(), Subject("device", wearable))
    released = devices.review_quarantine(held["quarantine_id"], "assign_and_release",
                                         operator, participant_id=resident)
    session = platform.registry.get_session(released["session_id"], SYSTEM)
    assert session["status"] == "completed"
    with pytest.raises(AlreadyResolved):
        devices.review_quarantine(held["quarantine_id"], "discard", operator)


def test_quarantine_discard(devices, wearable, operator):
    held = devices.upload(hr_batch(), Subject("device", wearable))
    result = devices.review_quarantine(held["quarantine_id"], "discard", operator)
    assert result == {"resolved": True, "session_id": None}


def test_quarantine_review_requires_write(devices, wearable, clinician):
    held = devices.upload(hr_batch(), Subject("device", wearable))
    with pytest.raises(Unauthorized):
        devices.review_quarantine(held["quarantine_id"], "discard", clinician)


def test_upload_session_bijection_and_conservation(platform, devices, seeded,
                                                   resident):
    """Every accepted upload maps to exactly one session holding exactly its
    readings; nothing is lost or duplicated across many uploads."""
    rng = random.Random(17)
    registry = platform.registry
    ids = []
    for n in range(3):
        doc = registry.create("device", {"site_id": seeded["site_id"],
                                         "project_id": seeded["projects"]["residence"],
                                         "name": f"w{n}", "kind": "wearable"}, SYSTEM)
        devices.assign_device(doc["id"], resident, SYSTEM)
        ids.append(doc["id"])
    session_ids = []
    sent = {}
    t0 = 5000.0
    for n in range(30):
        device_id = rng.choice(ids)
        batch = hr_batch(n=rng.randint(1, 8), t0=t0, dt=30.0)
        t0 += 10_000.0
        result = devices.upload(batch, Subject("device", device_id))
        session_ids.append(result["session_id"])
        sent[result["session_id"]] = (device_id, batch["readings"])
    assert len(set(session_ids)) == len(session_ids)
    for sid, (device_id, readings) in sent.items():
        session = registry.get_session(sid, SYSTEM)
        assert session["device_ids"] == [device_id]
        content = registry.get_asset_content(session["asset_ids"][0], SYSTEM)
        stored = json.loads(content.decode("utf-8"))
        assert stored["readings"] == readings
        assert stored["device_id"] == device_id
