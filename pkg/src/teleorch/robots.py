"""Robot fleet state, teleoperation channels and WiFi coverage mapping.

Each registered robot couples a `device` record with a simulated body in a
GridWorld. The service is tick-driven from an injectable clock: motion,
telemetry folding, heartbeat supervision and autonomous recovery all run
inside ``tick``.
"""

import math
from dataclasses import dataclass, field

from .auth import Scope, Subject
from .errors import (
    ChannelClosed,
    CommandOutOfRange,
    MalformedTelemetry,
    NoPath,
    NoSampledCell,
    NotFound,
    NotInTeleop,
    RobotBusy,
    RobotOffline,
    Unauthorized,
)
from .registry import SYSTEM
from . import sim

HEARTBEAT_TIMEOUT_S = 5.0
RECOVERY_ABANDON_S = 600.0
GOOD_RSSI_DBM = -60.0
DEAD_RSSI_DBM = -75.0
DEFAULT_MAP_RESOLUTION = 0.5


def classify_cell(mean_rssi: float, good_dbm: float = GOOD_RSSI_DBM,
                  dead_dbm: float = DEAD_RSSI_DBM) -> str:
    if mean_rssi >= good_dbm:
        return "good"
    if mean_rssi >= dead_dbm:
        return "weak"
    return "dead"


class CoverageMap:
    """Sparse per-cell RSSI statistics with exact running means."""

    def __init__(self, resolution: float = DEFAULT_MAP_RESOLUTION, origin=(0.0, 0.0)):
        self.resolution = resolution
        self.origin = origin
        self.cells: dict[tuple, dict] = {}

    def cell_of(self, pos) -> tuple:
        return (int((pos[0] - self.origin[0]) // self.resolution),
                int((pos[1] - self.origin[1]) // self.resolution))

    def fold(self, pos, rssi_dbm: float) -> tuple:
        cell = self.cell_of(pos)
        stats = self.cells.get(cell)
        if stats is None:
            self.cells[cell] = {"n": 1, "mean_rssi_dbm": rssi_dbm, "max_rssi_dbm": rssi_dbm}
        else:
            stats["n"] += 1
            stats["mean_rssi_dbm"] += (rssi_dbm - stats["mean_rssi_dbm"]) / stats["n"]
            stats["max_rssi_dbm"] = max(stats["max_rssi_dbm"], rssi_dbm)
        return cell

    def dead_zones(self, dead_dbm: float = DEAD_RSSI_DBM) -> list:
        return sorted(c for c, s in self.cells.items()
                      if classify_cell(s["mean_rssi_dbm"], dead_dbm=dead_dbm) == "dead")

    def to_json(self) -> dict:
        return {
            "resolution": self.resolution,
            "origin": list(self.origin),
            "cells": {f"{i},{j}": s for (i, j), s in sorted(self.cells.items())},
        }


def best_signal_cell(cmap: CoverageMap, reachable: set, distances: dict) -> tuple:
    """Sampled reachable cell with highest mean RSSI.

    Ties go to the shortest path distance from the current cell, then to
    the lowest (i, j) lexicographically.
    """
    candidates = [c for c in cmap.cells if c in reachable]
    if not candidates:
        raise NoSampledCell("no sampled cell reachable")
    return min(candidates,
               key=lambda c: (-cmap.cells[c]["mean_rssi_dbm"],
                              distances.get(c, math.inf), c))


@dataclass
class TeleopChannel:
    channel_id: str
    session_id: str
    robot_id: str
    operator_user_id: str
    mode: str = "teleop"  # teleop | autonomous_recovery | returning_home | idle
    last_heartbeat_ts: float = 0.0
    open: bool = True
    recovery_started_ts: float | None = None


@dataclass
class RobotRuntime:
    robot_id: str
    world: sim.GridWorld
    body: sim.SimRobot
    coverage: CoverageMap
    connected: bool = True
    in_use: bool = False
    charging: bool = False
    cpu_pct: float = 5.0
    wifi_rssi_dbm: float = 0.0
    mode: str = "idle"
    channel: TeleopChannel | None = None
    velocity: tuple = (0.0, 0.0)
    nav: sim.NavigationRun | None = None
    frames: list = field(default_factory=list)
    location_label: str | None = None


class RobotService:
    def __init__(self, registry, auth, bus, clock, ids,
                 heartbeat_timeout_s: float = HEARTBEAT_TIMEOUT_S,
                 abandon_timeout_s: float = RECOVERY_ABANDON_S,
                 good_dbm: float = GOOD_RSSI_DBM, dead_dbm: float = DEAD_RSSI_DBM,
                 map_resolution: float | None = None):
        self.registry = registry
        self.auth = auth
        self.bus = bus
        self.clock = clock
        self.ids = ids
        self.heartbeat_timeout_s = heartbeat_timeout_s
        self.abandon_timeout_s = abandon_timeout_s
        self.good_dbm = good_dbm
        self.dead_dbm = dead_dbm
        self.map_resolution = map_resolution
        self.robots: dict[str, RobotRuntime] = {}
        self.channels: dict[str, TeleopChannel] = {}
        self.session_type_id: str | None = None

    # -- registration --------------------------------------------------------

    def register_robot(self, device_id: str, world: sim.GridWorld,
                       body: sim.SimRobot | None = None) -> RobotRuntime:
        device = self.registry.get("device", device_id, SYSTEM)
        if device.get("kind") != "robot":
            raise MalformedTelemetry("device is not a robot")
        if body is None:
            body = sim.SimRobot(pose=(*world.charging_pose, 0.0))
        resolution = self.map_resolution or world.resolution
        runtime = RobotRuntime(robot_id=device_id, world=world, body=body,
                               coverage=CoverageMap(resolution=resolution))
        runtime.charging = self._at_dock(runtime)
        self.robots[device_id] = runtime
        return runtime

    def _runtime(self, robot_id: str) -> RobotRuntime:
        runtime = self.robots.get(robot_id)
        if runtime is None:
            raise NotFound(f"robot {robot_id}")
        return runtime

    def _at_dock(self, runtime: RobotRuntime) -> bool:
        cx, cy = runtime.world.charging_pose
        x, y, _ = runtime.body.pose
        return math.hypot(cx - x, cy - y) <= 0.5 * runtime.world.resolution

    # -- telemetry -----------------------------------------------------------

    def report_telemetry(self, robot_id: str, data: dict) -> None:
        runtime = self._runtime(robot_id)
        rssi = data.get("wifi_rssi_dbm")
        battery = data.get("battery_pct")
        if rssi is None or not math.isfinite(rssi) or rssi > 0:
            raise MalformedTelemetry("wifi_rssi_dbm must be finite and <= 0")
        if battery is not None and not (0 <= battery <= 100):
            raise MalformedTelemetry("battery_pct out of [0, 100]")
        pose = tuple(data.get("pose", runtime.body.pose))
        runtime.wifi_rssi_dbm = rssi
        if battery is not None:
            runtime.body.battery_pct = battery
        if "cpu_pct" in data:
            runtime.cpu_pct = data["cpu_pct"]
        runtime.coverage.fold(pose[:2], rssi)
        self.bus.publish(f"robot.{robot_id}.telemetry", self.status(runtime),
                         publisher="robot-service")
        runtime.frames.append({"frame": "telemetry", **self.status(runtime)})

    def _sample_from_world(self, runtime: RobotRuntime) -> None:
        rssi = sim.rssi_at(runtime.world, runtime.body.pose[:2])
        self.report_telemetry(runtime.robot_id, {
            "pose": runtime.body.pose, "wifi_rssi_dbm": rssi,
            "battery_pct": runtime.body.battery_pct, "cpu_pct": runtime.cpu_pct,
        })

    def status(self, runtime: RobotRuntime) -> dict:
        x, y, theta = runtime.body.pose
        return {
            "robot_id": runtime.robot_id,
            "pose": {"x": round(x, 6), "y": round(y, 6), "theta": round(theta, 6)},
            "battery_pct": round(runtime.body.battery_pct, 3),
            "cpu_pct": runtime.cpu_pct,
            "in_use": runtime.in_use,
            "connected": runtime.connected,
            "charging": runtime.charging,
            "wifi_rssi_dbm": round(runtime.wifi_rssi_dbm, 3),
            "mode": runtime.mode,
            "location_label": runtime.location_label,
        }

    # -- fleet ---------------------------------------------------------------

    def fleet_status(self, actor: Subject) -> list[dict]:
        if actor.kind != "user":
            raise Unauthorized("fleet status is user-only")
        out = []
        for robot_id in sorted(self.robots):
            device = self.registry.store.get("device", robot_id)
            scope = Scope(site_id=device["site_id"], project_id=device["project_id"])
            if self.auth.is_superadmin(actor) or self.auth.authorize(actor, "read", scope):
                out.append(self.status(self.robots[robot_id]))
        if not out and not self.auth.is_superadmin(actor):
            grants = self.auth.grants_for(actor.id)
            if not grants:
                raise Unauthorized("no robot access")
        return out

    # -- teleop lifecycle ----------------------------------------------------

    def start_teleop(self, operator: Subject, robot_id: str) -> TeleopChannel:
        runtime = self._runtime(robot_id)
        device = self.registry.store.get("device", robot_id)
        if operator.kind != "user":
            raise Unauthorized("teleop is user-only")
        if not self.auth.is_superadmin(operator):
            scope = Scope(site_id=device["site_id"], project_id=device["project_id"])
            decision = self.auth.authorize(operator, "write", scope)
            if not decision:
                raise Unauthorized(f"start_teleop: {decision.reason}")
        if not runtime.connected:
            raise RobotOffline(f"robot {robot_id} offline")
        if runtime.in_use:
            raise RobotBusy(f"robot {robot_id} already in use")
        session = self.registry.open_session(
            "robot", self._session_type(), SYSTEM,
            user_ids=[operator.id], device_ids=[robot_id], status="in_progress")
        channel = TeleopChannel(
            channel_id=self.ids.new_id(), session_id=session["id"],
            robot_id=robot_id, operator_user_id=operator.id,
            last_heartbeat_ts=self.clock.now())
        runtime.in_use = True
        runtime.charging = False
        runtime.mode = "teleop"
        runtime.channel = channel
        runtime.nav = None
        runtime.velocity = (0.0, 0.0)
        self.channels[channel.channel_id] = channel
        self._event(channel, "teleop_started", {"operator": operator.id})
        self._mode_frame(runtime)
        return channel

    def _session_type(self) -> str:
        if self.session_type_id is None:
            st = self.registry.create("session_type",
                                      {"service_key": "robot", "name": "Teleoperation"},
                                      SYSTEM)
            self.session_type_id = st["id"]
        return self.session_type_id

    def _event(self, channel: TeleopChannel, kind: str, payload: dict) -> None:
        self.registry.append_event(channel.session_id,
                                   {"kind": kind, "payload": payload}, SYSTEM)

    def _mode_frame(self, runtime: RobotRuntime) -> None:
        frame = {"frame": "mode", "robot_id": runtime.robot_id, "mode": runtime.mode}
        runtime.frames.append(frame)
        self.bus.publish(f"robot.{runtime.robot_id}.mode", frame, publisher="robot-service")

    def _channel(self, channel_id: str) -> TeleopChannel:
        channel = self.channels.get(channel_id)
        if channel is None or not channel.open:
            raise ChannelClosed(f"channel {channel_id} closed")
        return channel

    def send_command(self, channel_id: str, command: dict) -> None:
        channel = self._channel(channel_id)
        runtime = self._runtime(channel.robot_id)
        if channel.mode != "teleop":
            raise NotInTeleop(f"channel mode is {channel.mode}")
        kind = command.get("kind")
        if kind == "velocity":
            v, w = float(command.get("v", 0)), float(command.get("w", 0))
            if abs(v) > runtime.body.vmax or abs(w) > runtime.body.wmax:
                raise CommandOutOfRange("velocity exceeds robot limits")
            runtime.nav = None
            runtime.velocity = (v, w)
        elif kind == "waypoint":
            goal = (float(command["x"]), float(command["y"]))
            runtime.velocity = (0.0, 0.0)
            runtime.nav = sim.NavigationRun(runtime.world, runtime.body, goal)
        elif kind == "goto_label":
            label = runtime.world.label(command["name"])
            runtime.velocity = (0.0, 0.0)
            runtime.nav = sim.NavigationRun(runtime.world, runtime.body, label.pose)
        elif kind == "stop":
            runtime.velocity = (0.0, 0.0)
            runtime.nav = None
        else:
            raise CommandOutOfRange(f"unknown command kind {kind!r}")
        self._event(channel, "command", dict(command))
        runtime.frames.append({"frame": "cmd", **command})

    def operator_heartbeat(self, channel_id: str) -> None:
        channel = self._channel(channel_id)
        runtime = self._runtime(channel.robot_id)
        channel.last_heartbeat_ts = self.clock.now()
        if channel.mode == "autonomous_recovery":
            # Reconnect: cancel recovery navigation, hand control back.
            channel.mode = "teleop"
            channel.recovery_started_ts = None
            runtime.mode = "teleop"
            runtime.nav = None
            runtime.velocity = (0.0, 0.0)
            self._event(channel, "operator_reconnected", {})
            self._mode_frame(runtime)

    # -- disconnect supervision ---------------------------------------------

    def check_disconnect(self, now: float) -> list[dict]:
        transitions = []
        for channel in list(self.channels.values()):
            if not channel.open:
                continue
            runtime = self._runtime(channel.robot_id)
            age = now - channel.last_heartbeat_ts
            if channel.mode == "teleop" and age > self.heartbeat_timeout_s:
                channel.mode = "autonomous_recovery"
                channel.recovery_started_ts = now
                runtime.mode = "autonomous_recovery"
                runtime.velocity = (0.0, 0.0)
                target = self._recovery_target(runtime)
                if target is not None:
                    goal = runtime.world.center(target)
                    runtime.nav = sim.NavigationRun(runtime.world, runtime.body, goal)
                else:
                    runtime.nav = None
                self._event(channel, "operator_disconnected",
                            {"target_cell": list(target) if target else None})
                self._mode_frame(runtime)
                transitions.append({"channel": channel.channel_id,
                                    "mode": "autonomous_recovery"})
            elif (channel.mode == "autonomous_recovery"
                  and channel.recovery_started_ts is not None
                  and now - channel.recovery_started_ts > self.abandon_timeout_s):
                self.end_teleop(channel.channel_id, reason="timeout_abandon")
                transitions.append({"channel": channel.channel_id,
                                    "mode": "returning_home"})
        return transitions

    def _recovery_target(self, runtime: RobotRuntime):
        current = runtime.world.cell_of(runtime.body.pose[:2])
        distances = sim.bfs_distances(runtime.world, current)
        try:
            return best_signal_cell(runtime.coverage, set(distances), distances)
        except NoSampledCell:
            return None

    def end_teleop(self, channel_id: str, reason: str = "operator_end") -> dict:
        channel = self._channel(channel_id)
        runtime = self._runtime(channel.robot_id)
        self._event(channel, "teleop_ended", {"reason": reason})
        channel.open = False
        channel.mode = "returning_home"
        runtime.in_use = False
        runtime.velocity = (0.0, 0.0)
        try:
            runtime.nav = sim.NavigationRun(runtime.world, runtime.body,
                                            runtime.world.charging_pose)
            runtime.mode = "returning_home"
        except NoPath:
            runtime.nav = None
            runtime.mode = "idle"
            self.registry.append_event(channel.session_id,
                                       {"kind": "dock_unreachable", "payload": {}}, SYSTEM)
        self._mode_frame(runtime)
        session = self.registry.close_session(channel.session_id, "completed", SYSTEM)
        runtime.channel = None
        return session

    # -- tick loop -----------------------------------------------------------

    def tick(self, dt: float) -> None:
        """Advance supervision and motion by dt; clock already advanced."""
        self.check_disconnect(self.clock.now())
        for runtime in self.robots.values():
            moved = False
            if runtime.nav is not None:
                done = runtime.nav.tick(dt)
                moved = True
                if done:
                    runtime.nav = None
                    if runtime.mode == "returning_home":
                        runtime.mode = "idle"
                        runtime.charging = self._at_dock(runtime)
                        self._mode_frame(runtime)
            elif runtime.velocity != (0.0, 0.0) and runtime.mode == "teleop":
                v, w = runtime.velocity
                sim.step(runtime.world, runtime.body, v, w, dt)
                moved = True
            if moved or runtime.in_use:
                self._sample_from_world(runtime)

    def run_until_settled(self, dt: float = 0.1, max_steps: int = 20000) -> None:
        """Tick until no robot has pending navigation."""
        for _ in range(max_steps):
            if not any(r.nav is not None for r in self.robots.values()):
                return
            self.clock.advance(dt)
            self.tick(dt)
        raise NoPath("robots failed to settle")

    # -- coverage export -----------------------------------------------------

    def coverage(self, robot_id: str, actor: Subject) -> dict:
        runtime = self._runtime(robot_id)
        device = self.registry.store.get("device", robot_id)
        if not self.auth.is_superadmin(actor):
            scope = Scope(site_id=device["site_id"], project_id=device["project_id"])
            decision = self.auth.authorize(actor, "read", scope)
            if not decision:
                raise Unauthorized(f"coverage: {decision.reason}")
        return runtime.coverage.to_json()
