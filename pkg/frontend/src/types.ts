// Wire types for the gateway's JSON frame channels. Field names mirror the
// server payloads exactly; the UI never invents state of its own.

export type View =
    | "triage_form"
    | "waiting_room"
    | "session_host"
    | "session_participant"
    | "teleop"
    | "fleet";

export interface MemberSnapshot {
    connected: boolean;
    mic_on: boolean;
    cam_on: boolean;
    joined_ts: number | null;
}

export interface RoomSnapshot {
    session_id: string;
    host_user_id: string;
    status: "created" | "active" | "ended";
    waiting: string[];
    members: Record<string, MemberSnapshot>;
    member_order: string[];
    max_participants: number;
}

export interface RoomStateFrame {
    frame: "room_state";
    room?: RoomSnapshot;
    removed?: boolean;
    status?: "ended";
}

export interface SignalFrame {
    frame: "signal";
    from: string;
    payload: unknown;
}

export interface MediaFrame {
    frame: "media";
    target: string;
    device: "mic" | "cam" | "sharing";
    on: boolean;
}

export interface ToolFrame {
    frame: "tool";
    kind: "timer_start" | "timer_stop";
    params: { duration_s?: number };
}

export type ConferenceFrame = RoomStateFrame | SignalFrame | MediaFrame | ToolFrame;

export type RobotMode = "idle" | "teleop" | "autonomous_recovery" | "returning_home";

export interface TelemetryFrame {
    frame: "telemetry";
    robot_id: string;
    pose: { x: number; y: number; theta: number };
    battery_pct: number;
    cpu_pct: number;
    in_use: boolean;
    connected: boolean;
    charging: boolean;
    wifi_rssi_dbm: number;
    mode: RobotMode;
    location_label: string | null;
}

export interface ModeFrame {
    frame: "mode";
    robot_id: string;
    mode: RobotMode;
}

export interface CmdFrame {
    frame: "cmd";
    kind: "velocity" | "waypoint" | "goto_label" | "stop";
    [key: string]: unknown;
}

export type RobotFrame = TelemetryFrame | ModeFrame | CmdFrame;
