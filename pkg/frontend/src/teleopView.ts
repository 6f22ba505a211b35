// Teleoperation view: status pane, coverage overlay classes and the
// "robot seeking signal" banner. Rendered purely from robot frames.

import type { RobotFrame, RobotMode, TelemetryFrame } from "./types.js";

export interface TeleopViewState {
    // "waiting" until the channel's first mode frame arrives
    phase: "waiting" | "teleop" | "recovery_banner" | "session_over";
    mode: RobotMode | null;
    banner: string | null;
    telemetry: TelemetryFrame | null;
}

export function initialTeleopView(): TeleopViewState {
    return { phase: "waiting", mode: null, banner: null, telemetry: null };
}

function phaseOf(mode: RobotMode): TeleopViewState["phase"] {
    switch (mode) {
        case "teleop":
            return "teleop";
        case "autonomous_recovery":
            return "recovery_banner";
        default:
            // returning_home / idle mean the teleop session is over
            return "session_over";
    }
}

export function reduceTeleopFrame(
    state: TeleopViewState,
    frame: RobotFrame,
): TeleopViewState {
    if (frame.frame === "mode") {
        const phase = phaseOf(frame.mode);
        return {
            ...state,
            mode: frame.mode,
            phase,
            banner: phase === "recovery_banner" ? "robot seeking signal" : null,
        };
    }
    if (frame.frame === "telemetry") {
        // telemetry refreshes the status pane but never drives view
        // transitions; mode changes arrive as explicit mode frames
        return { ...state, telemetry: frame };
    }
    return state;
}

/** Distinct view phases in order, as a user would have seen them. */
export function viewSequence(frames: RobotFrame[]): string[] {
    let state = initialTeleopView();
    const seen: string[] = [state.phase];
    for (const frame of frames) {
        state = reduceTeleopFrame(state, frame);
        if (state.phase !== seen[seen.length - 1]) {
            seen.push(state.phase);
        }
    }
    return seen;
}

export function rssiClass(meanDbm: number): "good" | "weak" | "dead" {
    if (meanDbm >= -60) return "good";
    if (meanDbm >= -75) return "weak";
    return "dead";
}

export interface StatusPane {
    batteryPct: number;
    cpuPct: number;
    rssiDbm: number;
    mode: RobotMode;
    charging: boolean;
}

export function statusPane(state: TeleopViewState): StatusPane | null {
    const t = state.telemetry;
    if (t === null) return null;
    return {
        batteryPct: t.battery_pct,
        cpuPct: t.cpu_pct,
        rssiDbm: t.wifi_rssi_dbm,
        mode: t.mode,
        charging: t.charging,
    };
}
