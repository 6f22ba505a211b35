// Live fleet table: one row per robot, updated from telemetry frames.

import type { TelemetryFrame } from "./types.js";

export interface FleetRow {
    robotId: string;
    position: { x: number; y: number };
    locationLabel: string | null;
    inUse: boolean;
    batteryPct: number;
    connected: boolean;
    greyed: boolean; // offline robots render greyed out
}

export type FleetState = Record<string, FleetRow>;

export function reduceFleet(state: FleetState, frame: TelemetryFrame): FleetState {
    return {
        ...state,
        [frame.robot_id]: {
            robotId: frame.robot_id,
            position: { x: frame.pose.x, y: frame.pose.y },
            locationLabel: frame.location_label,
            inUse: frame.in_use,
            batteryPct: frame.battery_pct,
            connected: frame.connected,
            greyed: !frame.connected,
        },
    };
}

export function fleetRows(state: FleetState): FleetRow[] {
    return Object.keys(state).sort().map((id) => state[id]);
}
