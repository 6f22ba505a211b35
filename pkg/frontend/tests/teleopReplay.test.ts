import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
    initialTeleopView,
    reduceTeleopFrame,
    statusPane,
    viewSequence,
} from "../src/teleopView.js";
import type { RobotFrame } from "../src/types.js";

const fixture = (name: string) => join(__dirname, "fixtures", name);

function loadFrames(): RobotFrame[] {
    const raw = readFileSync(fixture("teleop_disconnect.frames.jsonl"), "utf-8");
    return raw
        .split("\n")
        .filter((line) => line.trim().length > 0)
        .map((line) => JSON.parse(line) as RobotFrame);
}

describe("teleop snapshot replay (recorded disconnect run)", () => {
    const frames = loadFrames();
    const golden = JSON.parse(
        readFileSync(fixture("teleop_disconnect.golden.json"), "utf-8"),
    );

    it("renders the golden view sequence exactly", () => {
        expect(viewSequence(frames)).toEqual(golden.view_sequence);
    });

    it("shows waiting -> teleop -> recovery banner -> teleop while live", () => {
        const sequence = viewSequence(frames);
        const live = sequence.slice(0, sequence.length - 1);
        expect(live).toEqual(golden.live_sequence);
        expect(sequence[sequence.length - 1]).toBe("session_over");
    });

    it("raises and clears the banner with the mode frames", () => {
        let state = initialTeleopView();
        const banners: (string | null)[] = [];
        for (const frame of frames) {
            state = reduceTeleopFrame(state, frame);
            if (frame.frame === "mode") banners.push(state.banner);
        }
        expect(banners).toEqual([null, "robot seeking signal", null, null, null]);
    });

    it("status pane tracks the latest telemetry only", () => {
        let state = initialTeleopView();
        let lastTelemetry: RobotFrame | null = null;
        for (const frame of frames) {
            state = reduceTeleopFrame(state, frame);
            if (frame.frame === "telemetry") lastTelemetry = frame;
        }
        const pane = statusPane(state);
        expect(pane).not.toBeNull();
        expect(pane!.batteryPct).toBe((lastTelemetry as any).battery_pct);
        expect(pane!.rssiDbm).toBe((lastTelemetry as any).wifi_rssi_dbm);
    });

    it("telemetry alone never changes the view phase", () => {
        let state = initialTeleopView();
        for (const frame of frames) {
            const before = state.phase;
            state = reduceTeleopFrame(state, frame);
            if (frame.frame === "telemetry") {
                expect(state.phase).toBe(before);
            }
        }
    });
});
