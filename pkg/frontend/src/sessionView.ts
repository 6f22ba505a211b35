// Participant/host session view state, reduced purely from server frames.
// Joining before the host starts shows the waiting screen; the first
// room_state frame that lists us as a member flips to the session view
// without user action.

import type { ConferenceFrame, RoomSnapshot } from "./types.js";

export interface TimerState {
    running: boolean;
    durationS: number | null;
}

export interface SessionViewState {
    view: "waiting_room" | "session_participant" | "session_host" | "ended";
    room: RoomSnapshot | null;
    timer: TimerState;
    error: string | null;
    removed: boolean;
}

export function initialSessionView(): SessionViewState {
    return {
        view: "waiting_room",
        room: null,
        timer: { running: false, durationS: null },
        error: null,
        removed: false,
    };
}

export function reduceSessionFrame(
    state: SessionViewState,
    frame: ConferenceFrame,
    selfRef: string,
): SessionViewState {
    switch (frame.frame) {
        case "room_state": {
            if (frame.removed) {
                return { ...state, removed: true, view: "ended" };
            }
            if (frame.status === "ended" || frame.room?.status === "ended") {
                return { ...state, view: "ended", room: frame.room ?? state.room };
            }
            const room = frame.room ?? state.room;
            if (room === null) return state;
            const admitted = selfRef in room.members;
            const host = room.host_user_id === selfRef.replace(/^user:/, "")
                && selfRef.startsWith("user:");
            return {
                ...state,
                room,
                view: admitted
                    ? (host ? "session_host" : "session_participant")
                    : "waiting_room",
            };
        }
        case "media": {
            if (state.room === null) return state;
            const member = state.room.members[frame.target];
            if (member === undefined || frame.device === "sharing") return state;
            const members = {
                ...state.room.members,
                [frame.target]: {
                    ...member,
                    mic_on: frame.device === "mic" ? frame.on : member.mic_on,
                    cam_on: frame.device === "cam" ? frame.on : member.cam_on,
                },
            };
            return { ...state, room: { ...state.room, members } };
        }
        case "tool":
            return {
                ...state,
                timer: frame.kind === "timer_start"
                    ? { running: true, durationS: frame.params.duration_s ?? null }
                    : { running: false, durationS: null },
            };
        case "signal":
            return state; // handed to the RTC layer, never rendered
        default:
            return state;
    }
}

export function reduceSessionFrames(
    frames: ConferenceFrame[],
    selfRef: string,
): SessionViewState {
    return frames.reduce(
        (state, frame) => reduceSessionFrame(state, frame, selfRef),
        initialSessionView(),
    );
}

// member tiles in admission order, with media indicators
export function memberTiles(state: SessionViewState) {
    if (state.room === null) return [];
    return state.room.member_order.map((ref) => ({
        ref,
        micOn: state.room!.members[ref]?.mic_on ?? false,
        camOn: state.room!.members[ref]?.cam_on ?? false,
        connected: state.room!.members[ref]?.connected ?? false,
    }));
}
