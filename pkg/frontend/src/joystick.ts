// Virtual joystick: maps a drag vector to a velocity command, clamped to
// the robot's advertised limits. Release always emits a stop (dead-man).

export interface VelocityCommand {
    kind: "velocity";
    v: number;
    w: number;
}

export interface StopCommand {
    kind: "stop";
}

export const COMMAND_RATE_HZ = 5;
export const HEARTBEAT_RATE_HZ = 1;

const clamp = (x: number, lo: number, hi: number) =>
    Math.min(hi, Math.max(lo, x));

/**
 * dx/dy are the drag offset in [-1, 1] joystick units: pushing up drives
 * forward, pushing sideways turns in place.
 */
export function joystickCommand(
    dx: number,
    dy: number,
    vmax: number,
    wmax: number,
): VelocityCommand {
    return {
        kind: "velocity",
        v: clamp(-dy, -1, 1) * vmax,
        w: clamp(-dx, -1, 1) * wmax,
    };
}

export function releaseCommand(): StopCommand {
    return { kind: "stop" };
}
