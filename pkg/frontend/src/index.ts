export * from "./types.js";
export * from "./sessionView.js";
export * from "./teleopView.js";
export * from "./joystick.js";
export * from "./fleet.js";
export * from "./api.js";
