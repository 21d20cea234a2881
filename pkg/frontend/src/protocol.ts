/**
 * Wire protocol types and the client-side phase machine.
 *
 * The machine mirrors the server's episode scheduler so the console can
 * refuse to emit an event the server would reject; the server remains
 * the authority and answers anything illegal with an `error` frame.
 */

export type Mode = "rl" | "human" | "rl_corr" | "human_corr";
export type Phase = "autonomous" | "correcting" | "awaiting_decision" | "idle";
export type Status = "arrived" | "collision" | "timeout" | "oob";

export interface SceneInitMessage {
  kind: "scene_init";
  boundary: [number, number][];
  obstacles: { name: string; vertices: [number, number][] }[];
  slots: { heading: number; vertices: [number, number][] }[];
  vehicle_dims: {
    wheelbase: number;
    length: number;
    width: number;
    rear_overhang: number;
    max_steer: number;
    max_speed: number;
  };
}

export interface StateMessage {
  kind: "state";
  episode: number;
  step: number;
  pose: [number, number, number];
  last_action: [number, number];
  mode: Mode;
  phase: Phase;
  reward_breakdown: Record<string, number>;
  buffer_sizes: { rl: number; human: number; regions: number };
  status?: Status;
}

export interface MetricsMessage {
  kind: "metrics";
  losses: Record<string, number>;
  alpha: number;
  psr_so_far: number;
}

export interface ErrorMessage {
  kind: "error";
  detail: string;
}

export type ServerMessage = SceneInitMessage | StateMessage | MetricsMessage | ErrorMessage;

export type SessionEvent =
  | "take_control"
  | "release_to_rl"
  | "hand_back"
  | "retry"
  | "discard"
  | "pause"
  | "resume";

export interface ControlMessage {
  kind: "control";
  steer: number;
  speed: number;
}

export type ClientMessage = ControlMessage | { kind: SessionEvent };

const SERVER_KINDS = new Set(["scene_init", "state", "metrics", "error"]);

/** Parse a raw frame; returns null for anything malformed. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const kind = (data as { kind?: unknown }).kind;
  if (typeof kind !== "string" || !SERVER_KINDS.has(kind)) return null;
  return data as ServerMessage;
}

/** Tracks the server phase/mode and answers event legality questions. */
export class PhaseMachine {
  phase: Phase = "autonomous";
  mode: Mode = "rl";

  observe(state: StateMessage): void {
    this.phase = state.phase;
    this.mode = state.mode;
  }

  /** True when the console itself is allowed to send this event now. */
  legal(event: SessionEvent): boolean {
    switch (event) {
      case "pause":
      case "resume":
        return true;
      case "take_control":
        return (
          (this.phase === "autonomous" && this.mode === "rl") ||
          (this.phase === "correcting" && this.mode === "rl_corr")
        );
      case "release_to_rl":
        return this.phase === "correcting" && this.mode === "human_corr";
      case "hand_back":
        return this.phase === "autonomous" && this.mode === "human";
      case "retry":
      case "discard":
        return this.phase === "awaiting_decision";
    }
  }

  /** Whether operator driving input applies right now. */
  humanInControl(): boolean {
    return this.mode === "human" || this.mode === "human_corr";
  }
}
