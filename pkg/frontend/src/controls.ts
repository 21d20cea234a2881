/**
 * Operator input: mouse steering/speed, keyboard gear and session events.
 *
 * Keyboard map: W/S forward/reverse, space neutral, T take control,
 * R release to RL, H hand back, Y retry, N discard, P pause/resume.
 * Control frames are rate-limited to the simulator step rate and only
 * emitted while engaged; decision keys are debounced so one press sends
 * exactly one message.
 */

import { PhaseMachine, type ClientMessage, type SessionEvent } from "./protocol.js";

export type Direction = 1 | 0 | -1;

export class ControlState {
  steer = 0; // [-1, 1]
  magnitude = 0; // [0, 1]
  direction: Direction = 0;
  engaged = false;

  get speed(): number {
    return this.engaged ? this.magnitude * this.direction : 0;
  }

  controlMessage(): ClientMessage | null {
    if (!this.engaged) return null;
    return { kind: "control", steer: this.steer, speed: this.speed };
  }
}

const KEY_EVENTS: Record<string, SessionEvent> = {
  t: "take_control",
  r: "release_to_rl",
  h: "hand_back",
  y: "retry",
  n: "discard",
};

export class InputMapper {
  readonly state = new ControlState();
  private paused = false;
  private lastControlSent = -Infinity;
  private pressed = new Set<string>();

  constructor(
    private machine: PhaseMachine,
    private send: (msg: ClientMessage) => void,
    private stepSeconds = 0.1,
    private now: () => number = () => Date.now() / 1000,
  ) {}

  /** Horizontal pointer position over the canvas, normalized to [-1, 1]. */
  pointerSteer(normalized: number): void {
    this.state.steer = Math.max(-1, Math.min(1, normalized));
    this.maybeSendControl();
  }

  /** Wheel/drag accumulation, normalized to [0, 1]. */
  speedMagnitude(normalized: number): void {
    this.state.magnitude = Math.max(0, Math.min(1, normalized));
    this.maybeSendControl();
  }

  keyDown(key: string): void {
    const k = key.toLowerCase();
    if (this.pressed.has(k)) return; // repeats and held keys do not re-fire
    this.pressed.add(k);
    if (k === "w") {
      this.state.direction = 1;
      this.maybeSendControl(true);
    } else if (k === "s") {
      this.state.direction = -1;
      this.maybeSendControl(true);
    } else if (k === " ") {
      this.state.direction = 0;
      this.maybeSendControl(true);
    } else if (k === "p") {
      this.paused = !this.paused;
      this.send({ kind: this.paused ? "pause" : "resume" });
    } else if (k in KEY_EVENTS) {
      const event = KEY_EVENTS[k];
      if (!this.machine.legal(event)) return;
      this.send({ kind: event });
      if (event === "take_control") this.state.engaged = true;
      if (event === "hand_back" || event === "release_to_rl") this.disengage();
      if (event === "retry") this.state.engaged = true;
      if (event === "discard") this.disengage();
    }
  }

  keyUp(key: string): void {
    this.pressed.delete(key.toLowerCase());
  }

  /** Engage automatically when the server says a correction started. */
  correctionStarted(): void {
    this.state.engaged = true;
  }

  disengage(): void {
    this.state.engaged = false;
    this.state.direction = 0;
    this.state.magnitude = 0;
  }

  /** Called by the render loop; re-sends the held control at step rate. */
  tick(): void {
    this.maybeSendControl();
  }

  private maybeSendControl(force = false): void {
    if (!this.state.engaged || !this.machine.humanInControl()) return;
    const t = this.now();
    if (!force && t - this.lastControlSent < this.stepSeconds) return;
    const msg = this.state.controlMessage();
    if (msg) {
      this.send(msg);
      this.lastControlSent = t;
    }
  }
}
