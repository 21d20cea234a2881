/**
 * Session connection: message sequencing, staleness, and reconnect.
 *
 * The console keeps no training state of its own; everything is rebuilt
 * from `scene_init` plus the next `state`, so reconnecting mid-session
 * costs at most two messages before rendering resumes.
 */

import {
  parseServerMessage,
  PhaseMachine,
  type ClientMessage,
  type ServerMessage,
  type StateMessage,
} from "./protocol.js";

/** Minimal socket surface so tests can stub the transport. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onopen: (() => void) | null;
}

export interface ClientHooks {
  onSceneInit?(msg: ServerMessage): void;
  onState?(msg: StateMessage): void;
  onMetrics?(msg: ServerMessage): void;
  onError?(detail: string): void;
  onConnectionChange?(connected: boolean): void;
}

export class SessionClient {
  readonly machine = new PhaseMachine();
  latestState: StateMessage | null = null;
  droppedOutOfOrder = 0;
  unparseable = 0;
  statesSinceConnect = 0;
  private socket: SocketLike | null = null;
  private lastStateAt = -Infinity;
  private reconnectDelay = 0.25;
  private closed = false;

  constructor(
    private makeSocket: () => SocketLike,
    private hooks: ClientHooks = {},
    private now: () => number = () => Date.now() / 1000,
    private schedule: (fn: () => void, ms: number) => void = (fn, ms) => setTimeout(fn, ms),
  ) {}

  connect(): void {
    this.closed = false;
    const socket = this.makeSocket();
    this.socket = socket;
    this.statesSinceConnect = 0;
    socket.onopen = () => {
      this.reconnectDelay = 0.25;
      this.hooks.onConnectionChange?.(true);
    };
    socket.onmessage = (event) => this.receive(event.data);
    socket.onclose = () => {
      this.hooks.onConnectionChange?.(false);
      if (!this.closed) {
        this.schedule(() => this.connect(), this.reconnectDelay * 1000);
        this.reconnectDelay = Math.min(this.reconnectDelay * 2, 5);
      }
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }

  send(msg: ClientMessage): void {
    this.socket?.send(JSON.stringify(msg));
  }

  /** Seconds since the last state frame; drives the stale-control lockout. */
  staleness(): number {
    return this.now() - this.lastStateAt;
  }

  private receive(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      this.unparseable += 1;
      return;
    }
    switch (msg.kind) {
      case "scene_init":
        // a fresh scene_init resets the view: reconnects rebuild from here
        this.latestState = null;
        this.hooks.onSceneInit?.(msg);
        break;
      case "state": {
        const prev = this.latestState;
        if (
          prev !== null &&
          (msg.episode < prev.episode ||
            (msg.episode === prev.episode && msg.step < prev.step))
        ) {
          this.droppedOutOfOrder += 1;
          return;
        }
        this.latestState = msg;
        this.lastStateAt = this.now();
        this.statesSinceConnect += 1;
        this.machine.observe(msg);
        this.hooks.onState?.(msg);
        break;
      }
      case "metrics":
        this.hooks.onMetrics?.(msg);
        break;
      case "error":
        this.hooks.onError?.(msg.detail);
        break;
    }
  }
}
