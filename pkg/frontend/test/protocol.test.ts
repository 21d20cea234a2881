import { describe, expect, it } from "vitest";

import { parseServerMessage, PhaseMachine, type StateMessage } from "../src/protocol.js";

function state(overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    kind: "state",
    episode: 1,
    step: 1,
    pose: [0, 0, 0],
    last_action: [0, 0],
    mode: "rl",
    phase: "autonomous",
    reward_breakdown: {},
    buffer_sizes: { rl: 0, human: 0, regions: 0 },
    ...overrides,
  };
}

describe("parseServerMessage", () => {
  it("accepts known kinds", () => {
    const msg = parseServerMessage(JSON.stringify(state()));
    expect(msg?.kind).toBe("state");
  });

  it("rejects garbage, non-objects, and unknown kinds", () => {
    expect(parseServerMessage("{nope")).toBeNull();
    expect(parseServerMessage("42")).toBeNull();
    expect(parseServerMessage(JSON.stringify({ kind: "mystery" }))).toBeNull();
  });
});

describe("PhaseMachine legality (mirrors the server scheduler)", () => {
  it("autonomous rl: only take_control (plus pause/resume)", () => {
    const m = new PhaseMachine();
    m.observe(state());
    expect(m.legal("take_control")).toBe(true);
    expect(m.legal("release_to_rl")).toBe(false);
    expect(m.legal("hand_back")).toBe(false);
    expect(m.legal("retry")).toBe(false);
    expect(m.legal("discard")).toBe(false);
    expect(m.legal("pause")).toBe(true);
  });

  it("autonomous human: hand_back only", () => {
    const m = new PhaseMachine();
    m.observe(state({ mode: "human" }));
    expect(m.legal("hand_back")).toBe(true);
    expect(m.legal("take_control")).toBe(false);
    expect(m.legal("release_to_rl")).toBe(false);
  });

  it("correcting human_corr: release_to_rl only", () => {
    const m = new PhaseMachine();
    m.observe(state({ phase: "correcting", mode: "human_corr" }));
    expect(m.legal("release_to_rl")).toBe(true);
    expect(m.legal("take_control")).toBe(false);
    expect(m.legal("hand_back")).toBe(false);
    expect(m.humanInControl()).toBe(true);
  });

  it("correcting rl_corr: take_control only", () => {
    const m = new PhaseMachine();
    m.observe(state({ phase: "correcting", mode: "rl_corr" }));
    expect(m.legal("take_control")).toBe(true);
    expect(m.legal("release_to_rl")).toBe(false);
    expect(m.humanInControl()).toBe(false);
  });

  it("awaiting_decision: retry/discard only", () => {
    const m = new PhaseMachine();
    m.observe(state({ phase: "awaiting_decision", mode: "human_corr" }));
    expect(m.legal("retry")).toBe(true);
    expect(m.legal("discard")).toBe(true);
    expect(m.legal("take_control")).toBe(false);
    expect(m.legal("hand_back")).toBe(false);
  });
});
