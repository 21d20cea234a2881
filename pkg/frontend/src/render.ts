/**
 * Bird's-eye canvas drawing. All functions take a minimal 2D-context
 * interface so tests can drive them with a recording stub.
 */

import { footprintCorners, SceneModel, toPixels, type Viewport } from "./scene.js";
import type { Mode, StateMessage } from "./protocol.js";

export interface Ctx2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fillText(text: string, x: number, y: number): void;
}

export const MODE_COLORS: Record<Mode, string> = {
  rl: "#4da3ff",
  human: "#ffb347",
  rl_corr: "#7fe07f",
  human_corr: "#ff6b6b",
};

export interface TracePoint {
  x: number;
  y: number;
  mode: Mode;
}

export class TrajectoryTrace {
  points: TracePoint[] = [];

  constructor(readonly capacity = 4000) {}

  push(state: StateMessage): void {
    this.points.push({ x: state.pose[0], y: state.pose[1], mode: state.mode });
    if (this.points.length > this.capacity) this.points.shift();
  }

  clear(): void {
    this.points = [];
  }
}

function path(ctx: Ctx2D, view: Viewport, vertices: [number, number][]): void {
  ctx.beginPath();
  vertices.forEach(([x, y], i) => {
    const [px, py] = toPixels(view, x, y);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.closePath();
}

export function drawGrid(ctx: Ctx2D, scene: SceneModel, view: Viewport): void {
  const b = scene.bounds();
  ctx.strokeStyle = "#223";
  ctx.lineWidth = 1;
  for (let x = Math.ceil(b.minX); x <= b.maxX; x += 1) {
    ctx.beginPath();
    const [px0, py0] = toPixels(view, x, b.minY);
    const [px1, py1] = toPixels(view, x, b.maxY);
    ctx.moveTo(px0, py0);
    ctx.lineTo(px1, py1);
    ctx.stroke();
  }
  for (let y = Math.ceil(b.minY); y <= b.maxY; y += 1) {
    ctx.beginPath();
    const [px0, py0] = toPixels(view, b.minX, y);
    const [px1, py1] = toPixels(view, b.maxX, y);
    ctx.moveTo(px0, py0);
    ctx.lineTo(px1, py1);
    ctx.stroke();
  }
}

export function drawScene(
  ctx: Ctx2D,
  scene: SceneModel,
  view: Viewport,
  targetSlot = 0,
): void {
  ctx.fillStyle = "#0b0e14";
  ctx.fillRect(0, 0, view.width, view.height);
  drawGrid(ctx, scene, view);
  ctx.strokeStyle = "#8899aa";
  ctx.lineWidth = 2;
  path(ctx, view, scene.boundary);
  ctx.stroke();
  for (const obstacle of scene.obstacles) {
    ctx.fillStyle = "#445";
    path(ctx, view, obstacle.vertices);
    ctx.fill();
  }
  scene.slots.forEach((slot, i) => {
    ctx.strokeStyle = i === targetSlot ? "#ffd34d" : "#556";
    ctx.lineWidth = i === targetSlot ? 3 : 1.5;
    path(ctx, view, slot.vertices);
    ctx.stroke();
  });
}

export function drawTrace(ctx: Ctx2D, trace: TrajectoryTrace, view: Viewport): void {
  ctx.lineWidth = 2;
  for (let i = 1; i < trace.points.length; i++) {
    const a = trace.points[i - 1];
    const b = trace.points[i];
    ctx.strokeStyle = MODE_COLORS[b.mode];
    ctx.beginPath();
    const [ax, ay] = toPixels(view, a.x, a.y);
    const [bx, by] = toPixels(view, b.x, b.y);
    ctx.moveTo(ax, ay);
    ctx.lineTo(bx, by);
    ctx.stroke();
  }
}

export function drawVehicle(
  ctx: Ctx2D,
  scene: SceneModel,
  view: Viewport,
  state: StateMessage,
): void {
  const corners = footprintCorners(state.pose, scene.vehicle);
  ctx.fillStyle = MODE_COLORS[state.mode];
  ctx.globalAlpha = 0.75;
  path(ctx, view, corners);
  ctx.fill();
  ctx.globalAlpha = 1.0;
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 1.5;
  path(ctx, view, corners);
  ctx.stroke();
  // rear-axle marker
  const [px, py] = toPixels(view, state.pose[0], state.pose[1]);
  ctx.fillStyle = "#fff";
  ctx.beginPath();
  ctx.arc(px, py, 3.5, 0, 2 * Math.PI);
  ctx.fill();
}

export function drawRewardPanel(ctx: Ctx2D, state: StateMessage, x: number, y: number): void {
  ctx.font = "12px monospace";
  ctx.fillStyle = "#dde";
  let row = 0;
  for (const [term, value] of Object.entries(state.reward_breakdown)) {
    ctx.fillText(`${term.padEnd(9)} ${value.toFixed(3)}`, x, y + 14 * row);
    row += 1;
  }
}

export function drawStatusBanner(ctx: Ctx2D, view: Viewport, status: string): void {
  ctx.fillStyle = status === "arrived" ? "#2e7d3299" : "#b71c1c99";
  ctx.fillRect(0, view.height / 2 - 28, view.width, 56);
  ctx.fillStyle = "#fff";
  ctx.font = "28px sans-serif";
  ctx.fillText(status.toUpperCase(), view.width / 2 - 50, view.height / 2 + 9);
}

/** One full frame: scene, trace, vehicle, panel, optional terminal banner. */
export function renderFrame(
  ctx: Ctx2D,
  scene: SceneModel,
  view: Viewport,
  state: StateMessage,
  trace: TrajectoryTrace,
): void {
  drawScene(ctx, scene, view);
  drawTrace(ctx, trace, view);
  drawVehicle(ctx, scene, view, state);
  drawRewardPanel(ctx, state, 8, 16);
  if (state.status) drawStatusBanner(ctx, view, state.status);
}
