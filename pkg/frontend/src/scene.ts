/** Scene geometry received at connect time plus the meters-to-pixels map. */

import type { SceneInitMessage } from "./protocol.js";

export interface Viewport {
  scale: number; // pixels per meter, equal on both axes
  offsetX: number;
  offsetY: number;
  width: number;
  height: number;
}

export class SceneModel {
  readonly boundary: [number, number][];
  readonly obstacles: { name: string; vertices: [number, number][] }[];
  readonly slots: { heading: number; vertices: [number, number][] }[];
  readonly vehicle: SceneInitMessage["vehicle_dims"];

  constructor(init: SceneInitMessage) {
    this.boundary = init.boundary;
    this.obstacles = init.obstacles;
    this.slots = init.slots;
    this.vehicle = init.vehicle_dims;
  }

  bounds(): { minX: number; minY: number; maxX: number; maxY: number } {
    let minX = Infinity, minY = Infinity, maxX = -Infinity, maxY = -Infinity;
    for (const [x, y] of this.boundary) {
      minX = Math.min(minX, x);
      minY = Math.min(minY, y);
      maxX = Math.max(maxX, x);
      maxY = Math.max(maxY, y);
    }
    return { minX, minY, maxX, maxY };
  }

  /** Aspect-preserving fit with a margin; +y up (world) maps to -y (canvas). */
  viewport(widthPx: number, heightPx: number, marginPx = 20): Viewport {
    const b = this.bounds();
    const w = b.maxX - b.minX;
    const h = b.maxY - b.minY;
    const scale = Math.min((widthPx - 2 * marginPx) / w, (heightPx - 2 * marginPx) / h);
    const offsetX = (widthPx - scale * w) / 2 - scale * b.minX;
    const offsetY = (heightPx + scale * h) / 2 + scale * b.minY;
    return { scale, offsetX, offsetY, width: widthPx, height: heightPx };
  }
}

export function toPixels(v: Viewport, x: number, y: number): [number, number] {
  return [v.offsetX + v.scale * x, v.offsetY - v.scale * y];
}

/** Corners of the vehicle body for a rear-axle pose, world frame. */
export function footprintCorners(
  pose: [number, number, number],
  dims: { length: number; width: number; rear_overhang: number },
): [number, number][] {
  const [x, y, psi] = pose;
  const xf = dims.length - dims.rear_overhang;
  const xr = -dims.rear_overhang;
  const hw = dims.width / 2;
  const local: [number, number][] = [
    [xr, -hw],
    [xf, -hw],
    [xf, hw],
    [xr, hw],
  ];
  const c = Math.cos(psi), s = Math.sin(psi);
  return local.map(([lx, ly]) => [x + lx * c - ly * s, y + lx * s + ly * c]);
}
