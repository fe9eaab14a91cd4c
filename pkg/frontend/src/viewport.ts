/** Pan/zoom state over the infinite plane and the screen<->canvas mapping. */

import type { PointJson } from "./types.js";

export const MIN_ZOOM = 0.1;
export const MAX_ZOOM = 4.0;

export function clampZoom(zoom: number): number {
  if (!Number.isFinite(zoom)) return 1;
  return Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, zoom));
}

export class Viewport {
  center: PointJson;
  zoom: number;

  constructor(center: PointJson = { x: 0, y: 0 }, zoom = 1) {
    this.center = { ...center };
    this.zoom = clampZoom(zoom);
  }

  /** Canvas point -> screen pixels relative to a screen of the given size. */
  toScreen(p: PointJson, screen: { width: number; height: number }): PointJson {
    return {
      x: (p.x - this.center.x) * this.zoom + screen.width / 2,
      y: (p.y - this.center.y) * this.zoom + screen.height / 2,
    };
  }

  /** Screen pixels (relative to the plane element) -> canvas coordinates. */
  toCanvas(s: PointJson, screen: { width: number; height: number }): PointJson {
    return {
      x: (s.x - screen.width / 2) / this.zoom + this.center.x,
      y: (s.y - screen.height / 2) / this.zoom + this.center.y,
    };
  }

  panBy(dxScreen: number, dyScreen: number): void {
    this.center.x -= dxScreen / this.zoom;
    this.center.y -= dyScreen / this.zoom;
  }

  /** Multiply zoom, keeping the canvas point under `anchor` stationary. */
  zoomBy(factor: number, anchor: PointJson, screen: { width: number; height: number }): void {
    const before = this.toCanvas(anchor, screen);
    this.zoom = clampZoom(this.zoom * factor);
    const after = this.toCanvas(anchor, screen);
    this.center.x += before.x - after.x;
    this.center.y += before.y - after.y;
  }
}
