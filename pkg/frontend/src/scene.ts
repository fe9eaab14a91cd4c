/** Pure scene construction: document + viewport -> drawable description.
 *
 * Visual roles follow the canvas convention: code cells orange, outputs
 * grey, environments as translucent colored rectangles stacked behind their
 * contents (creation order), detached outputs wear a pin badge. Keeping this
 * a data transform makes the render path testable without a browser.
 */

import type { Viewport } from "./viewport.js";
import type { CanvasDoc, OutputItemJson, RectJson } from "./types.js";

export interface ScreenRect {
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface RegionNode {
  kind: "environment";
  id: string;
  rect: ScreenRect;
  color: string;
  zIndex: number;
}

export interface CellNode {
  kind: "cell";
  id: string;
  rect: ScreenRect;
  source: string;
  executionCount: number | null;
  running: boolean;
  nonCode: boolean;
  zIndex: number;
}

export interface OutputNode {
  kind: "output";
  id: string;
  rect: ScreenRect;
  pinned: boolean;
  lines: string[];
  hasError: boolean;
  zIndex: number;
}

export interface Scene {
  regions: RegionNode[];
  outputs: OutputNode[];
  cells: CellNode[];
  /** Origin marker, shown when the canvas has no content. */
  crosshair: { x: number; y: number } | null;
  zoom: number;
}

const REGION_LAYER = 0;
const OUTPUT_LAYER = 100;
const CELL_LAYER = 200;

export function projectRect(
  rect: RectJson,
  viewport: Viewport,
  screen: { width: number; height: number },
): ScreenRect {
  const origin = viewport.toScreen({ x: rect.x, y: rect.y }, screen);
  return {
    x: origin.x,
    y: origin.y,
    width: rect.width * viewport.zoom,
    height: rect.height * viewport.zoom,
  };
}

export function bundlePreview(bundle: OutputItemJson[], limit = 12): string[] {
  const lines: string[] = [];
  for (const item of bundle) {
    if (item.mime === "image/png") {
      lines.push("[image]");
    } else if (item.mime === "application/json") {
      lines.push(item.data);
    } else {
      lines.push(...item.data.split("\n").filter((line, i, all) => line !== "" || i < all.length - 1));
    }
    if (lines.length >= limit) break;
  }
  return lines.slice(0, limit);
}

export function buildScene(
  doc: Pick<CanvasDoc, "cells" | "outputs" | "environments">,
  viewport: Viewport,
  screen: { width: number; height: number },
  running: Set<string> = new Set(),
): Scene {
  const regions = Object.values(doc.environments)
    .sort((a, b) => a.created_seq - b.created_seq)
    .map(
      (env, index): RegionNode => ({
        kind: "environment",
        id: env.id,
        rect: projectRect(env.region, viewport, screen),
        color: env.color,
        zIndex: REGION_LAYER + index,
      }),
    );

  const outputs = Object.values(doc.outputs)
    .sort((a, b) => a.id.localeCompare(b.id))
    .map(
      (out, index): OutputNode => ({
        kind: "output",
        id: out.id,
        rect: projectRect(out.frame, viewport, screen),
        pinned: out.detached,
        lines: bundlePreview(out.bundle),
        hasError: out.bundle.some((item) => item.mime === "stream/stderr"),
        zIndex: OUTPUT_LAYER + index,
      }),
    );

  const cells = Object.values(doc.cells)
    .sort((a, b) => a.created_seq - b.created_seq)
    .map(
      (cell, index): CellNode => ({
        kind: "cell",
        id: cell.id,
        rect: projectRect(cell.frame, viewport, screen),
        source: cell.source,
        executionCount: cell.execution_count,
        running: running.has(cell.id),
        nonCode: "non-code" in cell.metadata,
        zIndex: CELL_LAYER + index,
      }),
    );

  const empty = regions.length === 0 && outputs.length === 0 && cells.length === 0;
  const origin = viewport.toScreen({ x: 0, y: 0 }, screen);
  return {
    regions,
    outputs,
    cells,
    crosshair: empty ? { x: origin.x, y: origin.y } : null,
    zoom: viewport.zoom,
  };
}
