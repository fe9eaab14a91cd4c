/** Client-side document mirror.
 *
 * Seeded from a GET snapshot and kept current by replaying CanvasEvents in
 * sequence order; nothing client-side is authoritative. After the stream
 * drains, the mirror equals what GET /canvases/{id} would return.
 */

import type { CanvasDoc, CanvasEvent } from "./types.js";

export class UiModel {
  doc: CanvasDoc;
  lastSeq: number;
  /** Cells with an execution in flight (spinner state). */
  running = new Set<string>();

  constructor(snapshot: CanvasDoc) {
    this.doc = JSON.parse(JSON.stringify(snapshot)) as CanvasDoc; // documents are pure JSON
    this.lastSeq = snapshot.event_seq ?? 0;
    delete this.doc.event_seq;
  }

  apply(event: CanvasEvent): void {
    if (event.seq <= this.lastSeq) return; // replayed backlog overlap
    this.lastSeq = event.seq;
    const p = event.payload;
    const doc = this.doc;
    switch (event.kind) {
      case "cell-created":
      case "cell-updated":
        doc.cells[p.cell.id] = p.cell;
        if (p.next_seq !== undefined) doc.next_seq = p.next_seq;
        break;
      case "cell-moved":
        if (doc.cells[p.cell_id]) doc.cells[p.cell_id].frame = p.frame;
        break;
      case "cell-deleted":
        delete doc.cells[p.cell_id];
        for (const outputId of p.removed_output_ids ?? []) delete doc.outputs[outputId];
        this.running.delete(p.cell_id);
        break;
      case "output-updated":
      case "output-detached":
        doc.outputs[p.output.id] = p.output;
        if (p.next_seq !== undefined) doc.next_seq = Math.max(doc.next_seq, p.next_seq);
        break;
      case "output-deleted":
        delete doc.outputs[p.output_id];
        break;
      case "env-created":
        doc.environments[p.environment.id] = p.environment;
        doc.next_seq = p.next_seq;
        break;
      case "env-moved": {
        const env = doc.environments[p.environment_id];
        if (env) env.region = p.region;
        for (const moved of p.moved_cells ?? []) {
          if (doc.cells[moved.id]) doc.cells[moved.id].frame = moved.frame;
        }
        for (const moved of p.moved_outputs ?? []) {
          if (doc.outputs[moved.id]) doc.outputs[moved.id].frame = moved.frame;
        }
        break;
      }
      case "env-deleted":
        delete doc.environments[p.environment_id];
        break;
      case "execution-started":
        this.running.add(p.cell_id);
        break;
      case "execution-finished":
        this.running.delete(p.cell_id);
        if (doc.cells[p.cell_id]) doc.cells[p.cell_id].execution_count = p.execution_count;
        break;
      case "session-warning":
        break; // surfaced as a toast by the app layer, no document state
      default:
        break;
    }
  }

  /** Comparable view (the slice a mirror can reconstruct). */
  view(): Pick<CanvasDoc, "cells" | "outputs" | "environments" | "next_seq"> {
    return {
      cells: this.doc.cells,
      outputs: this.doc.outputs,
      environments: this.doc.environments,
      next_seq: this.doc.next_seq,
    };
  }
}
