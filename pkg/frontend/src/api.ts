/** REST + SSE client for the canvas service. */

import { subscribeSse, type SseHandle } from "./sse.js";
import type {
  AgentReportJson,
  CanvasDoc,
  CanvasEvent,
  CanvasSummary,
  CellJson,
  EnvironmentJson,
  ExecutionResultJson,
  OutputJson,
  PointJson,
  RectJson,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class CanvasApi {
  constructor(readonly baseUrl: string) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      let code = "error";
      let message = text;
      try {
        const parsed = JSON.parse(text);
        code = parsed.code ?? code;
        message = parsed.message ?? parsed.detail ?? message;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, code, `${method} ${path}: ${message}`);
    }
    return text ? (JSON.parse(text) as T) : (undefined as T);
  }

  listCanvases(): Promise<CanvasSummary[]> {
    return this.call("GET", "/canvases");
  }

  createCanvas(title: string): Promise<CanvasDoc> {
    return this.call("POST", "/canvases", { title });
  }

  getCanvas(canvasId: string): Promise<CanvasDoc> {
    return this.call("GET", `/canvases/${canvasId}`);
  }

  createCell(canvasId: string, source: string, frame: RectJson): Promise<CellJson> {
    return this.call("POST", `/canvases/${canvasId}/cells`, { source, frame });
  }

  patchCell(
    canvasId: string,
    cellId: string,
    patch: { source?: string; frame?: RectJson },
  ): Promise<CellJson> {
    return this.call("PATCH", `/canvases/${canvasId}/cells/${cellId}`, patch);
  }

  deleteCell(canvasId: string, cellId: string): Promise<void> {
    return this.call("DELETE", `/canvases/${canvasId}/cells/${cellId}`);
  }

  executeCell(canvasId: string, cellId: string): Promise<ExecutionResultJson> {
    return this.call("POST", `/canvases/${canvasId}/cells/${cellId}/execute`);
  }

  createEnvironment(
    canvasId: string,
    region: RectJson,
    color: string,
  ): Promise<{ environment: EnvironmentJson; warnings: string[] }> {
    return this.call("POST", `/canvases/${canvasId}/environments`, { region, color });
  }

  moveEnvironment(canvasId: string, envId: string, dx: number, dy: number): Promise<EnvironmentJson> {
    return this.call("PATCH", `/canvases/${canvasId}/environments/${envId}`, { dx, dy });
  }

  deleteEnvironment(canvasId: string, envId: string): Promise<void> {
    return this.call("DELETE", `/canvases/${canvasId}/environments/${envId}`);
  }

  detachOutput(canvasId: string, outputId: string): Promise<OutputJson> {
    return this.call("POST", `/canvases/${canvasId}/outputs/${outputId}/detach`);
  }

  moveOutput(canvasId: string, outputId: string, origin: PointJson): Promise<OutputJson> {
    return this.call("PATCH", `/canvases/${canvasId}/outputs/${outputId}`, { origin });
  }

  deleteOutput(canvasId: string, outputId: string): Promise<void> {
    return this.call("DELETE", `/canvases/${canvasId}/outputs/${outputId}`);
  }

  runAgentTask(
    canvasId: string,
    task: { name: string; steps: string[]; stop_on_error?: boolean },
  ): Promise<AgentReportJson> {
    return this.call("POST", `/canvases/${canvasId}/agent/tasks`, task);
  }

  /** Live event stream; reconnects from the last seen seq until closed. */
  subscribeEvents(
    canvasId: string,
    fromSeq: number,
    onEvent: (event: CanvasEvent) => void,
  ): SseHandle {
    let lastSeq = fromSeq - 1;
    let closed = false;
    let current: SseHandle | null = null;

    const open = () => {
      if (closed) return;
      current = subscribeSse(
        `${this.baseUrl}/canvases/${canvasId}/events?from_seq=${lastSeq + 1}`,
        (data) => {
          const event = JSON.parse(data) as CanvasEvent;
          if (event.seq > lastSeq) {
            lastSeq = event.seq;
            onEvent(event);
          }
        },
        () => {
          if (!closed) setTimeout(open, 500);
        },
      );
    };
    open();
    return {
      close() {
        closed = true;
        current?.close();
      },
    };
  }
}
