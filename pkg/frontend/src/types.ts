/** Wire types mirroring the server's JSON surface. */

export interface RectJson {
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface PointJson {
  x: number;
  y: number;
}

export interface OutputItemJson {
  mime: string;
  data: string;
}

export interface CellJson {
  id: string;
  source: string;
  frame: RectJson;
  created_seq: number;
  execution_count: number | null;
  metadata: Record<string, string>;
}

export interface OutputJson {
  id: string;
  origin_cell_id: string;
  frame: RectJson;
  bundle: OutputItemJson[];
  detached: boolean;
  produced_by: { session_id: string; execution_count: number };
}

export interface EnvironmentJson {
  id: string;
  region: RectJson;
  color: string;
  created_seq: number;
  session_id: string;
}

export interface CanvasDoc {
  id: string;
  title: string;
  cells: Record<string, CellJson>;
  outputs: Record<string, OutputJson>;
  environments: Record<string, EnvironmentJson>;
  next_seq: number;
  format_version: string;
  /** Present on GET /canvases/{id}: the event seq the snapshot reflects. */
  event_seq?: number;
}

export interface CanvasEvent {
  seq: number;
  kind: string;
  payload: Record<string, any>;
}

export interface ExecutionResultJson {
  status: "ok" | "error";
  bundle: OutputItemJson[];
  execution_count: number;
  duration_ms: number;
}

export interface CanvasSummary {
  id: string;
  title: string;
  cells: number;
  outputs: number;
  environments: number;
}

export interface AgentStepJson {
  index: number;
  cell_id: string;
  result: ExecutionResultJson;
}

export interface AgentReportJson {
  env_id: string;
  cell_ids: string[];
  steps: AgentStepJson[];
  status: string;
  warnings: string[];
}
