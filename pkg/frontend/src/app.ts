/** Canvas application: server-authoritative view plus optimistic drags.
 *
 * All mutations go through the REST API; the document mirror is kept in sync
 * by replaying the SSE stream over the initial snapshot, so reloading the
 * page always reproduces the identical scene.
 */

import { ApiError, CanvasApi } from "./api.js";
import { UiModel } from "./mirror.js";
import { buildScene, type Scene } from "./scene.js";
import { Viewport } from "./viewport.js";
import type { RectJson } from "./types.js";
import type { SseHandle } from "./sse.js";

const DEFAULT_CELL = { width: 480, height: 80 };
const ENV_PALETTE = ["#BF80FF", "#80BFFF", "#7FD9A8", "#FFD27F", "#FF9DB0"];
const DRAG_THRESHOLD_PX = 3;

type DragTarget =
  | { kind: "pan" }
  | { kind: "cell" | "output"; id: string; startFrame: RectJson }
  | { kind: "environment"; id: string; startFrame: RectJson }
  | { kind: "region-draft" };

interface DragState {
  target: DragTarget;
  startClient: { x: number; y: number };
  lastClient: { x: number; y: number };
  moved: boolean;
}

export class CanvasApp {
  readonly viewport = new Viewport();
  model!: UiModel;

  private plane!: HTMLElement;
  private toastBox!: HTMLElement;
  private menu: HTMLElement | null = null;
  private agentPanel!: HTMLElement;
  private zoomLabel!: HTMLElement;
  private stream: SseHandle | null = null;
  private drag: DragState | null = null;
  private regionDraft: HTMLElement | null = null;
  private mode: "select" | "region" = "select";
  private editingCellId: string | null = null;
  private renderQueued = false;

  constructor(
    readonly root: HTMLElement,
    readonly api: CanvasApi,
    readonly canvasId: string,
  ) {}

  async start(): Promise<void> {
    const snapshot = await this.api.getCanvas(this.canvasId);
    this.model = new UiModel(snapshot);
    this.buildChrome();
    this.stream = this.api.subscribeEvents(this.canvasId, this.model.lastSeq + 1, (event) => {
      this.model.apply(event);
      if (event.kind === "session-warning") {
        this.toast(String(event.payload.message ?? "session warning"), "warn");
      }
      this.scheduleRender();
    });
    this.render();
  }

  stop(): void {
    this.stream?.close();
    this.stream = null;
  }

  /** Current scene description (what render paints). */
  scene(): Scene {
    return buildScene(this.model.doc, this.viewport, this.screenSize(), this.model.running);
  }

  // -- chrome ----------------------------------------------------------------

  private buildChrome(): void {
    this.root.innerHTML = "";
    this.root.classList.add("cc-root");

    const toolbar = el("div", "cc-toolbar");
    toolbar.append(
      el("span", "cc-title", this.model.doc.title || this.canvasId),
      this.modeButton("select", "Select"),
      this.modeButton("region", "Environment tool"),
      button("cc-zoom-out", "−", () => this.zoomStep(1 / 1.2)),
      (this.zoomLabel = el("span", "cc-zoom-label", "100%")),
      button("cc-zoom-in", "+", () => this.zoomStep(1.2)),
      button("cc-agent-toggle", "Agent…", () => this.agentPanel.classList.toggle("cc-hidden")),
    );

    this.plane = el("div", "cc-plane");
    this.plane.tabIndex = 0;
    this.toastBox = el("div", "cc-toasts");
    this.agentPanel = this.buildAgentPanel();
    this.root.append(toolbar, this.plane, this.agentPanel, this.toastBox);

    this.plane.addEventListener("dblclick", (e) => this.onDoubleClick(e));
    this.plane.addEventListener("mousedown", (e) => this.onMouseDown(e));
    this.plane.addEventListener("wheel", (e) => this.onWheel(e), { passive: false });
    this.plane.addEventListener("contextmenu", (e) => this.onContextMenu(e));
    document.addEventListener("mousemove", (e) => this.onMouseMove(e));
    document.addEventListener("mouseup", (e) => this.onMouseUp(e));
    document.addEventListener("mousedown", (e) => {
      if (this.menu && !this.menu.contains(e.target as Node)) this.closeMenu();
    });
  }

  private modeButton(mode: "select" | "region", label: string): HTMLElement {
    const btn = button(`cc-mode-${mode}`, label, () => {
      this.mode = mode;
      this.root
        .querySelectorAll(".cc-toolbar button[data-mode]")
        .forEach((b) => b.classList.toggle("cc-active", b === btn));
    });
    btn.dataset.mode = mode;
    if (mode === this.mode) btn.classList.add("cc-active");
    return btn;
  }

  private buildAgentPanel(): HTMLElement {
    const panel = el("div", "cc-agent-panel cc-hidden");
    const name = document.createElement("input");
    name.className = "cc-agent-name";
    name.placeholder = "task name";
    name.value = "task";
    const steps = document.createElement("textarea");
    steps.className = "cc-agent-steps";
    steps.placeholder = "one code step per line";
    const stopBox = document.createElement("input");
    stopBox.type = "checkbox";
    stopBox.checked = true;
    stopBox.className = "cc-agent-stop";
    const stopLabel = el("label", "cc-agent-stop-label", "stop on error");
    stopLabel.prepend(stopBox);
    const report = el("div", "cc-agent-report");
    const run = button("cc-agent-run", "Run task", async () => {
      const stepList = steps.value
        .split("\n")
        .map((s) => s.trim())
        .filter(Boolean);
      if (stepList.length === 0) {
        this.toast("agent task needs at least one step", "warn");
        return;
      }
      run.setAttribute("disabled", "true");
      report.textContent = "running…";
      try {
        const result = await this.api.runAgentTask(this.canvasId, {
          name: name.value || "task",
          steps: stepList,
          stop_on_error: stopBox.checked,
        });
        report.innerHTML = "";
        report.append(el("div", "cc-agent-status", `status: ${result.status}`));
        for (const warning of result.warnings) this.toast(`fork: ${warning}`, "warn");
        for (const step of result.steps) {
          const line = el(
            "div",
            `cc-agent-step cc-agent-${step.result.status}`,
            `#${step.index + 1} ${step.result.status} `,
          );
          line.append(
            button("cc-agent-goto", "show", () => this.panToCell(step.cell_id)),
          );
          report.append(line);
        }
      } catch (error) {
        report.textContent = "";
        this.showError(error);
      } finally {
        run.removeAttribute("disabled");
      }
    });
    panel.append(el("div", "cc-agent-title", "Agent task"), name, steps, stopLabel, run, report);
    return panel;
  }

  panToCell(cellId: string): void {
    const cell = this.model.doc.cells[cellId];
    if (!cell) return;
    this.viewport.center = {
      x: cell.frame.x + cell.frame.width / 2,
      y: cell.frame.y + cell.frame.height / 2,
    };
    this.render();
  }

  // -- rendering ----------------------------------------------------------------

  private screenSize(): { width: number; height: number } {
    return { width: this.plane.clientWidth, height: this.plane.clientHeight };
  }

  scheduleRender(): void {
    if (this.renderQueued) return;
    this.renderQueued = true;
    queueMicrotask(() => {
      this.renderQueued = false;
      this.render();
    });
  }

  render(): void {
    if (this.drag || this.editingCellId) return; // repaint after the gesture
    const scene = this.scene();
    this.zoomLabel.textContent = `${Math.round(scene.zoom * 100)}%`;
    this.plane.innerHTML = "";

    for (const region of scene.regions) {
      const node = el("div", "cc-env");
      node.dataset.id = region.id;
      node.dataset.kind = "environment";
      place(node, region.rect, region.zIndex);
      node.style.backgroundColor = withAlpha(region.color, 0.22);
      node.style.borderColor = region.color;
      const label = el("div", "cc-env-label", region.id);
      label.append(button("cc-env-delete", "✕", () => this.deleteEnvironment(region.id)));
      node.append(label);
      this.plane.append(node);
    }

    for (const output of scene.outputs) {
      const node = el("div", "cc-output" + (output.pinned ? " cc-pinned" : ""));
      node.dataset.id = output.id;
      node.dataset.kind = "output";
      place(node, output.rect, output.zIndex);
      const header = el("div", "cc-output-header", output.pinned ? "📌 output" : "output");
      const body = el("pre", "cc-bundle" + (output.hasError ? " cc-has-error" : ""));
      body.textContent = output.lines.join("\n");
      node.append(header, body);
      this.plane.append(node);
    }

    for (const cell of scene.cells) {
      const node = el(
        "div",
        "cc-cell" + (cell.nonCode ? " cc-non-code" : "") + (cell.running ? " cc-running" : ""),
      );
      node.dataset.id = cell.id;
      node.dataset.kind = "cell";
      place(node, cell.rect, cell.zIndex);
      const header = el("div", "cc-cell-header");
      header.append(
        el("span", "cc-count", cell.executionCount === null ? "[ ]" : `[${cell.executionCount}]`),
        el("span", "cc-spinner", cell.running ? "…" : ""),
      );
      if (!cell.nonCode) {
        header.append(button("cc-run", "▶", () => this.executeCell(cell.id)));
      }
      header.append(button("cc-cell-delete", "✕", () => this.deleteCell(cell.id)));
      const source = document.createElement("textarea");
      source.className = "cc-source";
      source.value = cell.source;
      source.addEventListener("focus", () => (this.editingCellId = cell.id));
      source.addEventListener("blur", () => {
        this.editingCellId = null;
        this.commitSource(cell.id, source.value);
      });
      source.addEventListener("keydown", (e) => {
        if (e.key === "Enter" && e.shiftKey) {
          e.preventDefault();
          source.blur();
          this.executeCell(cell.id);
        }
      });
      node.append(header, source);
      this.plane.append(node);
    }

    if (scene.crosshair) {
      const mark = el("div", "cc-crosshair", "+");
      mark.style.left = `${scene.crosshair.x}px`;
      mark.style.top = `${scene.crosshair.y}px`;
      this.plane.append(mark);
    }
  }

  // -- mutations -------------------------------------------------------------------

  private async run<T>(action: () => Promise<T>): Promise<T | undefined> {
    try {
      return await action();
    } catch (error) {
      this.showError(error);
      this.render();
      return undefined;
    }
  }

  async createCellAt(canvasX: number, canvasY: number, source = ""): Promise<void> {
    await this.run(() =>
      this.api.createCell(this.canvasId, source, {
        x: canvasX,
        y: canvasY,
        width: DEFAULT_CELL.width,
        height: DEFAULT_CELL.height,
      }),
    );
  }

  async executeCell(cellId: string): Promise<void> {
    await this.run(() => this.api.executeCell(this.canvasId, cellId));
  }

  async commitSource(cellId: string, source: string): Promise<void> {
    const current = this.model.doc.cells[cellId];
    if (!current || current.source === source) {
      this.scheduleRender();
      return;
    }
    await this.run(() => this.api.patchCell(this.canvasId, cellId, { source }));
    this.scheduleRender();
  }

  async deleteCell(cellId: string): Promise<void> {
    await this.run(() => this.api.deleteCell(this.canvasId, cellId));
  }

  async deleteEnvironment(envId: string): Promise<void> {
    await this.run(() => this.api.deleteEnvironment(this.canvasId, envId));
  }

  async createEnvironmentFromRect(rect: RectJson): Promise<void> {
    const used = Object.keys(this.model.doc.environments).length;
    const color = ENV_PALETTE[used % ENV_PALETTE.length];
    const created = await this.run(() => this.api.createEnvironment(this.canvasId, rect, color));
    if (created) {
      for (const name of created.warnings) {
        this.toast(`fork: could not copy '${name}'`, "warn");
      }
    }
  }

  // -- interactions -------------------------------------------------------------------

  private planePoint(e: MouseEvent): { x: number; y: number } {
    const rect = this.plane.getBoundingClientRect();
    return { x: e.clientX - rect.left, y: e.clientY - rect.top };
  }

  private canvasPoint(e: MouseEvent): { x: number; y: number } {
    return this.viewport.toCanvas(this.planePoint(e), this.screenSize());
  }

  private onDoubleClick(e: MouseEvent): void {
    const hit = (e.target as HTMLElement).closest("[data-kind]");
    if (hit) return;
    const p = this.canvasPoint(e);
    void this.createCellAt(p.x, p.y);
  }

  private onWheel(e: WheelEvent): void {
    e.preventDefault();
    this.viewport.zoomBy(e.deltaY < 0 ? 1.1 : 1 / 1.1, this.planePoint(e), this.screenSize());
    this.render();
  }

  private zoomStep(factor: number): void {
    const size = this.screenSize();
    this.viewport.zoomBy(factor, { x: size.width / 2, y: size.height / 2 }, size);
    this.render();
  }

  private onMouseDown(e: MouseEvent): void {
    if (e.button !== 0) return;
    this.closeMenu();
    const target = e.target as HTMLElement;
    if (target.closest("button, textarea, input")) return;
    const hit = target.closest<HTMLElement>("[data-kind]");
    const client = { x: e.clientX, y: e.clientY };

    if (!hit) {
      if (this.mode === "region") {
        this.drag = { target: { kind: "region-draft" }, startClient: client, lastClient: client, moved: false };
        this.regionDraft = el("div", "cc-region-draft");
        this.plane.append(this.regionDraft);
      } else {
        this.drag = { target: { kind: "pan" }, startClient: client, lastClient: client, moved: false };
      }
      return;
    }

    const kind = hit.dataset.kind as "cell" | "output" | "environment";
    const id = hit.dataset.id!;
    const frame =
      kind === "environment"
        ? this.model.doc.environments[id]?.region
        : kind === "cell"
          ? this.model.doc.cells[id]?.frame
          : this.model.doc.outputs[id]?.frame;
    if (!frame) return;
    this.drag = {
      target: { kind, id, startFrame: { ...frame } },
      startClient: client,
      lastClient: client,
      moved: false,
    };
    e.preventDefault();
  }

  private onMouseMove(e: MouseEvent): void {
    if (!this.drag) return;
    const { target, startClient } = this.drag;
    const previous = this.drag.lastClient;
    const dx = e.clientX - startClient.x;
    const dy = e.clientY - startClient.y;
    if (Math.abs(dx) + Math.abs(dy) > DRAG_THRESHOLD_PX) this.drag.moved = true;
    this.drag.lastClient = { x: e.clientX, y: e.clientY };

    if (target.kind === "pan") {
      this.viewport.panBy(e.clientX - previous.x, e.clientY - previous.y);
      this.paintDuringDrag();
      return;
    }
    if (target.kind === "region-draft") {
      if (this.regionDraft) {
        const rect = draftRect(startClient, this.drag.lastClient, this.plane);
        Object.assign(this.regionDraft.style, {
          left: `${rect.x}px`,
          top: `${rect.y}px`,
          width: `${rect.width}px`,
          height: `${rect.height}px`,
        });
      }
      return;
    }
    // Optimistic entity drag: move the DOM node, commit on mouseup.
    const node = this.plane.querySelector<HTMLElement>(`[data-id="${target.id}"]`);
    if (node) {
      const scale = this.viewport.zoom;
      const projected = this.viewport.toScreen(
        { x: target.startFrame.x + dx / scale, y: target.startFrame.y + dy / scale },
        this.screenSize(),
      );
      node.style.left = `${projected.x}px`;
      node.style.top = `${projected.y}px`;
    }
  }

  private paintDuringDrag(): void {
    const drag = this.drag;
    this.drag = null;
    this.render();
    this.drag = drag;
  }

  private onMouseUp(e: MouseEvent): void {
    const drag = this.drag;
    if (!drag) return;
    this.drag = null;
    const { target } = drag;
    const dxScreen = e.clientX - drag.startClient.x;
    const dyScreen = e.clientY - drag.startClient.y;
    const scale = this.viewport.zoom;

    if (target.kind === "pan") {
      this.render();
      return;
    }
    if (target.kind === "region-draft") {
      this.regionDraft?.remove();
      this.regionDraft = null;
      if (!drag.moved) {
        this.render();
        return;
      }
      const draft = draftRect(drag.startClient, { x: e.clientX, y: e.clientY }, this.plane);
      const origin = this.viewport.toCanvas({ x: draft.x, y: draft.y }, this.screenSize());
      const rect = {
        x: origin.x,
        y: origin.y,
        width: Math.max(draft.width / scale, 1),
        height: Math.max(draft.height / scale, 1),
      };
      void this.createEnvironmentFromRect(rect).then(() => this.render());
      return;
    }
    if (!drag.moved) {
      this.render();
      return;
    }
    const dx = dxScreen / scale;
    const dy = dyScreen / scale;
    if (target.kind === "environment") {
      void this.run(() => this.api.moveEnvironment(this.canvasId, target.id, dx, dy)).then(() =>
        this.render(),
      );
    } else if (target.kind === "cell") {
      const frame = {
        ...target.startFrame,
        x: target.startFrame.x + dx,
        y: target.startFrame.y + dy,
      };
      void this.run(() => this.api.patchCell(this.canvasId, target.id, { frame })).then(() =>
        this.render(),
      );
    } else {
      void this.run(() =>
        this.api.moveOutput(this.canvasId, target.id, {
          x: target.startFrame.x + dx,
          y: target.startFrame.y + dy,
        }),
      ).then(() => this.render());
    }
  }

  private onContextMenu(e: MouseEvent): void {
    const hit = (e.target as HTMLElement).closest<HTMLElement>('[data-kind="output"]');
    if (!hit) return;
    e.preventDefault();
    const outputId = hit.dataset.id!;
    const output = this.model.doc.outputs[outputId];
    this.closeMenu();
    const menu = el("div", "cc-menu");
    menu.style.left = `${e.clientX}px`;
    menu.style.top = `${e.clientY}px`;
    if (output && !output.detached) {
      menu.append(
        button("cc-menu-detach", "Detach output", () => {
          this.closeMenu();
          void this.run(() => this.api.detachOutput(this.canvasId, outputId));
        }),
      );
    }
    menu.append(
      button("cc-menu-delete", "Delete output", () => {
        this.closeMenu();
        void this.run(() => this.api.deleteOutput(this.canvasId, outputId));
      }),
    );
    this.root.append(menu);
    this.menu = menu;
  }

  private closeMenu(): void {
    this.menu?.remove();
    this.menu = null;
  }

  // -- feedback ----------------------------------------------------------------------

  toast(message: string, kind: "info" | "warn" | "error" = "info"): void {
    const node = el("div", `cc-toast cc-toast-${kind}`, message);
    this.toastBox.append(node);
    setTimeout(() => node.remove(), kind === "error" ? 6000 : 4000);
  }

  private showError(error: unknown): void {
    if (error instanceof ApiError) {
      this.toast(`${error.code}: ${error.message}`, "error");
    } else {
      this.toast(String(error), "error");
    }
  }
}

// -- small DOM helpers -------------------------------------------------------------

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function button(className: string, label: string, onClick: () => void): HTMLElement {
  const node = document.createElement("button");
  node.className = className;
  node.textContent = label;
  node.addEventListener("click", (e) => {
    e.stopPropagation();
    onClick();
  });
  return node;
}

function place(node: HTMLElement, rect: { x: number; y: number; width: number; height: number }, z: number): void {
  Object.assign(node.style, {
    left: `${rect.x}px`,
    top: `${rect.y}px`,
    width: `${rect.width}px`,
    height: `${rect.height}px`,
    zIndex: String(z),
  });
}

function withAlpha(hexColor: string, alpha: number): string {
  const hex = hexColor.replace("#", "");
  const full = hex.length === 3 ? hex.split("").map((c) => c + c).join("") : hex;
  const r = parseInt(full.slice(0, 2), 16);
  const g = parseInt(full.slice(2, 4), 16);
  const b = parseInt(full.slice(4, 6), 16);
  return `rgba(${r}, ${g}, ${b}, ${alpha})`;
}

function draftRect(
  a: { x: number; y: number },
  b: { x: number; y: number },
  plane: HTMLElement,
): { x: number; y: number; width: number; height: number } {
  const bounds = plane.getBoundingClientRect();
  const x1 = Math.min(a.x, b.x) - bounds.left;
  const y1 = Math.min(a.y, b.y) - bounds.top;
  const x2 = Math.max(a.x, b.x) - bounds.left;
  const y2 = Math.max(a.y, b.y) - bounds.top;
  return { x: x1, y: y1, width: Math.max(x2 - x1, 1), height: Math.max(y2 - y1, 1) };
}
