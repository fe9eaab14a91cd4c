/** Browser entry point: canvas picker sidebar + one live canvas view. */

import { CanvasApi } from "./api.js";
import { CanvasApp } from "./app.js";

function serverBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("server") ?? "";
}

async function boot(): Promise<void> {
  const api = new CanvasApi(serverBase());
  const sidebar = document.getElementById("sidebar")!;
  const stage = document.getElementById("stage")!;
  let current: CanvasApp | null = null;

  async function open(canvasId: string): Promise<void> {
    current?.stop();
    stage.innerHTML = "";
    current = new CanvasApp(stage, api, canvasId);
    await current.start();
    sidebar.querySelectorAll("li").forEach((item) => {
      item.classList.toggle("active", item.dataset.id === canvasId);
    });
  }

  async function refreshList(): Promise<void> {
    const canvases = await api.listCanvases();
    const list = document.createElement("ul");
    for (const summary of canvases) {
      const item = document.createElement("li");
      item.dataset.id = summary.id;
      item.textContent = `${summary.title} (${summary.cells} cells)`;
      item.addEventListener("click", () => void open(summary.id));
      list.append(item);
    }
    const newButton = document.createElement("button");
    newButton.id = "new-canvas";
    newButton.textContent = "+ new canvas";
    newButton.addEventListener("click", async () => {
      const title = window.prompt("canvas title", "Untitled") ?? "Untitled";
      const canvas = await api.createCanvas(title);
      await refreshList();
      await open(canvas.id);
    });
    sidebar.innerHTML = "";
    sidebar.append(newButton, list);
    if (!current && canvases.length > 0) await open(canvases[0].id);
  }

  await refreshList();
}

void boot();
