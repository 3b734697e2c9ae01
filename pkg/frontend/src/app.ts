// Composition root: wires the canvas model, workspace state machine and API
// client to the DOM. All transitions go through state.ts; this file only
// renders and forwards events.

import { StudioApi, ApiError } from "./api.js";
import * as canvas from "./canvas.js";
import { LABEL_COLORS, cssColor } from "./palette.js";
import { encodeIndexedPng } from "./png.js";
import * as state from "./state.js";
import type { CandidateDescriptor } from "./types.js";

const CANVAS_SCALE = 6;

export class StudioApp {
  api: StudioApi;
  ws: state.WorkspaceState;
  paint: canvas.CanvasState;
  brush: canvas.Brush = { label: 0, radius: 3 };
  private root: HTMLElement;
  private stroke: [number, number][] | null = null;

  constructor(root: HTMLElement, api: StudioApi) {
    this.root = root;
    this.api = api;
    this.ws = state.initialWorkspace();
    this.paint = canvas.createCanvas(64, 0);
  }

  async start(): Promise<void> {
    const info = await this.api.createSession();
    this.ws = state.withSession(this.ws, info.session_id, info.label_set, info.resolution);
    this.paint = canvas.createCanvas(info.resolution, 0);
    this.render();
  }

  // ---- actions ----------------------------------------------------------

  async submitSegmentation(): Promise<void> {
    const [ws, id] = state.beginRequest(this.ws, "submit");
    if (id === null) return;
    this.update(ws);
    try {
      const png = await encodeIndexedPng(
        this.paint.grid,
        this.paint.resolution,
        this.paint.resolution,
        LABEL_COLORS,
      );
      await this.api.uploadSegmentation(this.ws.sessionId!, png);
      this.update(state.completeSubmit(this.ws, id));
    } catch (err) {
      this.update(state.failRequest(this.ws, "submit", id, messageOf(err)));
    }
  }

  async sampleDepths(n = 4): Promise<void> {
    const [ws, id] = state.beginRequest(this.ws, "depths");
    if (id === null) return;
    this.update(ws);
    try {
      const body = await this.api.requestDepths(this.ws.sessionId!, n);
      this.update(state.completeDepths(this.ws, id, body.candidates));
    } catch (err) {
      this.update(state.failRequest(this.ws, "depths", id, messageOf(err)));
    }
  }

  async applyShift(label: string, delta: number): Promise<void> {
    const candidate = state.selectedCandidate(this.ws);
    if (!candidate) return;
    const [ws, id] = state.beginRequest(this.ws, "shift");
    if (id === null) return;
    this.update(ws);
    try {
      const forked = await this.api.shiftDepth(
        this.ws.sessionId!,
        candidate.candidate_id,
        label,
        delta,
      );
      this.update(state.completeShift(this.ws, id, forked));
    } catch (err) {
      this.update(state.failRequest(this.ws, "shift", id, messageOf(err)));
    }
  }

  async sampleImages(n = 4): Promise<void> {
    const candidate = state.selectedCandidate(this.ws);
    if (!candidate) return;
    const [ws, id] = state.beginRequest(this.ws, "images");
    if (id === null) return;
    this.update(ws);
    try {
      const body = await this.api.requestImages(this.ws.sessionId!, candidate.candidate_id, n);
      this.update(state.completeImages(this.ws, id, body.images));
    } catch (err) {
      this.update(state.failRequest(this.ws, "images", id, messageOf(err)));
    }
  }

  selectCandidate(candidateId: string): void {
    this.update(state.selectCandidate(this.ws, candidateId));
  }

  // ---- rendering --------------------------------------------------------

  private update(ws: state.WorkspaceState): void {
    this.ws = ws;
    this.render();
  }

  render(): void {
    this.root.innerHTML = "";
    this.root.append(this.paintPanel(), this.structurePanel(), this.stylePanel());
    const error = document.createElement("div");
    error.id = "error-bar";
    error.className = this.ws.error ? "error visible" : "error";
    if (this.ws.error) {
      error.textContent = this.ws.error;
      const dismiss = document.createElement("button");
      dismiss.textContent = "dismiss";
      dismiss.onclick = () => this.update(state.clearError(this.ws));
      error.append(dismiss);
    }
    this.root.append(error);
  }

  private paintPanel(): HTMLElement {
    const panel = section("paint-panel", "1. Draw segmentation");
    const el = document.createElement("canvas");
    el.id = "paint-canvas";
    el.width = this.paint.resolution * CANVAS_SCALE;
    el.height = this.paint.resolution * CANVAS_SCALE;
    el.onpointerdown = (ev) => {
      this.stroke = [this.gridPoint(el, ev)];
      el.setPointerCapture(ev.pointerId);
    };
    el.onpointermove = (ev) => {
      if (!this.stroke) return;
      this.stroke.push(this.gridPoint(el, ev));
      this.drawGrid(el, canvas.applyStroke(this.paint, this.stroke, this.brush).grid);
    };
    el.onpointerup = () => {
      if (!this.stroke) return;
      this.paint = canvas.applyStroke(this.paint, this.stroke, this.brush);
      this.stroke = null;
      this.render();
    };
    this.drawGrid(el, this.paint.grid);
    panel.append(el);

    const labels = document.createElement("div");
    labels.id = "label-buttons";
    this.ws.labelSet.forEach((name, i) => {
      const button = document.createElement("button");
      button.textContent = name;
      button.style.borderColor = cssColor(i);
      button.className = this.brush.label === i ? "label selected" : "label";
      button.onclick = () => {
        this.brush = { ...this.brush, label: i };
        this.render();
      };
      labels.append(button);
    });
    panel.append(labels);

    const controls = document.createElement("div");
    const radius = document.createElement("input");
    radius.type = "range";
    radius.min = "1";
    radius.max = "10";
    radius.value = String(this.brush.radius);
    radius.title = "brush radius";
    radius.oninput = () => {
      this.brush = { ...this.brush, radius: Number(radius.value) };
    };
    const undoButton = document.createElement("button");
    undoButton.id = "undo";
    undoButton.textContent = "undo";
    undoButton.onclick = () => {
      this.paint = canvas.undo(this.paint);
      this.render();
    };
    const submit = document.createElement("button");
    submit.id = "submit-seg";
    submit.textContent = this.ws.segSubmitted ? "segmentation submitted" : "submit segmentation";
    submit.disabled = this.ws.segSubmitted || !state.canStart(this.ws, "submit");
    submit.onclick = () => void this.submitSegmentation();
    controls.append(radius, undoButton, submit);
    panel.append(controls);
    return panel;
  }

  private structurePanel(): HTMLElement {
    const panel = section("structure-panel", "2. Pick and edit a depth structure");
    const sample = document.createElement("button");
    sample.id = "sample-depths";
    sample.textContent = "sample 4 depth candidates";
    sample.disabled = !this.ws.segSubmitted || !state.canStart(this.ws, "depths");
    sample.onclick = () => void this.sampleDepths();
    panel.append(sample);

    const gallery = document.createElement("div");
    gallery.id = "depth-gallery";
    gallery.className = "gallery";
    for (const candidate of this.ws.candidates) {
      gallery.append(this.depthCard(candidate));
    }
    panel.append(gallery);

    const selected = state.selectedCandidate(this.ws);
    if (selected) {
      panel.append(this.shiftControls(selected));
    }
    return panel;
  }

  private depthCard(candidate: CandidateDescriptor): HTMLElement {
    const card = document.createElement("figure");
    card.className =
      candidate.candidate_id === this.ws.selectedCandidate ? "card selected" : "card";
    card.dataset.candidateId = candidate.candidate_id;
    const img = document.createElement("img");
    img.src = this.api.assetUrl(this.ws.sessionId!, candidate.candidate_id);
    img.alt = candidate.candidate_id;
    img.width = 128;
    img.onclick = () => this.selectCandidate(candidate.candidate_id);
    const caption = document.createElement("figcaption");
    const badges = Object.entries(candidate.segment_means)
      .sort((a, b) => b[1] - a[1])
      .map(([name, mean]) => `${name} ${mean.toFixed(2)}`)
      .join(" | ");
    caption.textContent = `${candidate.candidate_id} (seed ${candidate.seed}) ${badges}`;
    const link = document.createElement("a");
    link.href = img.src;
    link.download = `${candidate.candidate_id}.png`;
    link.textContent = "export";
    card.append(img, caption, link);
    return card;
  }

  private shiftControls(candidate: CandidateDescriptor): HTMLElement {
    const wrap = document.createElement("div");
    wrap.id = "shift-controls";
    const busy = !state.canStart(this.ws, "shift");
    for (const label of Object.keys(candidate.segment_means)) {
      const bounds = state.sliderBounds(candidate, label);
      const row = document.createElement("div");
      row.className = "shift-row";
      const slider = document.createElement("input");
      slider.type = "range";
      slider.dataset.label = label;
      slider.min = bounds.min.toFixed(4);
      slider.max = bounds.max.toFixed(4);
      slider.step = "0.001";
      slider.value = "0";
      slider.disabled = busy;
      const apply = document.createElement("button");
      apply.textContent = `shift ${label}`;
      apply.dataset.shiftLabel = label;
      apply.disabled = busy;
      apply.onclick = () => void this.applyShift(label, Number(slider.value));
      row.append(slider, apply);
      wrap.append(row);
    }
    return wrap;
  }

  private stylePanel(): HTMLElement {
    const panel = section("style-panel", "3. Sample styles");
    const sample = document.createElement("button");
    sample.id = "sample-images";
    sample.textContent = "sample 4 images";
    sample.disabled = !this.ws.selectedCandidate || !state.canStart(this.ws, "images");
    sample.onclick = () => void this.sampleImages();
    panel.append(sample);
    const gallery = document.createElement("div");
    gallery.id = "image-gallery";
    gallery.className = "gallery";
    for (const image of this.ws.images) {
      const card = document.createElement("figure");
      card.className = "card";
      card.dataset.imageId = image.image_id;
      const img = document.createElement("img");
      img.src = this.api.assetUrl(this.ws.sessionId!, image.image_id);
      img.alt = image.image_id;
      img.width = 128;
      const link = document.createElement("a");
      link.href = img.src;
      link.download = `${image.image_id}.png`;
      link.textContent = "export";
      card.append(img, link);
      gallery.append(card);
    }
    panel.append(gallery);
    return panel;
  }

  private gridPoint(el: HTMLCanvasElement, ev: PointerEvent): [number, number] {
    const rect = el.getBoundingClientRect();
    const x = Math.floor(((ev.clientX - rect.left) / rect.width) * this.paint.resolution);
    const y = Math.floor(((ev.clientY - rect.top) / rect.height) * this.paint.resolution);
    return [x, y];
  }

  private drawGrid(el: HTMLCanvasElement, grid: Uint8Array): void {
    const ctx = el.getContext("2d");
    if (!ctx) return; // headless test environment
    for (let y = 0; y < this.paint.resolution; y++) {
      for (let x = 0; x < this.paint.resolution; x++) {
        ctx.fillStyle = cssColor(grid[y * this.paint.resolution + x]);
        ctx.fillRect(x * CANVAS_SCALE, y * CANVAS_SCALE, CANVAS_SCALE, CANVAS_SCALE);
      }
    }
  }
}

function section(id: string, title: string): HTMLElement {
  const panel = document.createElement("section");
  panel.id = id;
  const heading = document.createElement("h2");
  heading.textContent = title;
  panel.append(heading);
  return panel;
}

function messageOf(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  return err instanceof Error ? err.message : String(err);
}

export async function mount(root: HTMLElement, baseUrl = ""): Promise<StudioApp> {
  const app = new StudioApp(root, new StudioApi(baseUrl));
  await app.start();
  return app;
}
