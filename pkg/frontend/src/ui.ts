// DOM construction and rendering. The Store owns all state; this module
// projects it into the page and forwards user gestures back as operations.
// Table and badge updates happen synchronously on every store change;
// canvas painting decodes frames asynchronously and catches up on load.

import { Store, AppState, isTerminal } from "./store.js";

export type UiRefs = {
  root: HTMLElement;
  urlInput: HTMLInputElement;
  connectButton: HTMLButtonElement;
  banner: HTMLElement;
  checkpointSelect: HTMLSelectElement;
  sliderBox: HTMLElement;
  newSessionButton: HTMLButtonElement;
  paramTable: HTMLTableElement;
  paramBody: HTMLTableSectionElement;
  pickStructureRadio: HTMLInputElement;
  pickTargetRadio: HTMLInputElement;
  maxItersInput: HTMLInputElement;
  stepSizeInput: HTMLInputElement;
  runButton: HTMLButtonElement;
  cancelButton: HTMLButtonElement;
  exportButton: HTMLButtonElement;
  statusBadge: HTMLElement;
  stepCounter: HTMLElement;
  scrubber: HTMLInputElement;
  liveButton: HTMLButtonElement;
  frameCanvas: HTMLCanvasElement;
  overlayCanvas: HTMLCanvasElement;
  inlineError: HTMLElement;
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function buildUi(root: HTMLElement, store: Store): UiRefs {
  root.innerHTML = "";
  const app = el("div", "app");

  const header = el("header", "toolbar");
  const urlInput = el("input", "service-url");
  urlInput.value = store.state.serviceUrl;
  const connectButton = el("button", "connect", "Connect");
  const banner = el("span", "banner");
  header.append(urlInput, connectButton, banner);

  const columns = el("div", "columns");
  const aside = el("aside", "controls");

  const checkpointSelect = el("select", "checkpoints");
  const sliderBox = el("div", "sliders");
  const newSessionButton = el("button", "new-session", "New session");

  const paramTable = el("table", "params");
  const paramHead = el("thead");
  const headRow = el("tr");
  for (const h of ["parameter", "value", "fixed"]) headRow.append(el("th", undefined, h));
  paramHead.append(headRow);
  const paramBody = el("tbody");
  paramTable.append(paramHead, paramBody);

  const pickBox = el("fieldset", "pick-mode");
  pickBox.append(el("legend", undefined, "click selects"));
  const pickStructureRadio = el("input");
  pickStructureRadio.type = "radio";
  pickStructureRadio.name = "pick";
  const pickTargetRadio = el("input");
  pickTargetRadio.type = "radio";
  pickTargetRadio.name = "pick";
  const structureLabel = el("label", undefined, "structure");
  structureLabel.prepend(pickStructureRadio);
  const targetLabel = el("label", undefined, "target");
  targetLabel.prepend(pickTargetRadio);
  pickBox.append(structureLabel, targetLabel);

  const dragBox = el("fieldset", "drag-controls");
  dragBox.append(el("legend", undefined, "drag"));
  const maxItersLabel = el("label", undefined, "max iterations ");
  const maxItersInput = el("input");
  maxItersInput.type = "number";
  maxItersInput.min = "1";
  maxItersInput.value = String(store.state.maxIters);
  maxItersLabel.append(maxItersInput);
  const stepSizeLabel = el("label", undefined, "step size ");
  const stepSizeInput = el("input");
  stepSizeInput.type = "number";
  stepSizeInput.step = "any";
  stepSizeInput.value = String(store.state.stepSize);
  stepSizeLabel.append(stepSizeInput);
  dragBox.append(maxItersLabel, stepSizeLabel);

  const runButton = el("button", "run", "Run drag");
  const cancelButton = el("button", "cancel", "Cancel");
  const exportButton = el("button", "export", "Export trajectory");

  const statusLine = el("div", "status-line");
  const statusBadge = el("span", "status-badge", "idle");
  const stepCounter = el("span", "step-counter", "");
  statusLine.append(statusBadge, stepCounter);

  const scrubLine = el("div", "scrub-line");
  const scrubber = el("input", "scrubber");
  scrubber.type = "range";
  scrubber.min = "0";
  scrubber.max = "0";
  scrubber.disabled = true;
  const liveButton = el("button", "live", "Live");
  scrubLine.append(scrubber, liveButton);

  aside.append(
    checkpointSelect, sliderBox, newSessionButton, paramTable,
    pickBox, dragBox, runButton, cancelButton, exportButton,
    statusLine, scrubLine,
  );

  const main = el("main", "stage");
  const canvasWrap = el("div", "canvas-wrap");
  const frameCanvas = el("canvas", "frame");
  const overlayCanvas = el("canvas", "overlay");
  const inlineError = el("div", "inline-error");
  inlineError.hidden = true;
  canvasWrap.append(frameCanvas, overlayCanvas, inlineError);
  main.append(canvasWrap);

  columns.append(aside, main);
  app.append(header, columns);
  root.append(app);

  const refs: UiRefs = {
    root, urlInput, connectButton, banner, checkpointSelect, sliderBox,
    newSessionButton, paramTable, paramBody, pickStructureRadio,
    pickTargetRadio, maxItersInput, stepSizeInput, runButton, cancelButton,
    exportButton, statusBadge, stepCounter, scrubber, liveButton,
    frameCanvas, overlayCanvas, inlineError,
  };
  wire(refs, store);
  store.subscribe((s) => render(refs, store, s));
  render(refs, store, store.state);
  return refs;
}

function canvasCoords(
  canvas: HTMLCanvasElement,
  ev: MouseEvent,
  resolution: number,
): [number, number] {
  const rect = canvas.getBoundingClientRect();
  // jsdom reports zero-size rects; fall back to raw client coordinates so
  // scripted clicks address image pixels directly.
  const scale = rect.width > 0 ? resolution / rect.width : 1;
  const x = Math.floor((ev.clientX - rect.left) * scale);
  const y = Math.floor((ev.clientY - rect.top) * scale);
  return [x, y];
}

function wire(refs: UiRefs, store: Store): void {
  refs.connectButton.addEventListener("click", () => {
    void store.connect(refs.urlInput.value);
  });
  refs.checkpointSelect.addEventListener("change", () => {
    store.pickCheckpoint(refs.checkpointSelect.value);
  });
  refs.newSessionButton.addEventListener("click", () => {
    void store.newSession();
  });
  refs.pickStructureRadio.addEventListener("change", () => {
    if (refs.pickStructureRadio.checked) store.setPickMode("structure");
  });
  refs.pickTargetRadio.addEventListener("change", () => {
    if (refs.pickTargetRadio.checked) store.setPickMode("target");
  });
  const pushControls = () => {
    store.setDragControls(
      Math.max(1, Number(refs.maxItersInput.value) || 1),
      Number(refs.stepSizeInput.value) || 0,
    );
  };
  refs.maxItersInput.addEventListener("change", pushControls);
  refs.stepSizeInput.addEventListener("change", pushControls);
  refs.runButton.addEventListener("click", () => {
    void store.run();
  });
  refs.cancelButton.addEventListener("click", () => {
    void store.cancelRun();
  });
  refs.exportButton.addEventListener("click", () => {
    void downloadTrajectory(store);
  });
  refs.scrubber.addEventListener("input", () => {
    store.scrubTo(Number(refs.scrubber.value));
  });
  refs.liveButton.addEventListener("click", () => {
    store.scrubTo(null);
  });
  refs.overlayCanvas.addEventListener("click", (ev) => {
    const [x, y] = canvasCoords(refs.overlayCanvas, ev, store.state.resolution);
    if (store.state.pickMode === "structure") void store.pickStructure(x, y);
    else void store.pickTarget(x, y);
  });
}

async function downloadTrajectory(store: Store): Promise<void> {
  const text = await store.exportTrajectory();
  if (typeof URL.createObjectURL !== "function") return; // test environments
  const blob = new Blob([text], { type: "application/x-ndjson" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `trajectory-${store.state.sessionId ?? "session"}.ndjson`;
  a.click();
  URL.revokeObjectURL(a.href);
}

function renderSliders(refs: UiRefs, store: Store, state: AppState): void {
  const ck = store.checkpoint();
  refs.sliderBox.innerHTML = "";
  if (!ck) return;
  const all = [...ck.spec.sim, ...ck.spec.vis];
  all.forEach((p, i) => {
    const row = el("label", "slider-row", `${p.name} `);
    const slider = el("input");
    slider.type = "range";
    slider.min = String(p.min);
    slider.max = String(p.max);
    slider.step = String((p.max - p.min) / 200);
    slider.value = String(state.sliders[i] ?? p.min);
    const readout = el("span", "slider-value", String(state.sliders[i] ?? p.min));
    slider.addEventListener("input", () => {
      store.setSlider(i, Number(slider.value));
    });
    row.append(slider, readout);
    refs.sliderBox.append(row);
  });
}

function renderTable(refs: UiRefs, store: Store): void {
  refs.paramBody.innerHTML = "";
  const rows = store.paramRows();
  // Simulation rows come first, so the row index doubles as the sim index.
  rows.forEach((row, i) => {
    const tr = el("tr");
    tr.dataset.kind = row.kind;
    tr.append(el("td", "param-name", row.name));
    // Verbatim service value: stringified number, no rounding or units.
    tr.append(el("td", "param-value", String(row.value)));
    const toggleCell = el("td", "param-fixed");
    if (row.kind === "sim") {
      const box = el("input");
      box.type = "checkbox";
      box.checked = row.fixed;
      box.addEventListener("change", () => store.toggleFixed(i));
      toggleCell.append(box);
    } else {
      toggleCell.textContent = "-";
    }
    tr.append(toggleCell);
    refs.paramBody.append(tr);
  });
}

type PaintState = { lastFrame: string | null };
const paint: WeakMap<UiRefs, PaintState> = new WeakMap();

// One getContext probe per canvas: jsdom has no raster backend and logs
// every failed attempt, so remember the null.
const contexts: WeakMap<HTMLCanvasElement, CanvasRenderingContext2D | null> = new WeakMap();

function context2d(canvas: HTMLCanvasElement): CanvasRenderingContext2D | null {
  if (!contexts.has(canvas)) {
    let ctx: CanvasRenderingContext2D | null = null;
    try {
      ctx = canvas.getContext("2d");
    } catch {
      ctx = null;
    }
    contexts.set(canvas, ctx);
  }
  return contexts.get(canvas) ?? null;
}

function drawFrame(refs: UiRefs, store: Store): void {
  const frame = store.currentFrame();
  const res = store.state.resolution;
  if (!frame || !res) return;
  const ps = paint.get(refs) ?? { lastFrame: null };
  paint.set(refs, ps);
  if (ps.lastFrame === frame) return;
  ps.lastFrame = frame;
  const ctx = context2d(refs.frameCanvas);
  if (!ctx) return;
  const img = new Image();
  img.onload = () => {
    if (ps.lastFrame !== frame) return; // a newer frame won
    ctx.drawImage(img, 0, 0);
  };
  img.src = `data:image/png;base64,${frame}`;
}

function drawOverlay(refs: UiRefs, store: Store, state: AppState): void {
  const ctx = context2d(refs.overlayCanvas);
  if (!ctx) return;
  ctx.clearRect(0, 0, refs.overlayCanvas.width, refs.overlayCanvas.height);
  ctx.fillStyle = "rgba(64, 160, 255, 0.45)";
  for (const sel of state.selections) {
    for (const [x, y] of sel.pixels) ctx.fillRect(x, y, 1, 1);
  }
  const event = store.currentEvent();
  const handles = event ? event.points : state.selections.map((s) => s.seed);
  ctx.fillStyle = "rgba(255, 220, 0, 0.9)";
  for (const [x, y] of handles) ctx.fillRect(x - 1, y - 1, 3, 3);
  ctx.strokeStyle = "rgba(255, 64, 64, 0.9)";
  for (const sel of state.selections) {
    const [tx, ty] = sel.target;
    ctx.strokeRect(tx - 2, ty - 2, 5, 5);
  }
}

function render(refs: UiRefs, store: Store, state: AppState): void {
  refs.banner.textContent = state.banner ?? "";
  refs.banner.hidden = !state.banner;

  if (refs.checkpointSelect.length !== state.checkpoints.length) {
    refs.checkpointSelect.innerHTML = "";
    for (const ck of state.checkpoints) {
      const opt = el("option", undefined, `${ck.id} (${ck.resolution}px)`);
      opt.value = ck.id;
      refs.checkpointSelect.append(opt);
    }
  }
  if (state.checkpointId) refs.checkpointSelect.value = state.checkpointId;

  if (refs.sliderBox.childElementCount === 0 || !state.sessionId) {
    renderSliders(refs, store, state);
  }
  renderTable(refs, store);

  refs.pickStructureRadio.checked = state.pickMode === "structure";
  refs.pickTargetRadio.checked = state.pickMode === "target";

  refs.newSessionButton.disabled = !state.connected || state.running;
  refs.runButton.disabled = !store.canRun();
  refs.cancelButton.disabled = !state.running;
  refs.exportButton.disabled = !state.sessionId || state.events.length === 0;

  refs.statusBadge.textContent = state.status;
  refs.statusBadge.dataset.terminal = String(isTerminal(state.status));
  const event = store.currentEvent();
  refs.stepCounter.textContent = event
    ? `step ${event.step} of ${state.events.length - 1}`
    : "";

  const max = Math.max(0, state.events.length - 1);
  refs.scrubber.max = String(max);
  refs.scrubber.disabled = state.events.length === 0;
  refs.scrubber.value = String(state.scrub === null ? max : state.scrub);

  if (state.resolution > 0) {
    if (refs.frameCanvas.width !== state.resolution) {
      refs.frameCanvas.width = state.resolution;
      refs.frameCanvas.height = state.resolution;
      refs.overlayCanvas.width = state.resolution;
      refs.overlayCanvas.height = state.resolution;
    }
  }
  try {
    drawFrame(refs, store);
    drawOverlay(refs, store, state);
  } catch {
    // canvas contexts are optional in tests; state stays authoritative
  }

  if (state.inlineError && state.resolution > 0) {
    refs.inlineError.hidden = false;
    refs.inlineError.textContent = state.inlineError.message;
    refs.inlineError.style.left = `${(100 * state.inlineError.x) / state.resolution}%`;
    refs.inlineError.style.top = `${(100 * state.inlineError.y) / state.resolution}%`;
  } else {
    refs.inlineError.hidden = true;
  }
}
