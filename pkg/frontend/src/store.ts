// Session state and the operations the page exposes. All mutation funnels
// through one Store so view updates serialize; the stream consumer is the
// only writer while a drag runs.

import {
  ApiError,
  CheckpointInfo,
  Client,
  DragOptions,
  SelectionInfo,
  SseEvent,
  TrajectoryEvent,
} from "./api.js";

export type PickMode = "structure" | "target";

export type InlineError = { x: number; y: number; message: string };

export type ParamRow = {
  name: string;
  kind: "sim" | "vis";
  min: number;
  max: number;
  // Rendered exactly as received from the service; the UI never recomputes
  // parameter values, it only forwards and displays them.
  value: number;
  fixed: boolean;
};

export const TERMINAL_STATUSES = [
  "reached",
  "disappeared",
  "max_iters_exhausted",
  "aborted",
  "cancelled",
] as const;

export function isTerminal(status: string): boolean {
  return (TERMINAL_STATUSES as readonly string[]).includes(status);
}

export type AppState = {
  serviceUrl: string;
  connected: boolean;
  banner: string | null;
  inlineError: InlineError | null;
  checkpoints: CheckpointInfo[];
  checkpointId: string | null;
  resolution: number;
  sliders: number[];
  sessionId: string | null;
  sessionTheta: number[];
  baseFrame: string | null;
  selections: SelectionInfo[];
  pickMode: PickMode;
  target: [number, number] | null;
  fixed: boolean[];
  running: boolean;
  status: string;
  events: TrajectoryEvent[];
  // null while live-following; otherwise the scrubbed event index.
  scrub: number | null;
  maxIters: number;
  stepSize: number;
};

function initialState(serviceUrl: string): AppState {
  return {
    serviceUrl,
    connected: false,
    banner: null,
    inlineError: null,
    checkpoints: [],
    checkpointId: null,
    resolution: 0,
    sliders: [],
    sessionId: null,
    sessionTheta: [],
    baseFrame: null,
    selections: [],
    pickMode: "structure",
    target: null,
    fixed: [],
    running: false,
    status: "idle",
    events: [],
    scrub: null,
    maxIters: 200,
    stepSize: 2e-3,
  };
}

export type ClientFactory = (base: string) => Client;

export class Store {
  state: AppState;
  private client: Client | null = null;
  private readonly listeners = new Set<(s: AppState) => void>();
  private readonly makeClient: ClientFactory;
  private streamEpoch = 0;

  constructor(serviceUrl: string, makeClient: ClientFactory = (base) => new Client(base)) {
    this.state = initialState(serviceUrl);
    this.makeClient = makeClient;
  }

  subscribe(fn: (s: AppState) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private update(patch: Partial<AppState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  private api(): Client {
    if (!this.client) throw new Error("not connected");
    return this.client;
  }

  checkpoint(): CheckpointInfo | null {
    return this.state.checkpoints.find((c) => c.id === this.state.checkpointId) ?? null;
  }

  // The record the view should show: the scrubbed one, else the newest.
  currentEvent(): TrajectoryEvent | null {
    const { events, scrub } = this.state;
    if (!events.length) return null;
    const i = scrub === null ? events.length - 1 : scrub;
    return events[Math.min(i, events.length - 1)] ?? null;
  }

  currentFrame(): string | null {
    return this.currentEvent()?.frame ?? this.state.baseFrame;
  }

  // Parameter rows shown in the table. Values come verbatim from service
  // payloads: the current trajectory event while one exists, the session
  // creation response before that.
  paramRows(): ParamRow[] {
    const ck = this.checkpoint();
    if (!ck) return [];
    const theta = this.currentEvent()?.theta ?? this.state.sessionTheta;
    const rows: ParamRow[] = [];
    ck.spec.sim.forEach((p, i) => {
      rows.push({
        name: p.name,
        kind: "sim",
        min: p.min,
        max: p.max,
        value: theta[i] ?? NaN,
        fixed: this.state.fixed[i] ?? false,
      });
    });
    ck.spec.vis.forEach((p, i) => {
      rows.push({
        name: p.name,
        kind: "vis",
        min: p.min,
        max: p.max,
        value: theta[ck.spec.sim.length + i] ?? NaN,
        fixed: true,
      });
    });
    return rows;
  }

  private fail(err: unknown): void {
    const message = err instanceof Error ? err.message : String(err);
    this.update({ banner: message });
  }

  async connect(serviceUrl?: string): Promise<void> {
    const base = serviceUrl ?? this.state.serviceUrl;
    try {
      const client = this.makeClient(base);
      const checkpoints = await client.listCheckpoints();
      this.client = client;
      this.update({
        serviceUrl: base,
        connected: true,
        banner: null,
        checkpoints,
        checkpointId: checkpoints[0]?.id ?? null,
      });
      if (checkpoints[0]) this.pickCheckpoint(checkpoints[0].id);
    } catch (err) {
      this.client = null;
      this.update({ connected: false, checkpoints: [] });
      this.fail(err);
    }
  }

  pickCheckpoint(id: string): void {
    const ck = this.state.checkpoints.find((c) => c.id === id);
    if (!ck) return;
    const mid = (p: { min: number; max: number }) => (p.min + p.max) / 2;
    this.update({
      checkpointId: id,
      resolution: ck.resolution,
      sliders: [...ck.spec.sim.map(mid), ...ck.spec.vis.map(mid)],
      fixed: ck.spec.sim.map(() => false),
    });
    this.resetSession();
  }

  setSlider(index: number, value: number): void {
    const sliders = [...this.state.sliders];
    sliders[index] = value;
    this.update({ sliders });
  }

  private resetSession(): void {
    this.streamEpoch += 1;
    this.update({
      sessionId: null,
      sessionTheta: [],
      baseFrame: null,
      selections: [],
      target: null,
      pickMode: "structure",
      running: false,
      status: "idle",
      events: [],
      scrub: null,
      inlineError: null,
    });
  }

  async newSession(): Promise<void> {
    const ck = this.checkpoint();
    if (!ck) return;
    this.resetSession();
    try {
      const info = await this.api().createSession(ck.id, this.state.sliders);
      this.update({
        sessionId: info.id,
        sessionTheta: info.theta,
        baseFrame: info.frame,
        status: info.status,
        banner: null,
      });
    } catch (err) {
      this.fail(err);
    }
  }

  setPickMode(mode: PickMode): void {
    this.update({ pickMode: mode });
  }

  // A structure click grows a patch server-side; an empty patch is not a
  // banner-level failure, it belongs next to the click position.
  async pickStructure(x: number, y: number): Promise<void> {
    const id = this.state.sessionId;
    if (!id || this.state.running) return;
    const target = this.state.target ?? [x, y];
    try {
      const sel = await this.api().addSelection(id, [x, y], target as [number, number]);
      const selections = [...this.state.selections];
      selections[sel.index] = sel;
      this.update({ selections, inlineError: null, pickMode: "target" });
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        this.update({ inlineError: { x, y, message: err.message } });
      } else {
        this.fail(err);
      }
    }
  }

  // Targets apply to the most recent structure. The service stores the
  // target with the selection, so changing it re-sends the same seed.
  async pickTarget(x: number, y: number): Promise<void> {
    const id = this.state.sessionId;
    const last = this.state.selections[this.state.selections.length - 1];
    if (!id || this.state.running) return;
    if (!last) {
      this.update({ target: [x, y] });
      return;
    }
    try {
      const sel = await this.api().addSelection(id, last.seed, [x, y]);
      const selections = [...this.state.selections];
      selections[selections.length - 1] = sel;
      this.update({ selections, target: [x, y], inlineError: null });
    } catch (err) {
      this.fail(err);
    }
  }

  toggleFixed(simIndex: number): void {
    const fixed = [...this.state.fixed];
    if (simIndex < 0 || simIndex >= fixed.length) return;
    fixed[simIndex] = !fixed[simIndex];
    this.update({ fixed });
  }

  freeMask(): boolean[] {
    return this.state.fixed.map((f) => !f);
  }

  canRun(): boolean {
    return (
      this.state.sessionId !== null &&
      !this.state.running &&
      this.state.status === "configured" &&
      this.state.selections.length > 0 &&
      this.freeMask().some(Boolean)
    );
  }

  setDragControls(maxIters: number, stepSize: number): void {
    this.update({ maxIters, stepSize });
  }

  // Launches the drag and consumes the event stream. One consumer only:
  // a second run() while streaming is a no-op, and a session reset
  // invalidates the epoch so a stale stream stops writing.
  async run(): Promise<void> {
    if (!this.canRun()) return;
    const id = this.state.sessionId as string;
    const epoch = ++this.streamEpoch;
    const opts: DragOptions = {
      max_iters: this.state.maxIters,
      step_size: this.state.stepSize,
    };
    if (this.state.fixed.some(Boolean)) opts.free_mask = this.freeMask();
    this.update({ running: true, status: "running", events: [], scrub: null });
    try {
      const stream = await this.api().startDrag(id, opts);
      for await (const ev of stream) {
        if (this.streamEpoch !== epoch) return;
        this.applyStreamEvent(ev);
      }
    } catch (err) {
      if (this.streamEpoch === epoch) {
        this.update({ running: false, status: "aborted" });
        this.fail(err);
      }
    }
  }

  private applyStreamEvent(ev: SseEvent): void {
    if (ev.event === "end") {
      const doc = JSON.parse(ev.data) as { status: string };
      this.update({ running: false, status: doc.status });
      return;
    }
    const record = JSON.parse(ev.data) as TrajectoryEvent;
    this.update({
      events: [...this.state.events, record],
      status: record.status,
    });
  }

  // Scrubbing is a pure view change over already-received events; it never
  // talks to the service and never mutates the session.
  scrubTo(step: number | null): void {
    if (step === null) {
      this.update({ scrub: null });
      return;
    }
    const max = this.state.events.length - 1;
    if (max < 0) return;
    this.update({ scrub: Math.max(0, Math.min(step, max)) });
  }

  async cancelRun(): Promise<void> {
    const id = this.state.sessionId;
    if (!id) return;
    try {
      await this.api().cancel(id);
    } catch (err) {
      this.fail(err);
    }
  }

  // The export is the trajectory endpoint re-framed as newline-delimited
  // JSON, one record per line, values untouched.
  async exportTrajectory(): Promise<string> {
    const id = this.state.sessionId;
    if (!id) throw new Error("no session");
    const doc = await this.api().trajectory(id);
    return doc.records.map((r) => JSON.stringify(r)).join("\n") + "\n";
  }
}
