// Shared fakes for the store and UI tests. FakeClient mimics the service
// contract shape-for-shape; streams come from canned records unless a
// pushable override is installed.

import {
  ApiError,
  CheckpointInfo,
  DragOptions,
  SseEvent,
  TrajectoryEvent,
} from "../src/api.js";

export const CKPT: CheckpointInfo = {
  id: "desk",
  path: "/tmp/desk.ckpt",
  resolution: 64,
  spec: {
    sim: [
      { name: "bump_amplitude", min: 0, max: 1 },
      { name: "bump_width", min: 0.5, max: 2.5 },
      { name: "phase", min: 0, max: 6.28 },
    ],
    vis: [{ name: "tint", min: -0.2, max: 0.2 }],
  },
  metadata: {},
};

export function rec(step: number, status = "running"): TrajectoryEvent {
  return {
    step,
    theta: [0.1 + step * 0.01, 1.5, 3.0, 0.05],
    points: [[8 + step, 8]],
    loss: 1 / (step + 1),
    status,
    frame: `FRAME${step}`,
  };
}

export function sse(records: TrajectoryEvent[], endStatus: string): SseEvent[] {
  const out = records.map((r) => ({ event: "message", data: JSON.stringify(r) }));
  out.push({ event: "end", data: JSON.stringify({ status: endStatus }) });
  return out;
}

export function pushable<T>() {
  const buffer: T[] = [];
  let notify: (() => void) | null = null;
  let closed = false;
  async function* generate(): AsyncGenerator<T> {
    for (;;) {
      if (buffer.length) {
        yield buffer.shift() as T;
        continue;
      }
      if (closed) return;
      await new Promise<void>((res) => {
        notify = res;
      });
    }
  }
  const wake = () => {
    notify?.();
    notify = null;
  };
  return {
    gen: generate(),
    push(v: T) {
      buffer.push(v);
      wake();
    },
    close() {
      closed = true;
      wake();
    },
  };
}

export const tick = () => new Promise((res) => setTimeout(res, 0));

export class FakeClient {
  checkpoints = [CKPT];
  records: TrajectoryEvent[] = [];
  endStatus = "reached";
  startDragCalls = 0;
  lastDragOpts: DragOptions | null = null;
  selectionCalls: { select: [number, number]; target: [number, number] }[] = [];
  emptyPatchAt: [number, number] | null = null;
  failList = false;
  streamOverride: AsyncGenerator<SseEvent> | null = null;

  async listCheckpoints(): Promise<CheckpointInfo[]> {
    if (this.failList) throw new ApiError(503, "service unreachable");
    return this.checkpoints;
  }

  async registerCheckpoint(): Promise<CheckpointInfo> {
    return CKPT;
  }

  async createSession(checkpoint: string, theta: number[]) {
    return { id: "s1", checkpoint, status: "configured", theta: [...theta], frame: "BASE" };
  }

  async addSelection(_id: string, select: [number, number], target: [number, number]) {
    if (this.emptyPatchAt && select[0] === this.emptyPatchAt[0] && select[1] === this.emptyPatchAt[1]) {
      throw new ApiError(422, "no similar pixels at that point");
    }
    this.selectionCalls.push({ select, target });
    return {
      index: 0,
      seed: select,
      target,
      pixels: [select, [select[0] + 1, select[1]] as [number, number]],
    };
  }

  async startDrag(_id: string, opts: DragOptions): Promise<AsyncGenerator<SseEvent>> {
    this.startDragCalls += 1;
    this.lastDragOpts = opts;
    if (this.streamOverride) return this.streamOverride;
    const events = sse(this.records, this.endStatus);
    return (async function* () {
      for (const ev of events) yield ev;
    })();
  }

  async events(): Promise<AsyncGenerator<SseEvent>> {
    return this.startDrag("", {});
  }

  async trajectory(id: string) {
    return { id, status: this.endStatus, steps: this.records.length, records: this.records };
  }

  async cancel(id: string) {
    return { id, status: "cancelled" };
  }

  async remove(): Promise<void> {}

  async health() {
    return { status: "ok", checkpoints: 1 };
  }
}
