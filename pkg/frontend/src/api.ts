// Typed client for the dragsim HTTP service. This module is the only place
// that talks to the network; everything above it works with parsed payloads.

export type ParamRange = { name: string; min: number; max: number };

export type ParamSpec = { sim: ParamRange[]; vis: ParamRange[] };

export type CheckpointInfo = {
  id: string;
  path: string;
  resolution: number;
  spec: ParamSpec;
  metadata: Record<string, unknown>;
};

export type SessionInfo = {
  id: string;
  checkpoint: string;
  status: string;
  theta: number[];
  frame: string;
};

export type SelectionInfo = {
  index: number;
  seed: [number, number];
  target: [number, number];
  pixels: [number, number][];
};

// One trajectory record as streamed and as returned by the trajectory
// endpoint. theta is simulation values followed by visualization values,
// in physical units; frame is base64 PNG bytes.
export type TrajectoryEvent = {
  step: number;
  theta: number[];
  points: [number, number][];
  loss: number;
  status: string;
  frame: string;
};

export type Trajectory = {
  id: string;
  status: string;
  steps: number;
  records: TrajectoryEvent[];
};

export type SelectionOptions = {
  d?: number;
  r?: number;
  cap_radius?: number;
};

export type DragOptions = {
  r_m?: number;
  d_threshold?: number;
  max_iters?: number;
  step_size?: number;
  free_mask?: boolean[];
  feature_layer?: string;
  disappearance_window?: string;
};

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

export type SseEvent = { event: string; data: string };

function parseSseBlock(block: string): SseEvent | null {
  let event = "message";
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith("data:")) data.push(line.slice(5).trimStart());
    else if (line.startsWith("event:")) event = line.slice(6).trim();
  }
  return data.length ? { event, data: data.join("\n") } : null;
}

// Incremental server-sent-events reader. Blocks are separated by a blank
// line; chunk boundaries from the network can fall anywhere, including
// inside a field name, so everything buffers until a full block arrives.
export async function* parseSse(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<SseEvent, void, unknown> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buf = "";
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (value) buf += decoder.decode(value, { stream: true });
      for (;;) {
        const cut = buf.indexOf("\n\n");
        if (cut < 0) break;
        const ev = parseSseBlock(buf.slice(0, cut));
        buf = buf.slice(cut + 2);
        if (ev) yield ev;
      }
      if (done) return;
    }
  } finally {
    reader.releaseLock();
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class Client {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly base: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private url(path: string): string {
    return this.base.replace(/\/+$/, "") + path;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const res = await this.fetchFn(this.url(path), init);
    if (!res.ok) {
      let detail = `${res.status} ${res.statusText}`;
      try {
        const doc = await res.json();
        if (doc && typeof doc.detail === "string") detail = doc.detail;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(res.status, detail);
    }
    return res;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.request(path, init);
    return (await res.json()) as T;
  }

  private post(body: unknown): RequestInit {
    return {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    };
  }

  async health(): Promise<{ status: string; checkpoints: number }> {
    return this.json("/health");
  }

  async listCheckpoints(): Promise<CheckpointInfo[]> {
    const doc = await this.json<{ checkpoints: CheckpointInfo[] }>("/checkpoints");
    return doc.checkpoints;
  }

  async registerCheckpoint(path: string): Promise<CheckpointInfo> {
    return this.json("/checkpoints", this.post({ path }));
  }

  async createSession(checkpoint: string, theta: number[]): Promise<SessionInfo> {
    return this.json("/sessions", this.post({ checkpoint, theta }));
  }

  async addSelection(
    id: string,
    select: [number, number],
    target: [number, number],
    opts: SelectionOptions = {},
  ): Promise<SelectionInfo> {
    return this.json(
      `/sessions/${id}/selections`,
      this.post({ select, target, ...opts }),
    );
  }

  // Starts the drag and returns the live event stream. The server keeps
  // running if the stream consumer goes away; reattach with events().
  async startDrag(id: string, opts: DragOptions = {}): Promise<AsyncGenerator<SseEvent>> {
    const res = await this.request(`/sessions/${id}/drag`, this.post(opts));
    if (!res.body) throw new ApiError(res.status, "response has no body stream");
    return parseSse(res.body);
  }

  async events(id: string): Promise<AsyncGenerator<SseEvent>> {
    const res = await this.request(`/sessions/${id}/events`);
    if (!res.body) throw new ApiError(res.status, "response has no body stream");
    return parseSse(res.body);
  }

  async trajectory(id: string): Promise<Trajectory> {
    return this.json(`/sessions/${id}/trajectory`);
  }

  async cancel(id: string): Promise<{ id: string; status: string }> {
    return this.json(`/sessions/${id}/cancel`, { method: "POST" });
  }

  async remove(id: string): Promise<void> {
    await this.request(`/sessions/${id}`, { method: "DELETE" });
  }
}
