import { describe, expect, it } from "vitest";

import { Client, SseEvent } from "../src/api.js";
import { Store } from "../src/store.js";
import { FakeClient, pushable, rec, tick } from "./fixtures.js";

function makeStore(fake: FakeClient): Store {
  return new Store("http://test", () => fake as unknown as Client);
}

async function readySession(fake: FakeClient): Promise<Store> {
  const store = makeStore(fake);
  await store.connect();
  await store.newSession();
  await store.pickStructure(8, 8);
  return store;
}

describe("connect", () => {
  it("loads checkpoints and derives sliders from parameter range midpoints", async () => {
    const store = makeStore(new FakeClient());
    await store.connect();
    expect(store.state.connected).toBe(true);
    expect(store.state.checkpointId).toBe("desk");
    expect(store.state.resolution).toBe(64);
    expect(store.state.sliders).toEqual([0.5, 1.5, 3.14, 0]);
    expect(store.state.fixed).toEqual([false, false, false]);
  });

  it("shows a banner when the service is unreachable", async () => {
    const fake = new FakeClient();
    fake.failList = true;
    const store = makeStore(fake);
    await store.connect();
    expect(store.state.connected).toBe(false);
    expect(store.state.banner).toBe("service unreachable");
  });
});

describe("sessions and picks", () => {
  it("creates a session from the slider values", async () => {
    const store = makeStore(new FakeClient());
    await store.connect();
    store.setSlider(0, 0.25);
    await store.newSession();
    expect(store.state.sessionId).toBe("s1");
    expect(store.state.sessionTheta).toEqual([0.25, 1.5, 3.14, 0]);
    expect(store.state.baseFrame).toBe("BASE");
    expect(store.state.status).toBe("configured");
  });

  it("stores the mask and switches to target mode after a structure pick", async () => {
    const fake = new FakeClient();
    const store = await readySession(fake);
    expect(store.state.selections).toHaveLength(1);
    expect(store.state.selections[0]?.pixels.length).toBe(2);
    expect(store.state.pickMode).toBe("target");
  });

  it("surfaces an empty patch inline at the click point, not as a banner", async () => {
    const fake = new FakeClient();
    fake.emptyPatchAt = [3, 4];
    const store = makeStore(fake);
    await store.connect();
    await store.newSession();
    await store.pickStructure(3, 4);
    expect(store.state.selections).toHaveLength(0);
    expect(store.state.banner).toBeNull();
    expect(store.state.inlineError).toEqual({ x: 3, y: 4, message: "no similar pixels at that point" });
  });

  it("re-sends the same seed when the target moves", async () => {
    const fake = new FakeClient();
    const store = await readySession(fake);
    await store.pickTarget(20, 9);
    expect(fake.selectionCalls).toHaveLength(2);
    expect(fake.selectionCalls[1]?.select).toEqual([8, 8]);
    expect(fake.selectionCalls[1]?.target).toEqual([20, 9]);
    expect(store.state.target).toEqual([20, 9]);
  });

  it("keeps a pre-structure target and applies it to the next pick", async () => {
    const fake = new FakeClient();
    const store = makeStore(fake);
    await store.connect();
    await store.newSession();
    await store.pickTarget(30, 31);
    expect(store.state.target).toEqual([30, 31]);
    await store.pickStructure(8, 8);
    expect(fake.selectionCalls[0]?.target).toEqual([30, 31]);
  });
});

describe("fixed toggles", () => {
  it("maps fixed flags to the inverse free mask", async () => {
    const store = await readySession(new FakeClient());
    store.toggleFixed(1);
    expect(store.state.fixed).toEqual([false, true, false]);
    expect(store.freeMask()).toEqual([true, false, true]);
  });

  it("blocks running when every parameter is fixed", async () => {
    const store = await readySession(new FakeClient());
    [0, 1, 2].forEach((i) => store.toggleFixed(i));
    expect(store.canRun()).toBe(false);
    store.toggleFixed(2);
    expect(store.canRun()).toBe(true);
  });

  it("only sends a free mask when something is fixed", async () => {
    const fake = new FakeClient();
    fake.records = [rec(0, "reached")];
    const store = await readySession(fake);
    await store.run();
    expect(fake.lastDragOpts?.free_mask).toBeUndefined();
  });
});

describe("run", () => {
  it("appends stream events in order and lands on the terminal status", async () => {
    const fake = new FakeClient();
    fake.records = [rec(0), rec(1), rec(2, "reached")];
    const store = await readySession(fake);
    await store.run();
    expect(store.state.events.map((e) => e.step)).toEqual([0, 1, 2]);
    expect(store.state.status).toBe("reached");
    expect(store.state.running).toBe(false);
    // Values are the payload numbers, untouched.
    expect(store.state.events[1]?.theta).toEqual(rec(1).theta);
  });

  it("shows one event and reached for a fixed-point run", async () => {
    const fake = new FakeClient();
    fake.records = [rec(0, "reached")];
    const store = await readySession(fake);
    await store.run();
    expect(store.state.events).toHaveLength(1);
    expect(store.state.status).toBe("reached");
  });

  it("keeps a single stream consumer per session", async () => {
    const fake = new FakeClient();
    const q = pushable<SseEvent>();
    fake.streamOverride = q.gen;
    const store = await readySession(fake);
    const first = store.run();
    await tick();
    expect(store.state.running).toBe(true);
    await store.run(); // second call must not open a second stream
    expect(fake.startDragCalls).toBe(1);
    q.push({ event: "message", data: JSON.stringify(rec(0)) });
    await tick();
    expect(store.state.events).toHaveLength(1);
    q.push({ event: "end", data: JSON.stringify({ status: "max_iters_exhausted" }) });
    q.close();
    await first;
    expect(store.state.status).toBe("max_iters_exhausted");
  });

  it("forwards the drag controls", async () => {
    const fake = new FakeClient();
    fake.records = [rec(0, "reached")];
    const store = await readySession(fake);
    store.setDragControls(25, 0.005);
    await store.run();
    expect(fake.lastDragOpts).toMatchObject({ max_iters: 25, step_size: 0.005 });
  });
});

describe("scrubbing", () => {
  async function ranStore(): Promise<Store> {
    const fake = new FakeClient();
    fake.records = [rec(0), rec(1), rec(2), rec(3, "reached")];
    const store = await readySession(fake);
    await store.run();
    return store;
  }

  it("scrubbing to step k always shows the k-th received event", async () => {
    const store = await ranStore();
    for (const k of [2, 0, 3, 1]) {
      store.scrubTo(k);
      expect(store.currentEvent()).toEqual(store.state.events[k]);
      expect(store.currentFrame()).toBe(`FRAME${k}`);
    }
  });

  it("clamps to the received event count", async () => {
    const store = await ranStore();
    store.scrubTo(99);
    expect(store.state.scrub).toBe(3);
    store.scrubTo(-5);
    expect(store.state.scrub).toBe(0);
  });

  it("live mode follows the newest event", async () => {
    const store = await ranStore();
    store.scrubTo(1);
    store.scrubTo(null);
    expect(store.currentEvent()?.step).toBe(3);
  });

  it("scrubbing never mutates the session or its events", async () => {
    const store = await ranStore();
    const before = JSON.stringify(store.state.events);
    store.scrubTo(2);
    store.scrubTo(0);
    expect(JSON.stringify(store.state.events)).toBe(before);
    expect(store.state.sessionId).toBe("s1");
  });
});

describe("export", () => {
  it("emits one NDJSON line per trajectory record", async () => {
    const fake = new FakeClient();
    fake.records = [rec(0), rec(1, "reached")];
    const store = await readySession(fake);
    await store.run();
    const text = await store.exportTrajectory();
    const lines = text.trimEnd().split("\n");
    expect(lines).toHaveLength(2);
    expect(JSON.parse(lines[1] as string)).toEqual(rec(1, "reached"));
  });
});
