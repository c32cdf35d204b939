import { describe, expect, it } from "vitest";

import { SessionSocket, SocketLike } from "../src/net.js";
import { setLoco, reset } from "../src/protocol.js";
import { UiAction } from "../src/state.js";

class FakeSocket implements SocketLike {
  readyState = 0;
  sent: string[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.closed = true;
  }
  open(): void {
    this.readyState = 1;
    this.onopen?.();
  }
  drop(): void {
    this.readyState = 3;
    this.onclose?.();
  }
}

interface Timer {
  fn: () => void;
  at: number;
  ms: number;
}

class Clock {
  t = 0;
  timers: Timer[] = [];
  delays: number[] = [];

  now = (): number => this.t;
  setTimer = (fn: () => void, ms: number): unknown => {
    const timer: Timer = { fn, at: this.t + ms, ms };
    this.timers.push(timer);
    this.delays.push(ms);
    return timer;
  };
  clearTimer = (handle: unknown): void => {
    this.timers = this.timers.filter((t) => t !== handle);
  };

  advance(ms: number): void {
    const deadline = this.t + ms;
    for (;;) {
      const due = this.timers
        .filter((t) => t.at <= deadline)
        .sort((a, b) => a.at - b.at)[0];
      if (!due) break;
      this.timers = this.timers.filter((t) => t !== due);
      this.t = due.at;
      due.fn();
    }
    this.t = deadline;
  }
}

function harness() {
  const clock = new Clock();
  const sockets: FakeSocket[] = [];
  const actions: UiAction[] = [];
  const session = new SessionSocket(
    "ws://example.test/session",
    (a) => actions.push(a),
    {
      makeSocket: () => {
        const s = new FakeSocket();
        sockets.push(s);
        return s;
      },
      now: clock.now,
      setTimer: clock.setTimer,
      clearTimer: clock.clearTimer,
      baseDelayMs: 500,
      maxDelayMs: 8000,
    },
  );
  return { clock, sockets, actions, session };
}

describe("SessionSocket", () => {
  it("reconnects with doubling backoff capped at the max delay", () => {
    const { clock, sockets, session } = harness();
    session.connect();
    // never opens; each drop should schedule the next attempt further out
    for (let i = 0; i < 7; i++) {
      sockets.at(-1)!.drop();
      clock.advance(20_000);
    }
    expect(clock.delays.slice(0, 6)).toEqual([500, 1000, 2000, 4000, 8000, 8000]);
    expect(sockets.length).toBe(8);
    session.stop();
  });

  it("a successful open resets the backoff", () => {
    const { clock, sockets, session } = harness();
    session.connect();
    sockets.at(-1)!.drop();
    clock.advance(20_000);
    sockets.at(-1)!.open();
    sockets.at(-1)!.drop(); // attempt counter was cleared by the open
    expect(clock.delays.at(-1)).toBe(500);
    session.stop();
  });

  it("parses inbound payloads and forwards undefined for junk", () => {
    const { sockets, actions, session } = harness();
    session.connect();
    const s = sockets[0]!;
    s.open();
    s.onmessage?.({ data: '{"v":1,"type":"event","kind":"reset"}' });
    s.onmessage?.({ data: "{not json" });
    const messages = actions.filter((a) => a.kind === "message");
    expect(messages.length).toBe(2);
    expect((messages[0] as { data: { kind: string } }).data.kind).toBe("reset");
    expect((messages[1] as { data: unknown }).data).toBeUndefined();
    session.stop();
  });

  it("refuses to send while the socket is not open", () => {
    const { session } = harness();
    session.connect();
    expect(session.send(reset())).toBe(false);
    session.stop();
  });

  it("throws on schema-invalid outbound messages", () => {
    const { sockets, session } = harness();
    session.connect();
    sockets[0]!.open();
    const bad = { v: 1, type: "set_loco", loco: { v: [1, 2, 3], w: 0 } };
    expect(() => session.send(bad as never)).toThrow();
    expect(sockets[0]!.sent.length).toBe(0);
    session.stop();
  });

  it("rate-limits sends and flushes the newest parked steering command", () => {
    const { clock, sockets, session } = harness();
    session.connect();
    const s = sockets[0]!;
    s.open();

    for (let i = 0; i < 30; i++) {
      session.send(setLoco([i / 100, 0], 0));
      clock.advance(1);
    }
    expect(s.sent.length).toBe(20);

    // the last over-limit command must arrive once the window frees
    clock.advance(2000);
    expect(s.sent.length).toBe(21);
    const last = JSON.parse(s.sent.at(-1)!) as { loco: { v: number[] } };
    expect(last.loco.v[0]).toBeCloseTo(0.29, 12);
    session.stop();
  });

  it("stop closes the socket and cancels reconnects", () => {
    const { clock, sockets, session } = harness();
    session.connect();
    sockets[0]!.drop();
    session.stop();
    clock.advance(60_000);
    expect(sockets.length).toBe(1);
  });
});
