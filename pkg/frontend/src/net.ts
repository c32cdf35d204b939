/**
 * WebSocket wrapper: reconnect with exponential backoff, rate-limited and
 * schema-validated sends.  All socket callbacks only dispatch reducer
 * actions; they never touch UI state directly.
 */

import { ClientMessage, validateOutbound } from "./protocol.js";
import { RateLimiter } from "./rate_limit.js";
import { UiAction } from "./state.js";

export interface SocketLike {
  readyState: number;
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export interface SessionSocketOptions {
  baseDelayMs?: number;
  maxDelayMs?: number;
  makeSocket?: (url: string) => SocketLike;
  now?: () => number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

const OPEN = 1;

export class SessionSocket {
  private socket: SocketLike | null = null;
  private attempt = 0;
  private stopped = false;
  private reconnectTimer: unknown = null;
  private flushTimer: unknown = null;
  private pendingLoco: ClientMessage | null = null;
  private readonly limiter = new RateLimiter();
  private readonly baseDelayMs: number;
  private readonly maxDelayMs: number;
  private readonly makeSocket: (url: string) => SocketLike;
  private readonly now: () => number;
  private readonly setTimer: (fn: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;

  constructor(
    private readonly url: string,
    private readonly dispatch: (action: UiAction) => void,
    options: SessionSocketOptions = {},
  ) {
    this.baseDelayMs = options.baseDelayMs ?? 500;
    this.maxDelayMs = options.maxDelayMs ?? 8000;
    this.makeSocket =
      options.makeSocket ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.now = options.now ?? (() => Date.now());
    this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimer = options.clearTimer ?? ((h) => clearTimeout(h as number));
  }

  connect(): void {
    if (this.stopped) return;
    this.attempt += 1;
    this.dispatch({ kind: "connecting", attempt: this.attempt });
    const socket = this.makeSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempt = 0;
      this.dispatch({ kind: "open" });
    };
    socket.onmessage = (ev) => {
      let data: unknown;
      try {
        data = JSON.parse(String(ev.data));
      } catch {
        data = undefined; // reducer counts it as a bad frame
      }
      this.dispatch({ kind: "message", data, now: this.now() });
    };
    socket.onerror = () => {
      /* the close handler owns recovery */
    };
    socket.onclose = () => {
      this.socket = null;
      this.dispatch({ kind: "closed" });
      this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.reconnectTimer !== null) return;
    const delay = Math.min(
      this.maxDelayMs,
      this.baseDelayMs * 2 ** Math.max(0, this.attempt - 1),
    );
    this.reconnectTimer = this.setTimer(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay);
  }

  /**
   * Validate and send one command.  Over-limit steering updates are not
   * lost: the newest set_loco is parked and flushed when the window frees.
   */
  send(message: ClientMessage): boolean {
    const valid = validateOutbound(message);
    if (this.socket === null || this.socket.readyState !== OPEN) return false;
    if (!this.limiter.allow(this.now())) {
      if (valid.type === "set_loco") {
        this.pendingLoco = valid;
        this.scheduleFlush();
      }
      return false;
    }
    this.socket.send(JSON.stringify(valid));
    return true;
  }

  private scheduleFlush(): void {
    if (this.flushTimer !== null) return;
    const wait = Math.max(10, this.limiter.retryIn(this.now()));
    this.flushTimer = this.setTimer(() => {
      this.flushTimer = null;
      const pending = this.pendingLoco;
      this.pendingLoco = null;
      if (pending !== null) this.send(pending);
    }, wait);
  }

  stop(): void {
    this.stopped = true;
    if (this.reconnectTimer !== null) this.clearTimer(this.reconnectTimer);
    if (this.flushTimer !== null) this.clearTimer(this.flushTimer);
    this.reconnectTimer = null;
    this.flushTimer = null;
    this.socket?.close();
    this.socket = null;
  }
}
