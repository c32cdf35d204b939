/**
 * UI session state and its reducer.
 *
 * The reducer is total: any value thrown at it (including garbage that is
 * not even an object) yields a defined next state, so the socket layer can
 * forward everything it receives without pre-filtering.
 */

import {
  EventFrameSchema,
  PROTOCOL_VERSION,
  StateFrame,
  StateFrameSchema,
} from "./protocol.js";

export type ConnectionState = "connecting" | "open" | "closed" | "mismatch";

export interface EventEntry {
  kind: string;
  t?: number;
  code?: string;
  message?: string;
  at: number; // wall clock ms when received
}

export interface UiState {
  connection: ConnectionState;
  mismatchMessage: string | null;
  attempt: number; // reconnect attempt counter, drives backoff display
  latest: StateFrame | null;
  lastSeq: number;
  events: EventEntry[];
  badFrames: number;
  fallFlashUntil: number; // ms timestamp; renderer flashes while now < this
}

export type UiAction =
  | { kind: "connecting"; attempt: number }
  | { kind: "open" }
  | { kind: "closed" }
  | { kind: "message"; data: unknown; now: number };

export const EVENT_LOG_LIMIT = 50;
export const FALL_FLASH_MS = 800;

export function initialState(): UiState {
  return {
    connection: "connecting",
    mismatchMessage: null,
    attempt: 0,
    latest: null,
    lastSeq: -1,
    events: [],
    badFrames: 0,
    fallFlashUntil: 0,
  };
}

function pushEvent(state: UiState, entry: EventEntry): UiState {
  const events = [...state.events, entry].slice(-EVENT_LOG_LIMIT);
  return { ...state, events };
}

function applyMessage(state: UiState, data: unknown, now: number): UiState {
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    return { ...state, badFrames: state.badFrames + 1 };
  }
  const version = (data as Record<string, unknown>)["v"];
  if (version !== PROTOCOL_VERSION) {
    return {
      ...state,
      connection: "mismatch",
      mismatchMessage: `server speaks protocol ${String(version)}, this UI speaks ${PROTOCOL_VERSION}`,
    };
  }

  const type = (data as Record<string, unknown>)["type"];
  if (type === "state") {
    const parsed = StateFrameSchema.safeParse(data);
    if (!parsed.success) {
      return { ...state, badFrames: state.badFrames + 1 };
    }
    // Render only the highest sequence number ever received.
    if (parsed.data.seq <= state.lastSeq) return state;
    return { ...state, latest: parsed.data, lastSeq: parsed.data.seq };
  }

  if (type === "event") {
    const parsed = EventFrameSchema.safeParse(data);
    if (!parsed.success) {
      return { ...state, badFrames: state.badFrames + 1 };
    }
    const { kind, t, code, message } = parsed.data;
    let next = pushEvent(state, { kind, t, code, message, at: now });
    if (kind === "fall") {
      next = { ...next, fallFlashUntil: now + FALL_FLASH_MS };
    }
    return next;
  }

  return { ...state, badFrames: state.badFrames + 1 };
}

export function reduce(state: UiState, action: UiAction): UiState {
  switch (action.kind) {
    case "connecting":
      return { ...state, connection: "connecting", attempt: action.attempt };
    case "open":
      // A fresh connection restarts the sequence contract and clears any
      // stale mismatch banner from a previous server.
      return {
        ...state,
        connection: "open",
        mismatchMessage: null,
        attempt: 0,
        lastSeq: -1,
      };
    case "closed":
      if (state.connection === "mismatch") return state;
      return { ...state, connection: "closed" };
    case "message":
      if (state.connection === "mismatch") return state;
      return applyMessage(state, action.data, action.now);
    default:
      return state;
  }
}
