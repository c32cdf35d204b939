/**
 * Wire schemas for the live session service.
 *
 * Inbound frames are parsed leniently enough to keep the UI alive when a
 * field goes missing (the renderer shows placeholders), but outbound
 * messages are validated strictly before they ever reach the socket.
 */

import { z } from "zod";

export const PROTOCOL_VERSION = 1;

const vec3 = z.array(z.number()).length(3);

export const StateFrameSchema = z
  .object({
    v: z.literal(PROTOCOL_VERSION),
    type: z.literal("state"),
    seq: z.number().int().nonnegative(),
    t: z.number(),
    base: z.object({
      pos: vec3,
      quat: z.array(z.number()).length(4),
    }),
    theta: z.array(z.number()),
    // tolerated when absent so a degraded server can't kill rendering
    markers: z.array(vec3).optional(),
    directive_pattern: z.string(),
    reward_terms: z.record(z.string(), z.number()),
  })
  .passthrough();

export const EventFrameSchema = z
  .object({
    v: z.literal(PROTOCOL_VERSION),
    type: z.literal("event"),
    kind: z.string(),
    t: z.number().optional(),
    code: z.string().optional(),
    message: z.string().optional(),
  })
  .passthrough();

export type StateFrame = z.infer<typeof StateFrameSchema>;
export type EventFrame = z.infer<typeof EventFrameSchema>;

// ---------------------------------------------------------------------------
// Outbound command messages

const LocoFields = z.object({
  v: z.array(z.number()).length(2),
  w: z.number(),
  height: z.number().optional(),
});

export const ClientMessageSchema = z.discriminatedUnion("type", [
  z.object({
    v: z.literal(PROTOCOL_VERSION),
    type: z.literal("set_loco"),
    loco: LocoFields,
  }),
  z.object({
    v: z.literal(PROTOCOL_VERSION),
    type: z.literal("set_upper_preset"),
    preset: z.string().nullable(),
  }),
  z.object({
    v: z.literal(PROTOCOL_VERSION),
    type: z.literal("set_directive"),
    directive: z.object({
      pattern: z.enum(["FULL", "LOCO", "UPPER_STAND", "UPPER_LOCO"]),
      frames: z.array(z.array(z.number())).min(2),
      dt: z.number().positive().optional(),
    }),
  }),
  z.object({
    v: z.literal(PROTOCOL_VERSION),
    type: z.literal("pause"),
    paused: z.boolean(),
  }),
  z.object({ v: z.literal(PROTOCOL_VERSION), type: z.literal("reset") }),
  z.object({
    v: z.literal(PROTOCOL_VERSION),
    type: z.literal("perturb"),
    force: vec3,
    duration: z.number().int().positive(),
  }),
]);

export type ClientMessage = z.infer<typeof ClientMessageSchema>;

export function setLoco(
  v: [number, number],
  w: number,
  height?: number,
): ClientMessage {
  const loco: z.infer<typeof LocoFields> = { v, w };
  if (height !== undefined) loco.height = height;
  return { v: PROTOCOL_VERSION, type: "set_loco", loco };
}

export function setUpperPreset(preset: string | null): ClientMessage {
  return { v: PROTOCOL_VERSION, type: "set_upper_preset", preset };
}

export function pause(paused: boolean): ClientMessage {
  return { v: PROTOCOL_VERSION, type: "pause", paused };
}

export function reset(): ClientMessage {
  return { v: PROTOCOL_VERSION, type: "reset" };
}

export function perturb(
  force: [number, number, number],
  duration: number,
): ClientMessage {
  return { v: PROTOCOL_VERSION, type: "perturb", force, duration };
}

/** Throws if a message would violate the service schema. */
export function validateOutbound(msg: unknown): ClientMessage {
  return ClientMessageSchema.parse(msg);
}
