/**
 * Stick-to-command mapping.
 *
 * The stick reports (x, y) in [-1, 1] with y pointing forward and x to the
 * operator's right.  The robot's planar frame has +vx forward and +vy to
 * its left, hence the sign flip on x.
 */

import { ClientMessage, setLoco } from "./protocol.js";

export const DEADZONE = 0.05;
export const MAX_SPEED = 1.0;

export interface LocoInput {
  x: number;
  y: number;
  w: number;
  height?: number;
}

export function stickVelocity(x: number, y: number): [number, number] {
  const raw = Math.hypot(x, y);
  if (raw < DEADZONE) return [0, 0];
  // speed saturates at the circle edge; direction keeps the raw heading
  const mag = Math.min(1, raw);
  const speed = (MAX_SPEED * (mag - DEADZONE)) / (1 - DEADZONE);
  // `+ 0` folds -0 into +0 so serialized commands are stable
  return [(y / raw) * speed + 0, (-x / raw) * speed + 0];
}

export function stickToLoco(input: LocoInput): ClientMessage {
  const v = stickVelocity(input.x, input.y);
  const w = Math.abs(input.w) < DEADZONE ? 0 : input.w;
  return setLoco(v, w, input.height);
}
