import { describe, expect, it } from "vitest";

import { DEADZONE, MAX_SPEED, stickToLoco, stickVelocity } from "../src/joystick.js";
import { validateOutbound } from "../src/protocol.js";

describe("stickVelocity", () => {
  it("centered stick commands zero velocity", () => {
    expect(stickVelocity(0, 0)).toEqual([0, 0]);
  });

  it("full forward commands max forward speed", () => {
    const [vx, vy] = stickVelocity(0, 1);
    expect(vx).toBeCloseTo(MAX_SPEED, 12);
    expect(vy).toBeCloseTo(0, 12);
  });

  it("full right deflection strafes to the robot's right", () => {
    const [vx, vy] = stickVelocity(1, 0);
    expect(vx).toBeCloseTo(0, 12);
    expect(vy).toBeCloseTo(-MAX_SPEED, 12);
  });

  it("is dead inside the deadzone and eases out just past it", () => {
    expect(stickVelocity(0, DEADZONE * 0.99)).toEqual([0, 0]);
    const [vx] = stickVelocity(0, DEADZONE + 0.001);
    expect(vx).toBeGreaterThan(0);
    expect(vx).toBeLessThan(0.01);
  });

  it("clamps diagonal deflection to the unit circle", () => {
    const [vx, vy] = stickVelocity(1, 1);
    expect(Math.hypot(vx, vy)).toBeLessThanOrEqual(MAX_SPEED + 1e-12);
  });

  it("emits no negative zeros", () => {
    const [vx, vy] = stickVelocity(0, 0.01);
    expect(Object.is(vx, -0)).toBe(false);
    expect(Object.is(vy, -0)).toBe(false);
  });
});

describe("stickToLoco", () => {
  it("builds a schema-valid command from stick state", () => {
    const msg = stickToLoco({ x: 0.3, y: 0.9, w: 0.2, height: 0.8 });
    const parsed = validateOutbound(msg);
    expect(parsed.type).toBe("set_loco");
  });

  it("applies the deadzone to the turn channel too", () => {
    const still = stickToLoco({ x: 0, y: 0, w: DEADZONE / 2 });
    expect(still).toMatchObject({ loco: { v: [0, 0], w: 0 } });
    const turning = stickToLoco({ x: 0, y: 0, w: 0.5 });
    expect(turning).toMatchObject({ loco: { w: 0.5 } });
  });
});
