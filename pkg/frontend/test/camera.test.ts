import { describe, expect, it } from "vitest";

import { Camera, defaultCamera, orbit, project, zoom } from "../src/camera.js";

const cam: Camera = {
  target: [0, 0, 1],
  distance: 4,
  azimuth: 0,
  elevation: 0,
  fov: Math.PI / 2,
};

describe("project", () => {
  it("puts the target at the canvas center", () => {
    const p = project(cam, [0, 0, 1], 640, 480);
    expect(p.visible).toBe(true);
    expect(p.x).toBeCloseTo(320, 9);
    expect(p.y).toBeCloseTo(240, 9);
    expect(p.depth).toBeCloseTo(4, 9);
  });

  it("maps world up to screen up and keeps the basis right-handed", () => {
    const above = project(cam, [0, 0, 2], 640, 480);
    expect(above.y).toBeLessThan(240);
    // eye sits on +x looking back at the target, so world +y is screen-right
    const right = project(cam, [0, 1, 1], 640, 480);
    expect(right.x).toBeGreaterThan(320);
  });

  it("culls points behind the eye", () => {
    const behind = project(cam, [10, 0, 1], 640, 480);
    expect(behind.visible).toBe(false);
  });

  it("shrinks with distance from the eye", () => {
    const near = project(cam, [-1, 0.5, 1], 640, 480);
    const far = project(cam, [-3, 0.5, 1], 640, 480);
    expect(Math.abs(near.x - 320)).toBeGreaterThan(Math.abs(far.x - 320));
  });
});

describe("orbit and zoom", () => {
  it("clamps elevation short of the poles", () => {
    let c = defaultCamera();
    for (let i = 0; i < 100; i++) c = orbit(c, 0.3, 0.3);
    expect(c.elevation).toBeLessThan(Math.PI / 2);
    for (let i = 0; i < 200; i++) c = orbit(c, 0, -0.3);
    expect(c.elevation).toBeGreaterThan(-Math.PI / 2);
  });

  it("clamps zoom to a usable range", () => {
    let c = defaultCamera();
    for (let i = 0; i < 50; i++) c = zoom(c, 0.5);
    expect(c.distance).toBeGreaterThanOrEqual(0.5);
    for (let i = 0; i < 50; i++) c = zoom(c, 2);
    expect(c.distance).toBeLessThanOrEqual(12);
  });
});
