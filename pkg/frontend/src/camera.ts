/** Orbit camera and perspective projection for the marker view. */

export interface Camera {
  target: [number, number, number];
  distance: number;
  azimuth: number; // radians around +z
  elevation: number; // radians above the horizon
  fov: number;
}

export function defaultCamera(): Camera {
  return {
    target: [0, 0, 0.7],
    distance: 3.0,
    azimuth: Math.PI / 5,
    elevation: Math.PI / 10,
    fov: Math.PI / 4,
  };
}

export function orbit(camera: Camera, dAz: number, dEl: number): Camera {
  const lim = Math.PI / 2 - 0.05;
  return {
    ...camera,
    azimuth: camera.azimuth + dAz,
    elevation: Math.max(-lim, Math.min(lim, camera.elevation + dEl)),
  };
}

export function zoom(camera: Camera, factor: number): Camera {
  return {
    ...camera,
    distance: Math.max(0.5, Math.min(12, camera.distance * factor)),
  };
}

export interface Projected {
  x: number;
  y: number;
  depth: number;
  visible: boolean;
}

/**
 * World (z-up) point to canvas pixels.  The eye orbits the target at
 * `distance`; points at or behind the eye report visible=false so callers
 * can skip segments instead of drawing mirrored geometry.
 */
export function project(
  camera: Camera,
  point: [number, number, number],
  width: number,
  height: number,
): Projected {
  const ca = Math.cos(camera.azimuth);
  const sa = Math.sin(camera.azimuth);
  const ce = Math.cos(camera.elevation);
  const se = Math.sin(camera.elevation);

  // forward points eye -> target; right and up complete the basis
  const f: [number, number, number] = [-ca * ce, -sa * ce, -se];
  const r: [number, number, number] = [-sa, ca, 0];
  const u: [number, number, number] = [-ca * se, -sa * se, ce];

  const d: [number, number, number] = [
    point[0] - camera.target[0],
    point[1] - camera.target[1],
    point[2] - camera.target[2],
  ];
  const dot = (a: [number, number, number], b: [number, number, number]) =>
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2];

  const depth = camera.distance + dot(d, f);
  if (depth <= 0.01) {
    return { x: 0, y: 0, depth, visible: false };
  }
  const scale = height / (2 * Math.tan(camera.fov / 2));
  return {
    x: width / 2 + (dot(d, r) / depth) * scale,
    y: height / 2 - (dot(d, u) / depth) * scale,
    depth,
    visible: true,
  };
}
