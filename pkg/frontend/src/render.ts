/** Canvas drawing for the live session view. */

import { Camera, project } from "./camera.js";
import { StateFrame } from "./protocol.js";
import { UiState } from "./state.js";

// Marker order mirrors the controller's model; frames carry bare coordinates.
export const MARKER_NAMES = [
  "torso",
  "l_elbow",
  "l_hand",
  "r_elbow",
  "r_hand",
  "l_knee",
  "l_foot",
  "r_knee",
  "r_foot",
] as const;

const idx = (name: (typeof MARKER_NAMES)[number]): number =>
  MARKER_NAMES.indexOf(name);

export const SKELETON_EDGES: ReadonlyArray<[number, number]> = [
  [idx("torso"), idx("l_elbow")],
  [idx("l_elbow"), idx("l_hand")],
  [idx("torso"), idx("r_elbow")],
  [idx("r_elbow"), idx("r_hand")],
  [idx("torso"), idx("l_knee")],
  [idx("l_knee"), idx("l_foot")],
  [idx("torso"), idx("r_knee")],
  [idx("r_knee"), idx("r_foot")],
];

const GRID_EXTENT = 3;
const GRID_STEP = 0.5;

function drawGrid(
  ctx: CanvasRenderingContext2D,
  camera: Camera,
  width: number,
  height: number,
  center: [number, number],
): void {
  ctx.strokeStyle = "#2a3142";
  ctx.lineWidth = 1;
  const cx = Math.round(center[0] / GRID_STEP) * GRID_STEP;
  const cy = Math.round(center[1] / GRID_STEP) * GRID_STEP;
  for (let i = -GRID_EXTENT; i <= GRID_EXTENT; i += GRID_STEP) {
    const a = project(camera, [cx + i, cy - GRID_EXTENT, 0], width, height);
    const b = project(camera, [cx + i, cy + GRID_EXTENT, 0], width, height);
    const c = project(camera, [cx - GRID_EXTENT, cy + i, 0], width, height);
    const d = project(camera, [cx + GRID_EXTENT, cy + i, 0], width, height);
    if (a.visible && b.visible) {
      ctx.beginPath();
      ctx.moveTo(a.x, a.y);
      ctx.lineTo(b.x, b.y);
      ctx.stroke();
    }
    if (c.visible && d.visible) {
      ctx.beginPath();
      ctx.moveTo(c.x, c.y);
      ctx.lineTo(d.x, d.y);
      ctx.stroke();
    }
  }
}

function drawSkeleton(
  ctx: CanvasRenderingContext2D,
  camera: Camera,
  frame: StateFrame,
  width: number,
  height: number,
): void {
  const markers = frame.markers;
  if (!markers || markers.length < MARKER_NAMES.length) {
    drawPlaceholder(ctx, width, height, "no marker stream");
    return;
  }
  const pts = markers.map((m) =>
    project(camera, [m[0] ?? 0, m[1] ?? 0, m[2] ?? 0], width, height),
  );

  ctx.strokeStyle = "#6ea8fe";
  ctx.lineWidth = 3;
  ctx.lineCap = "round";
  for (const [i, j] of SKELETON_EDGES) {
    const a = pts[i];
    const b = pts[j];
    if (!a || !b || !a.visible || !b.visible) continue;
    ctx.beginPath();
    ctx.moveTo(a.x, a.y);
    ctx.lineTo(b.x, b.y);
    ctx.stroke();
  }

  // base marker under the torso grounds the figure visually
  const base = project(
    camera,
    [frame.base.pos[0] ?? 0, frame.base.pos[1] ?? 0, 0],
    width,
    height,
  );
  if (base.visible) {
    ctx.fillStyle = "#3a4a6b";
    ctx.beginPath();
    ctx.ellipse(base.x, base.y, 14, 5, 0, 0, 2 * Math.PI);
    ctx.fill();
  }

  ctx.fillStyle = "#d7e3ff";
  for (const p of pts) {
    if (!p.visible) continue;
    ctx.beginPath();
    ctx.arc(p.x, p.y, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawPlaceholder(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  label: string,
): void {
  ctx.fillStyle = "#8892a6";
  ctx.font = "16px system-ui, sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(label, width / 2, height / 2);
  ctx.textAlign = "left";
}

function drawBadge(
  ctx: CanvasRenderingContext2D,
  pattern: string,
): void {
  ctx.fillStyle = "#1d2636";
  ctx.fillRect(12, 12, 140, 30);
  ctx.strokeStyle = "#6ea8fe";
  ctx.strokeRect(12.5, 12.5, 139, 29);
  ctx.fillStyle = "#d7e3ff";
  ctx.font = "bold 14px system-ui, sans-serif";
  ctx.fillText(pattern, 24, 32);
}

function drawRewardBars(
  ctx: CanvasRenderingContext2D,
  terms: Record<string, number>,
  height: number,
): void {
  const names = Object.keys(terms).sort();
  const barWidth = 120;
  let y = height - 18 - (names.length - 1) * 22;
  ctx.font = "11px system-ui, sans-serif";
  for (const name of names) {
    const value = Math.max(0, Math.min(1, terms[name] ?? 0));
    ctx.fillStyle = "#1d2636";
    ctx.fillRect(12, y, barWidth, 12);
    ctx.fillStyle = value > 0.5 ? "#58c470" : "#cf8f4a";
    ctx.fillRect(12, y, barWidth * value, 12);
    ctx.fillStyle = "#8892a6";
    ctx.fillText(`${name} ${value.toFixed(2)}`, 12 + barWidth + 8, y + 10);
    y += 22;
  }
}

export function renderScene(
  ctx: CanvasRenderingContext2D,
  camera: Camera,
  ui: UiState,
  width: number,
  height: number,
  now: number,
): void {
  ctx.fillStyle = "#121825";
  ctx.fillRect(0, 0, width, height);

  const frame = ui.latest;
  if (frame) {
    const tracking: Camera = {
      ...camera,
      target: [frame.base.pos[0] ?? 0, frame.base.pos[1] ?? 0, camera.target[2]],
    };
    drawGrid(ctx, tracking, width, height, [
      tracking.target[0],
      tracking.target[1],
    ]);
    drawSkeleton(ctx, tracking, frame, width, height);
    drawBadge(ctx, frame.directive_pattern);
    drawRewardBars(ctx, frame.reward_terms, height);
  } else {
    drawGrid(ctx, camera, width, height, [0, 0]);
    const label =
      ui.connection === "open" ? "waiting for state" : "not connected";
    drawPlaceholder(ctx, width, height, label);
  }

  if (ui.fallFlashUntil > now) {
    const alpha = 0.35 * (ui.fallFlashUntil - now) / 800;
    ctx.fillStyle = `rgba(200, 60, 60, ${alpha.toFixed(3)})`;
    ctx.fillRect(0, 0, width, height);
  }

  if (ui.connection === "mismatch") {
    ctx.fillStyle = "rgba(18, 24, 37, 0.92)";
    ctx.fillRect(0, height / 2 - 40, width, 80);
    ctx.fillStyle = "#e8b4b4";
    ctx.font = "bold 15px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("protocol version mismatch", width / 2, height / 2 - 8);
    ctx.font = "13px system-ui, sans-serif";
    ctx.fillText(ui.mismatchMessage ?? "", width / 2, height / 2 + 14);
    ctx.textAlign = "left";
  }
}
