/** Browser entry point: wires widgets, socket, reducer, and renderer. */

import { defaultCamera, orbit, zoom } from "./camera.js";
import { stickToLoco } from "./joystick.js";
import { perturb, reset, setUpperPreset, pause } from "./protocol.js";
import { renderScene } from "./render.js";
import { SessionSocket } from "./net.js";
import { initialState, reduce, UiAction, UiState } from "./state.js";

const PRESETS = [
  "wave",
  "clap",
  "stretch",
  "circles",
  "punch_l",
  "punch_r",
  "reach_l",
  "reach_r",
];

function serverUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("server") ?? "ws://127.0.0.1:8765/session";
}

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function main(): void {
  const canvas = byId<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas unavailable");

  let ui: UiState = initialState();
  let camera = defaultCamera();

  const statusEl = byId<HTMLSpanElement>("status");
  const eventsEl = byId<HTMLPreElement>("events");
  const pauseBtn = byId<HTMLButtonElement>("pause");

  const dispatch = (action: UiAction): void => {
    ui = reduce(ui, action);
    if (ui.connection === "mismatch") socket.stop();
  };

  const socket = new SessionSocket(serverUrl(), dispatch);
  socket.connect();

  // --- steering inputs -----------------------------------------------------

  const stick = { x: 0, y: 0 };
  const turnEl = byId<HTMLInputElement>("turn");
  const heightEl = byId<HTMLInputElement>("height");

  const sendLoco = (): void => {
    socket.send(
      stickToLoco({
        x: stick.x,
        y: stick.y,
        w: parseFloat(turnEl.value),
        height: parseFloat(heightEl.value),
      }),
    );
  };

  const pad = byId<HTMLDivElement>("stick-pad");
  const knob = byId<HTMLDivElement>("stick-knob");
  let padPointer: number | null = null;

  const updateStick = (ev: PointerEvent): void => {
    const rect = pad.getBoundingClientRect();
    const half = rect.width / 2;
    const rx = (ev.clientX - rect.left - half) / half;
    const ry = (ev.clientY - rect.top - half) / half;
    const mag = Math.hypot(rx, ry);
    const scale = mag > 1 ? 1 / mag : 1;
    stick.x = rx * scale;
    stick.y = -ry * scale; // screen y grows downward, stick y means forward
    knob.style.left = `${50 + stick.x * 42}%`;
    knob.style.top = `${50 - stick.y * 42}%`;
    sendLoco();
  };

  pad.addEventListener("pointerdown", (ev) => {
    padPointer = ev.pointerId;
    pad.setPointerCapture(ev.pointerId);
    updateStick(ev);
  });
  pad.addEventListener("pointermove", (ev) => {
    if (ev.pointerId === padPointer) updateStick(ev);
  });
  const releaseStick = (ev: PointerEvent): void => {
    if (ev.pointerId !== padPointer) return;
    padPointer = null;
    stick.x = 0;
    stick.y = 0;
    knob.style.left = "50%";
    knob.style.top = "50%";
    sendLoco();
  };
  pad.addEventListener("pointerup", releaseStick);
  pad.addEventListener("pointercancel", releaseStick);

  turnEl.addEventListener("input", sendLoco);
  heightEl.addEventListener("input", sendLoco);
  byId<HTMLButtonElement>("turn-zero").addEventListener("click", () => {
    turnEl.value = "0";
    sendLoco();
  });

  // --- discrete commands ---------------------------------------------------

  const presetsEl = byId<HTMLDivElement>("presets");
  for (const name of PRESETS) {
    const btn = document.createElement("button");
    btn.textContent = name;
    btn.addEventListener("click", () => socket.send(setUpperPreset(name)));
    presetsEl.appendChild(btn);
  }
  byId<HTMLButtonElement>("preset-clear").addEventListener("click", () =>
    socket.send(setUpperPreset(null)),
  );

  byId<HTMLButtonElement>("shove").addEventListener("click", () => {
    const angle = Math.random() * 2 * Math.PI;
    socket.send(
      perturb([150 * Math.cos(angle), 150 * Math.sin(angle), 0], 10),
    );
  });

  let paused = false;
  pauseBtn.addEventListener("click", () => {
    paused = !paused;
    pauseBtn.textContent = paused ? "resume" : "pause";
    socket.send(pause(paused));
  });
  byId<HTMLButtonElement>("reset").addEventListener("click", () => {
    paused = false;
    pauseBtn.textContent = "pause";
    socket.send(reset());
  });

  // --- camera --------------------------------------------------------------

  let dragPointer: number | null = null;
  let dragLast: [number, number] = [0, 0];
  canvas.addEventListener("pointerdown", (ev) => {
    dragPointer = ev.pointerId;
    dragLast = [ev.clientX, ev.clientY];
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (ev.pointerId !== dragPointer) return;
    camera = orbit(
      camera,
      (ev.clientX - dragLast[0]) * -0.008,
      (ev.clientY - dragLast[1]) * 0.008,
    );
    dragLast = [ev.clientX, ev.clientY];
  });
  canvas.addEventListener("pointerup", () => (dragPointer = null));
  canvas.addEventListener(
    "wheel",
    (ev) => {
      ev.preventDefault();
      camera = zoom(camera, ev.deltaY > 0 ? 1.1 : 1 / 1.1);
    },
    { passive: false },
  );

  // --- render loop ---------------------------------------------------------

  const tick = (): void => {
    const dpr = window.devicePixelRatio || 1;
    const w = canvas.clientWidth;
    const h = canvas.clientHeight;
    if (canvas.width !== w * dpr || canvas.height !== h * dpr) {
      canvas.width = w * dpr;
      canvas.height = h * dpr;
    }
    ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
    renderScene(ctx, camera, ui, w, h, performance.now());

    const frame = ui.latest;
    statusEl.textContent =
      ui.connection === "open" && frame
        ? `open | t=${frame.t.toFixed(2)}s seq=${frame.seq}`
        : ui.connection === "connecting"
          ? `connecting (attempt ${ui.attempt})`
          : ui.connection;
    statusEl.dataset["state"] = ui.connection;

    eventsEl.textContent = ui.events
      .slice(-8)
      .map((e) => {
        const at = e.t !== undefined ? `${e.t.toFixed(2)}s` : "";
        const detail = e.message ?? e.code ?? "";
        return `${at} ${e.kind} ${detail}`.trim();
      })
      .join("\n");

    requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);
}

main();
