/** Browser shell: canvas presentation, input wiring, HUD, scene loading.
 *
 * Everything testable lives in the sibling modules; this file only glues
 * them to the DOM. Frames render on demand — the rAF loop watches the state
 * revision and goes idle when nothing changed.
 */

import { cameraFromPose, Pose, poseFromJson } from "./camera.js";
import { hudModel, newStageWindows, pushFrame, StageWindows } from "./hud.js";
import { FrameResult, readbackU8, renderFrame } from "./render.js";
import { parsePly, PlyError, Scene } from "./scene.js";
import {
  applyDrag, applyKeys, applyPan, applyWheel, cameraFromState, defaultState,
  setAblation, stateFromFragment, stateToFragment, toggleMode, ViewerState,
} from "./state.js";

const LARGE_FILE_BYTES = 64 * 1024 * 1024; // warn before parsing beyond this

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d");
const hudEl = document.getElementById("hud") as HTMLDivElement;
const bannerEl = document.getElementById("banner") as HTMLDivElement;
const helpEl = document.getElementById("help") as HTMLDivElement;
const noCullEl = document.getElementById("toggle-nocull") as HTMLInputElement;
const noRadiusEl = document.getElementById("toggle-noradius") as HTMLInputElement;

let state: ViewerState = defaultState();
let scene: Scene | null = null;
let sceneBytes = 0;
let windows: StageWindows = newStageWindows();
let lastFrame: FrameResult | null = null;
let renderedRevision = -1;
let fixedPose: Pose | null = null; // set via ?pose=, bypasses the controllers

function banner(kind: "info" | "warn" | "error", text: string): void {
  bannerEl.textContent = text;
  bannerEl.dataset.kind = kind;
  bannerEl.style.display = text ? "block" : "none";
}

function clearBanner(): void {
  banner("info", "");
}

// -- scene loading -----------------------------------------------------------

async function loadSceneBytes(name: string, data: ArrayBuffer): Promise<void> {
  if (data.byteLength > LARGE_FILE_BYTES) {
    banner("warn", `${name} is ${(data.byteLength / (1024 * 1024)).toFixed(0)} MiB; ` +
      `parsing may take a while`);
  } else {
    banner("info", `parsing ${name}...`);
  }
  // Yield so the banner paints before the parse busies the thread.
  await new Promise((r) => setTimeout(r, 0));
  try {
    const parsed = parsePly(data, true);
    scene = parsed;
    sceneBytes = data.byteLength;
    state = { ...state, scene: { name, splatCount: parsed.count, shDegree: parsed.shDegree }, revision: state.revision + 1 };
    windows = newStageWindows();
    if (parsed.dropped > 0) {
      banner("warn", `loaded ${name}: ${parsed.count} splats ` +
        `(${parsed.dropped} rows dropped for non-finite values)`);
    } else {
      clearBanner();
    }
  } catch (err) {
    if (err instanceof PlyError) {
      banner("error", `${name}: ${err.message}`);
    } else {
      banner("error", `${name}: ${String(err)}`);
    }
  }
}

async function loadSceneUrl(url: string): Promise<void> {
  banner("info", `fetching ${url}...`);
  try {
    const resp = await fetch(url);
    if (!resp.ok) {
      banner("error", `fetch ${url}: HTTP ${resp.status}`);
      return;
    }
    await loadSceneBytes(url, await resp.arrayBuffer());
  } catch (err) {
    banner("error", `fetch ${url}: ${String(err)}`);
  }
}

document.addEventListener("dragover", (ev) => ev.preventDefault());
document.addEventListener("drop", (ev) => {
  ev.preventDefault();
  const file = ev.dataTransfer?.files?.[0];
  if (!file) return;
  file.arrayBuffer().then((buf) => loadSceneBytes(file.name, buf));
});

// -- input -------------------------------------------------------------------

const held = new Set<string>();
let dragging: "rotate" | "pan" | null = null;
let lastX = 0;
let lastY = 0;

canvas.addEventListener("pointerdown", (ev) => {
  dragging = ev.button === 2 ? "pan" : "rotate";
  lastX = ev.clientX;
  lastY = ev.clientY;
  canvas.setPointerCapture(ev.pointerId);
});
canvas.addEventListener("pointermove", (ev) => {
  if (!dragging) return;
  const dx = ev.clientX - lastX;
  const dy = ev.clientY - lastY;
  lastX = ev.clientX;
  lastY = ev.clientY;
  state = dragging === "pan" ? applyPan(state, dx, dy) : applyDrag(state, dx, dy);
});
canvas.addEventListener("pointerup", () => {
  dragging = null;
  syncFragment();
});
canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  state = applyWheel(state, Math.sign(ev.deltaY));
  syncFragment();
}, { passive: false });

window.addEventListener("keydown", (ev) => {
  const k = ev.key.toLowerCase();
  if (k === "h") {
    state = { ...state, hudVisible: !state.hudVisible, revision: state.revision + 1 };
  } else if (k === "?" || k === "/") {
    state = { ...state, helpVisible: !state.helpVisible, revision: state.revision + 1 };
  } else if (k === "f") {
    state = toggleMode(state);
    syncFragment();
  } else if ("wasdqe".includes(k)) {
    held.add(k);
  }
});
window.addEventListener("keyup", (ev) => {
  held.delete(ev.key.toLowerCase());
  syncFragment();
});

noCullEl.addEventListener("change", () => {
  state = setAblation(state, "noCull", noCullEl.checked);
  syncFragment();
});
noRadiusEl.addEventListener("change", () => {
  state = setAblation(state, "noRadius", noRadiusEl.checked);
  syncFragment();
});

// -- URL state ---------------------------------------------------------------

function syncFragment(): void {
  if (fixedPose) return;
  const frag = stateToFragment(state);
  history.replaceState(null, "", `#${frag}`);
}

function restoreFromUrl(): void {
  const restored = stateFromFragment(location.hash, state);
  if (restored) state = restored;
}

// -- frame loop --------------------------------------------------------------

let lastTick = performance.now();

function presentFrame(frame: FrameResult): void {
  if (!ctx) return;
  const { width, height } = frame;
  if (canvas.width !== width) canvas.width = width;
  if (canvas.height !== height) canvas.height = height;
  const u8 = readbackU8(frame);
  // Render target rows run bottom-up; the canvas wants top-down.
  const flipped = new Uint8ClampedArray(u8.length);
  const rowBytes = width * 4;
  for (let y = 0; y < height; y++) {
    flipped.set(u8.subarray(y * rowBytes, (y + 1) * rowBytes),
      (height - 1 - y) * rowBytes);
  }
  ctx.putImageData(new ImageData(flipped, width, height), 0, 0);
}

function refreshHud(): void {
  helpEl.style.display = state.helpVisible ? "block" : "none";
  if (!state.hudVisible || !scene) {
    hudEl.style.display = "none";
    return;
  }
  hudEl.style.display = "block";
  const model = hudModel(windows, scene.count, lastFrame, sceneBytes);
  const lines = [model.splatLine, model.visibleLine, model.memoryLine, model.frameLine];
  const parts = lines.map((t) => `<div>${t}</div>`);
  for (const stage of model.stages) {
    const pct = (stage.share * 100).toFixed(0);
    parts.push(`<div class="stage"><span class="bar" style="width:${pct}%"></span>` +
      `${stage.text}</div>`);
  }
  if (model.caveat) {
    parts.push(`<div class="caveat">host totals only - per-stage timers unavailable</div>`);
  }
  parts.push(`<div class="dim">mode ${state.mode} - press ? for help</div>`);
  hudEl.innerHTML = parts.join("");
}

function tick(now: number): void {
  const dt = Math.min((now - lastTick) / 1000, 0.1);
  lastTick = now;
  state = applyKeys(state, held, dt);
  if (scene && state.revision !== renderedRevision) {
    renderedRevision = state.revision;
    const camera = fixedPose
      ? cameraFromPose(fixedPose, canvas.width, canvas.height)
      : cameraFromState(state, canvas.width, canvas.height);
    const frame = renderFrame(scene, camera, {
      noCull: state.noCull,
      noRadius: state.noRadius,
    });
    lastFrame = frame;
    pushFrame(windows, frame);
    presentFrame(frame);
    refreshHud();
  } else {
    refreshHud();
  }
  requestAnimationFrame(tick);
}

// -- boot --------------------------------------------------------------------

restoreFromUrl();
noCullEl.checked = state.noCull;
noRadiusEl.checked = state.noRadius;

const params = new URLSearchParams(location.search);
const plyUrl = params.get("ply");
const poseRaw = params.get("pose");
if (poseRaw) {
  try {
    fixedPose = poseFromJson(JSON.parse(poseRaw));
  } catch (err) {
    banner("error", `bad pose parameter: ${String(err)}`);
  }
}
if (plyUrl) {
  loadSceneUrl(plyUrl);
} else {
  banner("info", "drop a .ply scene here, or pass ?ply=<url>");
}
requestAnimationFrame(tick);
