/** Viewer state: camera modes, ablation toggles, URL-fragment poses.
 *
 * Pure data plus reducers; the DOM shell dispatches events into these and
 * re-renders when the revision counter moves. Poses serialize into the
 * URL fragment with full-precision numbers so a restored camera is exactly
 * the one that was shared.
 */

import { Camera, lookAt, V3 } from "./camera.js";

export const PITCH_LIMIT_DEG = 89;
export const WHEEL_FACTOR = 1.1;
export const MIN_DISTANCE = 1e-3;

export interface OrbitParams {
  target: V3;
  distance: number;
  yawDeg: number;
  pitchDeg: number;
}

export interface FlyParams {
  position: V3;
  yawDeg: number;
  pitchDeg: number;
  speed: number; // world units per second
}

export interface SceneMeta {
  name: string;
  splatCount: number;
  shDegree: number;
}

export interface ViewerState {
  mode: "orbit" | "fly";
  orbit: OrbitParams;
  fly: FlyParams;
  fovYDeg: number;
  scene: SceneMeta | null;
  hudVisible: boolean;
  helpVisible: boolean;
  noCull: boolean;
  noRadius: boolean;
  revision: number; // bumped whenever a re-render is needed
}

export function defaultState(): ViewerState {
  return {
    mode: "orbit",
    orbit: { target: [0, 0, 0], distance: 4, yawDeg: 0, pitchDeg: -10 },
    fly: { position: [0, 0.5, 4], yawDeg: 180, pitchDeg: 0, speed: 1.5 },
    fovYDeg: 50,
    scene: null,
    hudVisible: true,
    helpVisible: false,
    noCull: false,
    noRadius: false,
    revision: 0,
  };
}

function clampPitch(deg: number): number {
  return Math.min(Math.max(deg, -PITCH_LIMIT_DEG), PITCH_LIMIT_DEG);
}

function bump(s: ViewerState): ViewerState {
  return { ...s, revision: s.revision + 1 };
}

/** Left-drag: yaw/pitch in both modes; pitch clamps at +-89 degrees. */
export function applyDrag(s: ViewerState, dxPx: number, dyPx: number): ViewerState {
  const scale = 0.25; // degrees per pixel
  if (s.mode === "orbit") {
    return bump({
      ...s,
      orbit: {
        ...s.orbit,
        yawDeg: s.orbit.yawDeg + dxPx * scale,
        pitchDeg: clampPitch(s.orbit.pitchDeg - dyPx * scale),
      },
    });
  }
  return bump({
    ...s,
    fly: {
      ...s.fly,
      yawDeg: s.fly.yawDeg + dxPx * scale,
      pitchDeg: clampPitch(s.fly.pitchDeg - dyPx * scale),
    },
  });
}

/** Wheel: one notch scales orbit distance by WHEEL_FACTOR (exponential). */
export function applyWheel(s: ViewerState, notches: number): ViewerState {
  if (s.mode !== "orbit") {
    return bump({
      ...s,
      fly: { ...s.fly, speed: Math.max(s.fly.speed * Math.pow(WHEEL_FACTOR, -notches), 0.01) },
    });
  }
  const d = Math.max(s.orbit.distance * Math.pow(WHEEL_FACTOR, notches), MIN_DISTANCE);
  return bump({ ...s, orbit: { ...s.orbit, distance: d } });
}

/** Right-drag: pan the orbit target in the camera's screen plane. */
export function applyPan(s: ViewerState, dxPx: number, dyPx: number): ViewerState {
  if (s.mode !== "orbit") return s;
  const per = (s.orbit.distance * 1.5) / 500; // world units per pixel
  const yaw = (s.orbit.yawDeg * Math.PI) / 180;
  const rightX = Math.cos(yaw);
  const rightZ = -Math.sin(yaw);
  const t = s.orbit.target;
  return bump({
    ...s,
    orbit: {
      ...s.orbit,
      target: [
        t[0] - dxPx * per * rightX,
        t[1] + dyPx * per,
        t[2] - dxPx * per * rightZ,
      ],
    },
  });
}

/** Fly-mode WASD + QE integration over dtSec. */
export function applyKeys(s: ViewerState, held: ReadonlySet<string>,
  dtSec: number): ViewerState {
  if (s.mode !== "fly" || held.size === 0) return s;
  const yaw = (s.fly.yawDeg * Math.PI) / 180;
  const pitch = (s.fly.pitchDeg * Math.PI) / 180;
  const fwd: V3 = [
    Math.sin(yaw) * Math.cos(pitch),
    Math.sin(pitch),
    -Math.cos(yaw) * Math.cos(pitch),
  ];
  const right: V3 = [Math.cos(yaw), 0, Math.sin(yaw)];
  let mx = 0;
  let my = 0;
  let mz = 0;
  const step = s.fly.speed * dtSec;
  const add = (v: V3, k: number) => {
    mx += v[0] * k;
    my += v[1] * k;
    mz += v[2] * k;
  };
  if (held.has("w")) add(fwd, step);
  if (held.has("s")) add(fwd, -step);
  if (held.has("d")) add(right, step);
  if (held.has("a")) add(right, -step);
  if (held.has("e")) my += step;
  if (held.has("q")) my -= step;
  if (mx === 0 && my === 0 && mz === 0) return s;
  const p = s.fly.position;
  return bump({
    ...s,
    fly: { ...s.fly, position: [p[0] + mx, p[1] + my, p[2] + mz] },
  });
}

export function toggleMode(s: ViewerState): ViewerState {
  return bump({ ...s, mode: s.mode === "orbit" ? "fly" : "orbit" });
}

export function setAblation(s: ViewerState, which: "noCull" | "noRadius",
  value: boolean): ViewerState {
  return bump({ ...s, [which]: value });
}

/** The per-frame camera; orbit and fly both go through lookAt. */
export function cameraFromState(s: ViewerState, width: number,
  height: number): Camera {
  const fovY = (s.fovYDeg * Math.PI) / 180;
  if (s.mode === "orbit") {
    const yaw = (s.orbit.yawDeg * Math.PI) / 180;
    const pitch = (s.orbit.pitchDeg * Math.PI) / 180;
    const t = s.orbit.target;
    const d = s.orbit.distance;
    const eye: V3 = [
      t[0] + d * Math.cos(pitch) * Math.sin(yaw),
      t[1] + d * Math.sin(pitch),
      t[2] + d * Math.cos(pitch) * Math.cos(yaw),
    ];
    return lookAt(eye, t, [0, 1, 0], fovY, width, height);
  }
  const yaw = (s.fly.yawDeg * Math.PI) / 180;
  const pitch = (s.fly.pitchDeg * Math.PI) / 180;
  const p = s.fly.position;
  const ahead: V3 = [
    p[0] + Math.sin(yaw) * Math.cos(pitch),
    p[1] + Math.sin(pitch),
    p[2] - Math.cos(yaw) * Math.cos(pitch),
  ];
  return lookAt(p, ahead, [0, 1, 0], fovY, width, height);
}

// -- URL fragment ------------------------------------------------------------

const num = (x: number) => String(x); // shortest exact round-trip in JS

/** Serialize the pose + ablations; '#' not included. */
export function stateToFragment(s: ViewerState): string {
  const parts: string[] = [`mode=${s.mode}`, `fov=${num(s.fovYDeg)}`];
  if (s.mode === "orbit") {
    const o = s.orbit;
    parts.push(`target=${o.target.map(num).join(",")}`);
    parts.push(`dist=${num(o.distance)}`);
    parts.push(`yaw=${num(o.yawDeg)}`, `pitch=${num(o.pitchDeg)}`);
  } else {
    const f = s.fly;
    parts.push(`pos=${f.position.map(num).join(",")}`);
    parts.push(`yaw=${num(f.yawDeg)}`, `pitch=${num(f.pitchDeg)}`);
    parts.push(`speed=${num(f.speed)}`);
  }
  if (s.noCull) parts.push("nocull=1");
  if (s.noRadius) parts.push("noradius=1");
  return parts.join("&");
}

/** Restore a serialized pose onto `base`; null when the fragment is foreign. */
export function stateFromFragment(fragment: string,
  base: ViewerState): ViewerState | null {
  const text = fragment.startsWith("#") ? fragment.slice(1) : fragment;
  if (text.length === 0) return null;
  const kv = new Map<string, string>();
  for (const part of text.split("&")) {
    const eq = part.indexOf("=");
    if (eq <= 0) return null;
    kv.set(part.slice(0, eq), part.slice(eq + 1));
  }
  const mode = kv.get("mode");
  if (mode !== "orbit" && mode !== "fly") return null;
  const f = (key: string): number | null => {
    const raw = kv.get(key);
    if (raw === undefined) return null;
    const v = Number(raw);
    return Number.isFinite(v) ? v : null;
  };
  const vec = (key: string): V3 | null => {
    const raw = kv.get(key);
    if (raw === undefined) return null;
    const parts = raw.split(",").map(Number);
    if (parts.length !== 3 || !parts.every(Number.isFinite)) return null;
    return [parts[0], parts[1], parts[2]];
  };
  const fov = f("fov");
  if (fov === null || fov <= 0 || fov >= 180) return null;
  const out: ViewerState = { ...base, mode, fovYDeg: fov };
  if (mode === "orbit") {
    const target = vec("target");
    const dist = f("dist");
    const yaw = f("yaw");
    const pitch = f("pitch");
    if (!target || dist === null || dist <= 0 || yaw === null || pitch === null) return null;
    out.orbit = { target, distance: dist, yawDeg: yaw, pitchDeg: clampPitch(pitch) };
  } else {
    const pos = vec("pos");
    const yaw = f("yaw");
    const pitch = f("pitch");
    const speed = f("speed");
    if (!pos || yaw === null || pitch === null || speed === null || speed <= 0) return null;
    out.fly = { position: pos, yawDeg: yaw, pitchDeg: clampPitch(pitch), speed };
  }
  out.noCull = kv.get("nocull") === "1";
  out.noRadius = kv.get("noradius") === "1";
  return bump(out);
}
