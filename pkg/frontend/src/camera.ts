/** View transforms matching the renderer's camera contract.
 *
 * Right-handed world, camera forward is -z in view space, square pixels.
 * The look-at frame is built in f32 with the documented operation order
 * (docs/CONVENTIONS.md) so poses serialize identically everywhere.
 */

import { fr } from "./numeric.js";

export type V3 = [number, number, number];

export class DegenerateFrame extends Error {}
export class InvalidCamera extends Error {}

export const MIN_FOV_Y = 1e-4; // radians

export interface Camera {
  view: Float32Array; // 16, row-major world -> view
  fovY: number; // radians
  width: number;
  height: number;
  near: number;
  far: number;
}

function dot3(a: V3, b: V3): number {
  return fr(fr(fr(a[0] * b[0]) + fr(a[1] * b[1])) + fr(a[2] * b[2]));
}

function cross32(a: V3, b: V3): V3 {
  return [
    fr(fr(a[1] * b[2]) - fr(a[2] * b[1])),
    fr(fr(a[2] * b[0]) - fr(a[0] * b[2])),
    fr(fr(a[0] * b[1]) - fr(a[1] * b[0])),
  ];
}

function sub3(a: V3, b: V3): V3 {
  return [fr(a[0] - b[0]), fr(a[1] - b[1]), fr(a[2] - b[2])];
}

export function lookAt(position: V3, target: V3, up: V3, fovY: number,
  width: number, height: number, near = 0.1, far = 1000): Camera {
  if (width < 1 || height < 1) throw new InvalidCamera("viewport dims must be >= 1");
  if (!(fovY >= MIN_FOV_Y)) throw new InvalidCamera(`fov_y ${fovY} below ${MIN_FOV_Y}`);
  if (!(near > 0 && near < far)) throw new InvalidCamera("need 0 < near < far");

  const p: V3 = [fr(position[0]), fr(position[1]), fr(position[2])];
  const t: V3 = [fr(target[0]), fr(target[1]), fr(target[2])];
  const u: V3 = [fr(up[0]), fr(up[1]), fr(up[2])];

  const fRaw = sub3(t, p);
  const fn = fr(Math.sqrt(dot3(fRaw, fRaw)));
  if (fn < 1e-12) throw new DegenerateFrame("forward has zero length (position == target?)");
  const forward: V3 = [fr(fRaw[0] / fn), fr(fRaw[1] / fn), fr(fRaw[2] / fn)];

  const rRaw = cross32(forward, u);
  const rn = fr(Math.sqrt(dot3(rRaw, rRaw)));
  if (rn < 1e-6) throw new DegenerateFrame("up is parallel to the view direction");
  const right: V3 = [fr(rRaw[0] / rn), fr(rRaw[1] / rn), fr(rRaw[2] / rn)];
  const trueUp = cross32(right, forward);

  const view = new Float32Array(16);
  view[0] = right[0]; view[1] = right[1]; view[2] = right[2];
  view[3] = fr(-dot3(right, p));
  view[4] = trueUp[0]; view[5] = trueUp[1]; view[6] = trueUp[2];
  view[7] = fr(-dot3(trueUp, p));
  view[8] = -forward[0]; view[9] = -forward[1]; view[10] = -forward[2];
  view[11] = dot3(forward, p);
  view[15] = 1;
  return { view, fovY, width, height, near, far };
}

/** Pixel focal lengths; fy = height / (2 tan(fovY / 2)), fx = fy. */
export function focal(cam: Camera): [number, number] {
  const fy = cam.height / (2 * Math.tan(0.5 * cam.fovY));
  return [fy, fy];
}

/** Camera position in world space: -(R^T t), f32 steps. */
export function cameraEye(cam: Camera): V3 {
  const v = cam.view;
  const out: V3 = [0, 0, 0];
  for (let i = 0; i < 3; i++) {
    // column i of the rotation block dotted with the translation
    const s = fr(fr(fr(v[i] * v[3]) + fr(v[4 + i] * v[7])) + fr(v[8 + i] * v[11]));
    out[i] = fr(-s);
  }
  return out;
}

export interface Pose {
  position: V3;
  target: V3;
  up: V3;
  fovYDeg: number;
}

export function cameraFromPose(pose: Pose, width: number, height: number): Camera {
  return lookAt(pose.position, pose.target, pose.up,
    (pose.fovYDeg * Math.PI) / 180, width, height);
}

/** Parse the single-pose JSON shape used by pose files and fixtures. */
export function poseFromJson(doc: unknown): Pose {
  if (typeof doc !== "object" || doc === null) throw new InvalidCamera("pose must be an object");
  const o = doc as Record<string, unknown>;
  const vec = (name: string): V3 => {
    const v = o[name];
    if (!Array.isArray(v) || v.length !== 3 || !v.every((c) => typeof c === "number")) {
      throw new InvalidCamera(`pose field ${name} must be [x, y, z]`);
    }
    return [v[0], v[1], v[2]];
  };
  const fov = o["fov_y_deg"];
  if (typeof fov !== "number") throw new InvalidCamera("pose needs numeric fov_y_deg");
  return { position: vec("position"), target: vec("target"), up: vec("up"), fovYDeg: fov };
}
