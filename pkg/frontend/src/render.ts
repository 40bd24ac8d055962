/** CPU twin of the splat render pipeline, f32-disciplined.
 *
 * Implements the published numeric contracts (docs/CONVENTIONS.md and
 * LAYOUTS.md): pinned projection chain, closed-form 2x2 eigensystem with
 * both tie-breaks, binary16 round-trip of the stored quad axes, stable
 * far-to-near ordering by inverted depth keys, and f32 over-blending into
 * a bottom-up RGBA target. Runs one splat at a time on the CPU; it is the
 * viewer's renderer and the thing the golden-fixture parity test grades.
 */

import { Camera, cameraEye, focal } from "./camera.js";
import { depthKey, f16RoundTrip, fr, quantizeByte } from "./numeric.js";
import { Scene, shCoeffCount } from "./scene.js";
import { evalShF32 } from "./sh.js";

export const DILATION = fr(0.3); // pixel^2, screen-covariance diagonal
export const ALPHA_FLOOR = fr(1 / 255);
export const R_MAX = fr(Math.sqrt(fr(Math.log(255))));

export interface RenderOptions {
  background?: [number, number, number, number];
  noCull?: boolean;
  noRadius?: boolean;
  flipSh?: boolean;
}

export interface FrameResult {
  target: Float32Array; // height*width*4, rows bottom-up
  width: number;
  height: number;
  visibleCount: number;
  fragmentsEvaluated: number;
  preprocessMs: number;
  sortMs: number;
  renderMs: number;
  totalMs: number;
  timestampValid: boolean;
}

interface Record6 {
  cx: number;
  cy: number;
  a1x: number;
  a1y: number;
  a2x: number;
  a2y: number;
  r: number;
  g: number;
  b: number;
  alphaByte: number;
  key: number;
  slot: number;
}

interface FrameUniforms {
  w: Float32Array; // 9, row-major diag(1,1,-1) @ view rotation
  t: Float32Array; // 3
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
  near: number;
  eye: [number, number, number];
}

function frameUniforms(cam: Camera): FrameUniforms {
  const v = cam.view;
  const w = new Float32Array(9);
  const t = new Float32Array(3);
  for (let c = 0; c < 3; c++) {
    w[c] = v[c];
    w[3 + c] = v[4 + c];
    w[6 + c] = -v[8 + c];
  }
  t[0] = v[3];
  t[1] = v[7];
  t[2] = -v[11];
  const [fx, fy] = focal(cam);
  return {
    w, t,
    fx: fr(fx), fy: fr(fy),
    cx: fr(fr(cam.width) * 0.5), cy: fr(fr(cam.height) * 0.5),
    width: fr(cam.width), height: fr(cam.height),
    near: fr(cam.near),
    eye: cameraEye(cam),
  };
}

/** Cull + project + shade one scene; survivors in input order. */
function preprocess(scene: Scene, u: FrameUniforms,
  opts: RenderOptions): Record6[] {
  const out: Record6[] = [];
  const coeffs = shCoeffCount(scene.shDegree) * 3;
  const w = u.w;
  const sigFloor = fr(1 / 255);

  for (let i = 0; i < scene.count; i++) {
    const px = scene.positions[i * 3];
    const py = scene.positions[i * 3 + 1];
    const pz = scene.positions[i * 3 + 2];
    const x = fr(fr(fr(fr(w[0] * px) + fr(w[1] * py)) + fr(w[2] * pz)) + u.t[0]);
    const y = fr(fr(fr(fr(w[3] * px) + fr(w[4] * py)) + fr(w[5] * pz)) + u.t[1]);
    const z = fr(fr(fr(fr(w[6] * px) + fr(w[7] * py)) + fr(w[8] * pz)) + u.t[2]);

    const frustumOk = z > u.near;
    const sigma = scene.opacities[i];
    const sigmaOk = sigma >= sigFloor;
    if (!frustumOk || !sigmaOk) continue;
    const byte = Math.min(Math.floor(fr(fr(sigma * 255) + 0.5)), 255);

    const qw = scene.rotations[i * 4];
    const qx = scene.rotations[i * 4 + 1];
    const qy = scene.rotations[i * 4 + 2];
    const qz = scene.rotations[i * 4 + 3];
    const r00 = fr(1 - fr(2 * fr(fr(qy * qy) + fr(qz * qz))));
    const r01 = fr(2 * fr(fr(qx * qy) - fr(qw * qz)));
    const r02 = fr(2 * fr(fr(qx * qz) + fr(qw * qy)));
    const r10 = fr(2 * fr(fr(qx * qy) + fr(qw * qz)));
    const r11 = fr(1 - fr(2 * fr(fr(qx * qx) + fr(qz * qz))));
    const r12 = fr(2 * fr(fr(qy * qz) - fr(qw * qx)));
    const r20 = fr(2 * fr(fr(qx * qz) - fr(qw * qy)));
    const r21 = fr(2 * fr(fr(qy * qz) + fr(qw * qx)));
    const r22 = fr(1 - fr(2 * fr(fr(qx * qx) + fr(qy * qy))));
    const sx = scene.scales[i * 3];
    const sy = scene.scales[i * 3 + 1];
    const sz = scene.scales[i * 3 + 2];
    const m = [
      [fr(r00 * sx), fr(r01 * sy), fr(r02 * sz)],
      [fr(r10 * sx), fr(r11 * sy), fr(r12 * sz)],
      [fr(r20 * sx), fr(r21 * sy), fr(r22 * sz)],
    ];
    const cov = [[0, 0, 0], [0, 0, 0], [0, 0, 0]];
    for (let a = 0; a < 3; a++) {
      for (let b = a; b < 3; b++) {
        const cab = fr(fr(fr(m[a][0] * m[b][0]) + fr(m[a][1] * m[b][1]))
          + fr(m[a][2] * m[b][2]));
        cov[a][b] = cab;
        cov[b][a] = cab;
      }
    }
    const aRow = [[0, 0, 0], [0, 0, 0], [0, 0, 0]];
    for (let a = 0; a < 3; a++) {
      for (let b = 0; b < 3; b++) {
        aRow[a][b] = fr(fr(fr(w[a * 3] * cov[0][b]) + fr(w[a * 3 + 1] * cov[1][b]))
          + fr(w[a * 3 + 2] * cov[2][b]));
      }
    }
    const wr = (r: number, c: number) => w[r * 3 + c];
    const vd = (a: number, b: number) =>
      fr(fr(fr(aRow[a][0] * wr(b, 0)) + fr(aRow[a][1] * wr(b, 1)))
        + fr(aRow[a][2] * wr(b, 2)));
    const v00 = vd(0, 0);
    const v01 = vd(0, 1);
    const v02 = vd(0, 2);
    const v11 = vd(1, 1);
    const v12 = vd(1, 2);
    const v22 = vd(2, 2);

    const iz = fr(1 / z);
    const iz2 = fr(iz * iz);
    const j00 = fr(u.fx * iz);
    const j02 = fr(-fr(u.fx * x) * iz2);
    const j11 = fr(u.fy * iz);
    const j12 = fr(-fr(u.fy * y) * iz2);
    const t00 = fr(fr(j00 * v00) + fr(j02 * v02));
    const t01 = fr(fr(j00 * v01) + fr(j02 * v12));
    const t02 = fr(fr(j00 * v02) + fr(j02 * v22));
    const t11 = fr(fr(j11 * v11) + fr(j12 * v12));
    const t12 = fr(fr(j11 * v12) + fr(j12 * v22));
    const s00 = fr(fr(fr(t00 * j00) + fr(t02 * j02)) + DILATION);
    const s01 = fr(fr(t01 * j11) + fr(t02 * j12));
    const s11 = fr(fr(fr(t11 * j11) + fr(t12 * j12)) + DILATION);

    const cxPx = fr(u.cx + fr(u.fx * fr(x * iz)));
    const cyPx = fr(u.cy + fr(u.fy * fr(y * iz)));

    const mid = fr(0.5 * fr(s00 + s11));
    const hd = fr(0.5 * fr(s00 - s11));
    const sq = fr(Math.sqrt(fr(fr(hd * hd) + fr(s01 * s01))));
    const l1 = fr(mid + sq);
    const l2 = Math.max(fr(mid - sq), fr(1e-12));
    const len1 = fr(Math.sqrt(fr(2 * l1)));
    const len2 = fr(Math.sqrt(fr(2 * l2)));
    let ev: number;
    let ey: number;
    if (s01 === 0) {
      ev = s00 >= s11 ? 1 : 0;
      ey = s00 >= s11 ? 0 : 1;
    } else {
      ev = fr(l1 - s11);
      ey = s01;
      const en2 = fr(fr(ev * ev) + fr(ey * ey));
      if (en2 === 0) {
        // underflow for near-diagonal input: same axis-aligned fallback
        ev = s00 >= s11 ? 1 : 0;
        ey = s00 >= s11 ? 0 : 1;
      }
    }
    const en2 = fr(fr(ev * ev) + fr(ey * ey));
    const invN = fr(1 / fr(Math.sqrt(en2 === 0 ? 1 : en2)));
    const a1x = fr(fr(ev * invN) * len1);
    const a1y = fr(fr(ey * invN) * len1);
    const a2x = fr(-fr(ey * invN) * len2);
    const a2y = fr(fr(ev * invN) * len2);

    const radius = opts.noRadius
      ? R_MAX
      : fr(Math.sqrt(fr(Math.log(Math.max(byte, 1)))));
    const ex = fr(Math.abs(a1x) + Math.abs(a2x));
    const eyv = fr(Math.abs(a1y) + Math.abs(a2y));
    const hx = fr(radius * ex);
    const hy = fr(radius * eyv);
    const aabbOk = fr(cxPx + hx) >= 0 && fr(cxPx - hx) <= u.width
      && fr(cyPx + hy) >= 0 && fr(cyPx - hy) <= u.height;
    if (!aabbOk && !opts.noCull) continue;

    // view-dependent color, survivors only
    let dx = fr(px - u.eye[0]);
    let dy = fr(py - u.eye[1]);
    let dz = fr(pz - u.eye[2]);
    const dot = fr(fr(fr(dx * dx) + fr(dy * dy)) + fr(dz * dz));
    const inv = fr(1 / fr(Math.sqrt(Math.max(dot, fr(1e-24)))));
    dx = fr(dx * inv);
    dy = fr(dy * inv);
    dz = fr(dz * inv);
    if (opts.flipSh) {
      dx = -dx;
      dy = -dy;
      dz = -dz;
    }
    const rgb = evalShF32(scene.sh, i * coeffs, scene.shDegree, dx, dy, dz);

    out.push({
      cx: cxPx,
      cy: cyPx,
      a1x: f16RoundTrip(a1x),
      a1y: f16RoundTrip(a1y),
      a2x: f16RoundTrip(a2x),
      a2y: f16RoundTrip(a2y),
      r: quantizeByte(rgb[0]),
      g: quantizeByte(rgb[1]),
      b: quantizeByte(rgb[2]),
      alphaByte: quantizeByte(fr(byte / 255)),
      key: depthKey(z),
      slot: out.length,
    });
  }
  return out;
}

function rasterize(records: Record6[], target: Float32Array, width: number,
  height: number, opts: RenderOptions): number {
  let fragments = 0;
  const bg = opts.background ?? [0, 0, 0, 0];
  for (let p = 0; p < width * height; p++) {
    target[p * 4] = fr(bg[0]);
    target[p * 4 + 1] = fr(bg[1]);
    target[p * 4 + 2] = fr(bg[2]);
    target[p * 4 + 3] = fr(bg[3]);
  }

  for (const rec of records) {
    const radius = opts.noRadius
      ? R_MAX
      : rec.alphaByte > 1 ? fr(Math.sqrt(fr(Math.log(rec.alphaByte)))) : 0;
    if (radius === 0) continue;
    const det = fr(fr(rec.a1x * rec.a2y) - fr(rec.a2x * rec.a1y));
    if (det === 0) continue;
    const extX = fr(radius * fr(Math.abs(rec.a1x) + Math.abs(rec.a2x)));
    const extY = fr(radius * fr(Math.abs(rec.a1y) + Math.abs(rec.a2y)));
    const x0 = Math.max(Math.ceil(fr(rec.cx - extX) - 0.5), 0);
    const x1 = Math.min(Math.floor(fr(rec.cx + extX) - 0.5), width - 1);
    const y0 = Math.max(Math.ceil(fr(rec.cy - extY) - 0.5), 0);
    const y1 = Math.min(Math.floor(fr(rec.cy + extY) - 0.5), height - 1);
    if (x0 > x1 || y0 > y1) continue;

    const invDet = fr(1 / det);
    const sigmaQ = fr(rec.alphaByte / 255);
    const srcR = fr(rec.r / 255);
    const srcG = fr(rec.g / 255);
    const srcB = fr(rec.b / 255);

    for (let yi = y0; yi <= y1; yi++) {
      const dy = fr(fr(yi + 0.5) - rec.cy);
      for (let xi = x0; xi <= x1; xi++) {
        const dx = fr(fr(xi + 0.5) - rec.cx);
        const uu = fr(fr(fr(rec.a2y * dx) - fr(rec.a2x * dy)) * invDet);
        const vv = fr(fr(fr(rec.a1x * dy) - fr(rec.a1y * dx)) * invDet);
        if (Math.abs(uu) > radius || Math.abs(vv) > radius) continue;
        fragments += 1; // counted before the opacity floor, like the kernel
        const alpha = fr(sigmaQ * fr(Math.exp(-fr(fr(uu * uu) + fr(vv * vv)))));
        if (alpha < ALPHA_FLOOR) continue;
        const p = (yi * width + xi) * 4;
        const keep = fr(1 - alpha);
        target[p] = fr(fr(srcR * alpha) + fr(target[p] * keep));
        target[p + 1] = fr(fr(srcG * alpha) + fr(target[p + 1] * keep));
        target[p + 2] = fr(fr(srcB * alpha) + fr(target[p + 2] * keep));
        target[p + 3] = fr(alpha + fr(target[p + 3] * keep));
      }
    }
  }
  return fragments;
}

export function renderFrame(scene: Scene, cam: Camera,
  opts: RenderOptions = {}): FrameResult {
  const t0 = performance.now();
  const u = frameUniforms(cam);
  const records = preprocess(scene, u, opts);
  const t1 = performance.now();
  // stable far-to-near: ascending keys, ties keep compaction-slot order
  records.sort((a, b) => (a.key - b.key) || (a.slot - b.slot));
  const t2 = performance.now();
  const target = new Float32Array(cam.width * cam.height * 4);
  const fragments = rasterize(records, target, cam.width, cam.height, opts);
  const t3 = performance.now();
  return {
    target,
    width: cam.width,
    height: cam.height,
    visibleCount: records.length,
    fragmentsEvaluated: fragments,
    preprocessMs: t1 - t0,
    sortMs: t2 - t1,
    renderMs: t3 - t2,
    totalMs: t3 - t0,
    timestampValid: true,
  };
}

/** Quantize the f32 target to RGBA8 bytes, same row order (bottom-up). */
export function readbackU8(frame: FrameResult): Uint8ClampedArray {
  const out = new Uint8ClampedArray(frame.target.length);
  for (let i = 0; i < frame.target.length; i++) {
    out[i] = quantizeByte(frame.target[i]);
  }
  return out;
}
