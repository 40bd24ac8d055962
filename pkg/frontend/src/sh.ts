/** Real spherical harmonics, bands 0 through 3, f32 arithmetic.
 *
 * Same constants and term order as the renderer's shading kernel
 * (docs/CONVENTIONS.md); every operation rounds to f32 so colors land on
 * the same bytes up to quantization-boundary ulps.
 */

import { fr } from "./numeric.js";

export const SH_C0 = 0.28209479177387814;
export const SH_C1 = 0.48860251190291992;
export const SH_C2 = [1.0925484305920792, -1.0925484305920792,
  0.31539156525252005, -1.0925484305920792, 0.54627421529603959] as const;
export const SH_C3 = [-0.59004358992664352, 2.8906114426405538,
  -0.45704579946446580, 0.37317633259011539, -0.45704579946446580,
  1.4453057213202769, -0.59004358992664352] as const;

const C0 = fr(SH_C0);
const C1 = fr(SH_C1);
const C2 = SH_C2.map(fr);
const C3 = SH_C3.map(fr);

/**
 * One splat's color, f32. coeffs holds (degree+1)^2 rgb triples
 * coefficient-major starting at base; dir is a unit view direction.
 * Returns clamped [0, 1] rgb.
 */
export function evalShF32(coeffs: Float32Array, base: number, degree: number,
  dx: number, dy: number, dz: number): [number, number, number] {
  const out: [number, number, number] = [0, 0, 0];
  for (let ch = 0; ch < 3; ch++) {
    let rgb = fr(C0 * coeffs[base + ch]);
    const c = (i: number) => coeffs[base + i * 3 + ch];
    if (degree >= 1) {
      rgb = fr(rgb - fr(fr(C1 * dy) * c(1)));
      rgb = fr(rgb + fr(fr(C1 * dz) * c(2)));
      rgb = fr(rgb - fr(fr(C1 * dx) * c(3)));
    }
    if (degree >= 2) {
      const xx = fr(dx * dx), yy = fr(dy * dy), zz = fr(dz * dz);
      const xy = fr(dx * dy), yz = fr(dy * dz), xz = fr(dx * dz);
      rgb = fr(rgb + fr(fr(C2[0] * xy) * c(4)));
      rgb = fr(rgb + fr(fr(C2[1] * yz) * c(5)));
      rgb = fr(rgb + fr(fr(C2[2] * fr(fr(fr(2 * zz) - xx) - yy)) * c(6)));
      rgb = fr(rgb + fr(fr(C2[3] * xz) * c(7)));
      rgb = fr(rgb + fr(fr(C2[4] * fr(xx - yy)) * c(8)));
      if (degree >= 3) {
        rgb = fr(rgb + fr(fr(fr(C3[0] * dy) * fr(fr(3 * xx) - yy)) * c(9)));
        rgb = fr(rgb + fr(fr(fr(C3[1] * xy) * dz) * c(10)));
        rgb = fr(rgb + fr(fr(fr(C3[2] * dy) * fr(fr(fr(4 * zz) - xx) - yy)) * c(11)));
        rgb = fr(rgb + fr(fr(fr(C3[3] * dz)
          * fr(fr(fr(2 * zz) - fr(3 * xx)) - fr(3 * yy))) * c(12)));
        rgb = fr(rgb + fr(fr(fr(C3[4] * dx) * fr(fr(fr(4 * zz) - xx) - yy)) * c(13)));
        rgb = fr(rgb + fr(fr(fr(C3[5] * dz) * fr(xx - yy)) * c(14)));
        rgb = fr(rgb + fr(fr(fr(C3[6] * dx) * fr(xx - fr(3 * yy))) * c(15)));
      }
    }
    rgb = fr(rgb + 0.5);
    out[ch] = Math.min(Math.max(rgb, 0), 1);
  }
  return out;
}
