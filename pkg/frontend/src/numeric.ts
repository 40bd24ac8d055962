/** Float32 discipline and binary16 round-trips.
 *
 * JavaScript numbers are doubles; Math.fround after every operation gives
 * IEEE binary32 arithmetic (add/sub/mul/div/sqrt round correctly through
 * the double intermediate). Transcendentals (exp, log) are evaluated in
 * double and rounded once, which stays within an ulp of any f32 libm; the
 * numeric contracts absorb that (image tolerance is one quantization step
 * per channel). The half conversions implement round-to-nearest-even by
 * hand because this runtime has no Float16Array.
 */

export const fr = Math.fround;

const F32 = new Float32Array(1);
const U32 = new Uint32Array(F32.buffer);

/** Bit pattern of the f32 nearest to x, as an unsigned 32-bit integer. */
export function f32Bits(x: number): number {
  F32[0] = x;
  return U32[0];
}

export function bitsF32(bits: number): number {
  U32[0] = bits >>> 0;
  return F32[0];
}

/** Largest finite binary16 magnitude; axes clamp here before packing. */
export const HALF_MAX = 65504;

/** f32 -> binary16 bit pattern, round-to-nearest-even, subnormals exact. */
export function f16Bits(x: number): number {
  F32[0] = x;
  const b = U32[0];
  const sign = (b >>> 16) & 0x8000;
  const e = (b >>> 23) & 0xff;
  let m = b & 0x7fffff;
  if (e === 0xff) return sign | 0x7c00 | (m ? 0x200 : 0);
  const ne = e - 112; // rebiased exponent
  if (ne >= 0x1f) return sign | 0x7c00;
  if (ne <= 0) {
    // magnitude below the smallest normal half: shift into subnormal range
    if (ne < -10) return sign; // rounds to zero even at the halfway point
    m |= 0x800000;
    const shift = 14 - ne;
    const half = m >>> shift;
    const rem = m & ((1 << shift) - 1);
    const tie = 1 << (shift - 1);
    let r = half;
    if (rem > tie || (rem === tie && (half & 1))) r += 1;
    return sign | r; // a carry walks into the exponent field correctly
  }
  let r = m >>> 13;
  const rem = m & 0x1fff;
  let oe = ne;
  if (rem > 0x1000 || (rem === 0x1000 && (r & 1))) {
    r += 1;
    if (r === 0x400) {
      r = 0;
      oe += 1;
      if (oe >= 0x1f) return sign | 0x7c00;
    }
  }
  return sign | (oe << 10) | r;
}

export function halfToF32(h: number): number {
  const sign = (h & 0x8000) << 16;
  const e = (h >>> 10) & 0x1f;
  const m = h & 0x3ff;
  let bits: number;
  if (e === 0) {
    if (m === 0) {
      bits = sign;
    } else {
      let mm = m;
      let oe = 113;
      while ((mm & 0x400) === 0) {
        mm <<= 1;
        oe -= 1;
      }
      bits = sign | (oe << 23) | ((mm & 0x3ff) << 13);
    }
  } else if (e === 0x1f) {
    bits = sign | 0x7f800000 | (m << 13);
  } else {
    bits = sign | ((e + 112) << 23) | (m << 13);
  }
  U32[0] = bits >>> 0;
  return F32[0];
}

/** The renderer's record packing: clamp to +-HALF_MAX, then f16 rounding. */
export function f16RoundTrip(x: number): number {
  const c = Math.min(Math.max(fr(x), -HALF_MAX), HALF_MAX);
  return halfToF32(f16Bits(c));
}

/** floor(clamp(c, 0, 1) * 255 + 0.5), f32 steps; the shared 8-bit rule. */
export function quantizeByte(c: number): number {
  const v = Math.min(Math.max(fr(c), 0), 1);
  return Math.floor(fr(fr(v * 255) + 0.5));
}

/** Depth-sort key of a view-space f32 depth: ascending = far to near. */
export function depthKey(z: number): number {
  const b = f32Bits(z);
  const monotone = (b & 0x80000000) === 0 ? b ^ 0x80000000 : ~b;
  return ~monotone >>> 0;
}
