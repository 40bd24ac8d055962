/** Binary little-endian splat PLY parsing with on-load activations.
 *
 * Mirrors the renderer's scene format contract (docs/FORMATS.md): fixed
 * property schema, sigmoid opacity, exp scale, normalized quaternion, all
 * activation arithmetic in f32. Rejects anything it does not understand
 * loudly; the viewer turns these errors into banners.
 */

import { fr } from "./numeric.js";

export interface Scene {
  count: number;
  shDegree: number;
  positions: Float32Array; // n*3
  rotations: Float32Array; // n*4, unit w,x,y,z
  scales: Float32Array; // n*3, activated
  opacities: Float32Array; // n, activated
  sh: Float32Array; // n*coeffs*3, coefficient-major, band 0 first
  dropped: number; // records removed by skipBad
}

export class PlyError extends Error {}
export class MalformedHeader extends PlyError {}
export class UnsupportedLayout extends PlyError {}
export class TruncatedPayload extends PlyError {}
export class NonFiniteRecord extends PlyError {}
export class DegenerateRotation extends PlyError {}

const PRE_REST = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"];
const POST_REST = ["opacity", "scale_0", "scale_1", "scale_2",
  "rot_0", "rot_1", "rot_2", "rot_3"];
const REST_TO_DEGREE = new Map([[0, 0], [9, 1], [24, 2], [45, 3]]);

export function shCoeffCount(degree: number): number {
  return (degree + 1) * (degree + 1);
}

function expectedProps(degree: number): string[] {
  const k = 3 * (shCoeffCount(degree) - 1);
  const rest: string[] = [];
  for (let i = 0; i < k; i++) rest.push(`f_rest_${i}`);
  return [...PRE_REST, ...rest, ...POST_REST];
}

const TEXT = new TextDecoder("ascii");
const END = "end_header\n";

function findHeaderEnd(bytes: Uint8Array): number {
  // search raw bytes so a binary payload never confuses the scan
  const pat = new TextEncoder().encode(END);
  outer: for (let i = 0; i + pat.length <= bytes.length; i++) {
    for (let j = 0; j < pat.length; j++) {
      if (bytes[i + j] !== pat[j]) continue outer;
    }
    return i;
  }
  return -1;
}

export function parsePly(data: ArrayBuffer | Uint8Array, skipBad = false): Scene {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  const end = findHeaderEnd(bytes);
  const magic = bytes.length >= 4 && TEXT.decode(bytes.subarray(0, 4)) === "ply\n";
  if (!magic || end < 0) {
    throw new MalformedHeader("missing 'ply' magic or end_header");
  }
  const headerLines = TEXT.decode(bytes.subarray(0, end)).split("\n");
  const payload = bytes.subarray(end + END.length);

  const lines = headerLines.slice(1)
    .map((ln) => ln.trim())
    .filter((ln) => ln.length > 0 && !ln.startsWith("comment"));
  if (lines.length === 0 || lines[0] !== "format binary_little_endian 1.0") {
    throw new MalformedHeader("unknown format; need binary_little_endian 1.0");
  }

  let count: number | null = null;
  const props: string[] = [];
  for (const ln of lines.slice(1)) {
    const tok = ln.split(/\s+/);
    if (tok[0] === "element") {
      if (count !== null) {
        throw new UnsupportedLayout(`unexpected second element '${tok[1]}'`);
      }
      if (tok.length !== 3 || tok[1] !== "vertex" || !/^\d+$/.test(tok[2])) {
        throw new MalformedHeader(`bad element line '${ln}'`);
      }
      count = parseInt(tok[2], 10);
    } else if (tok[0] === "property") {
      if (count === null) throw new MalformedHeader("property before element");
      if (tok.length !== 3 || (tok[1] !== "float" && tok[1] !== "float32")) {
        throw new UnsupportedLayout(`unsupported property '${ln}'`);
      }
      props.push(tok[2]);
    } else {
      throw new MalformedHeader(`unexpected header line '${ln}'`);
    }
  }
  if (count === null) throw new MalformedHeader("missing element vertex line");

  const k = props.length - PRE_REST.length - POST_REST.length;
  const degree = REST_TO_DEGREE.get(k);
  const want = degree === undefined ? null : expectedProps(degree);
  if (want === null || props.length !== want.length
    || !props.every((p, i) => p === want[i])) {
    throw new UnsupportedLayout("property schema is not the splat layout");
  }

  const stride = props.length;
  const need = count * stride * 4;
  if (payload.length < need) {
    throw new TruncatedPayload(
      `payload holds ${payload.length} bytes, need ${need} for ${count} records`);
  }
  const view = new DataView(payload.buffer, payload.byteOffset, need);
  const raw = new Float32Array(count * stride);
  for (let i = 0; i < raw.length; i++) raw[i] = view.getFloat32(i * 4, true);
  return activate(raw, count, stride, degree!, skipBad);
}

function activate(raw: Float32Array, count: number, stride: number,
  degree: number, skipBad: boolean): Scene {
  const keepRows: number[] = [];
  let dropped = 0;
  for (let r = 0; r < count; r++) {
    let finite = true;
    for (let c = 0; c < stride; c++) {
      if (!Number.isFinite(raw[r * stride + c])) {
        finite = false;
        break;
      }
    }
    if (finite) {
      keepRows.push(r);
    } else if (skipBad) {
      dropped += 1;
    } else {
      throw new NonFiniteRecord(
        `record ${r} holds non-finite values; pass skip-bad to drop such records`);
    }
  }

  const n = keepRows.length;
  const m = shCoeffCount(degree) - 1;
  const positions = new Float32Array(n * 3);
  const rotations = new Float32Array(n * 4);
  const scales = new Float32Array(n * 3);
  const opacities = new Float32Array(n);
  const sh = new Float32Array(n * (m + 1) * 3);

  for (let i = 0; i < n; i++) {
    const row = keepRows[i] * stride;
    positions[i * 3] = raw[row];
    positions[i * 3 + 1] = raw[row + 1];
    positions[i * 3 + 2] = raw[row + 2];
    // normals raw[row+3..5] carried in the file, ignored here
    const dcBase = row + 6;
    const restBase = row + 9;
    const post = row + 9 + 3 * m;
    const opacityRaw = raw[post];
    const s0 = raw[post + 1];
    const s1 = raw[post + 2];
    const s2 = raw[post + 3];
    const qw = raw[post + 4];
    const qx = raw[post + 5];
    const qy = raw[post + 6];
    const qz = raw[post + 7];

    const norm = fr(Math.sqrt(
      fr(fr(fr(fr(qw * qw) + fr(qx * qx)) + fr(qy * qy)) + fr(qz * qz))));
    if (norm < 1e-12) {
      throw new DegenerateRotation("quaternion norm below 1e-12");
    }
    rotations[i * 4] = fr(qw / norm);
    rotations[i * 4 + 1] = fr(qx / norm);
    rotations[i * 4 + 2] = fr(qy / norm);
    rotations[i * 4 + 3] = fr(qz / norm);

    opacities[i] = fr(1 / fr(1 + fr(Math.exp(fr(-opacityRaw)))));
    scales[i * 3] = fr(Math.exp(s0));
    scales[i * 3 + 1] = fr(Math.exp(s1));
    scales[i * 3 + 2] = fr(Math.exp(s2));

    const shBase = i * (m + 1) * 3;
    sh[shBase] = raw[dcBase];
    sh[shBase + 1] = raw[dcBase + 1];
    sh[shBase + 2] = raw[dcBase + 2];
    // file stores higher bands channel-major; memory wants coefficient-major
    for (let c = 0; c < m; c++) {
      for (let ch = 0; ch < 3; ch++) {
        sh[shBase + (c + 1) * 3 + ch] = raw[restBase + ch * m + c];
      }
    }
  }

  return { count: n, shDegree: degree, positions, rotations, scales,
    opacities, sh, dropped };
}
