/** Minimal row-major mat4 / vec3 helpers matching the bundle's conventions. */

export type Mat4 = Float64Array; // 16 entries, row-major
export type Vec3 = [number, number, number];

export function mat4FromRows(rows: number[]): Mat4 {
  if (rows.length !== 16) throw new Error(`expected 16 floats, got ${rows.length}`);
  return Float64Array.from(rows);
}

export function matMul(a: Mat4, b: Mat4): Mat4 {
  const out = new Float64Array(16);
  for (let i = 0; i < 4; i++)
    for (let j = 0; j < 4; j++) {
      let s = 0;
      for (let k = 0; k < 4; k++) s += a[i * 4 + k] * b[k * 4 + j];
      out[i * 4 + j] = s;
    }
  return out;
}

export function transformPoint(m: Mat4, p: Vec3): [number, number, number, number] {
  const r = [0, 0, 0, 0] as [number, number, number, number];
  for (let i = 0; i < 4; i++)
    r[i] = m[i * 4] * p[0] + m[i * 4 + 1] * p[1] + m[i * 4 + 2] * p[2] + m[i * 4 + 3];
  return r;
}

export function invert(m: Mat4): Mat4 {
  // Gauss-Jordan with partial pivoting; fine for view/projection matrices.
  const a = Float64Array.from(m);
  const inv = new Float64Array(16);
  for (let i = 0; i < 4; i++) inv[i * 4 + i] = 1;
  for (let col = 0; col < 4; col++) {
    let pivot = col;
    for (let r = col + 1; r < 4; r++)
      if (Math.abs(a[r * 4 + col]) > Math.abs(a[pivot * 4 + col])) pivot = r;
    if (Math.abs(a[pivot * 4 + col]) < 1e-12) throw new Error("singular matrix");
    if (pivot !== col) {
      for (let k = 0; k < 4; k++) {
        [a[col * 4 + k], a[pivot * 4 + k]] = [a[pivot * 4 + k], a[col * 4 + k]];
        [inv[col * 4 + k], inv[pivot * 4 + k]] = [inv[pivot * 4 + k], inv[col * 4 + k]];
      }
    }
    const d = a[col * 4 + col];
    for (let k = 0; k < 4; k++) {
      a[col * 4 + k] /= d;
      inv[col * 4 + k] /= d;
    }
    for (let r = 0; r < 4; r++) {
      if (r === col) continue;
      const f = a[r * 4 + col];
      if (f === 0) continue;
      for (let k = 0; k < 4; k++) {
        a[r * 4 + k] -= f * a[col * 4 + k];
        inv[r * 4 + k] -= f * inv[col * 4 + k];
      }
    }
  }
  return inv;
}

export function cameraCenter(view: Mat4): Vec3 {
  const vi = invert(view);
  return [vi[3], vi[7], vi[11]];
}

export function lookAt(eye: Vec3, target: Vec3, up: Vec3 = [0, 0, 1]): Mat4 {
  const f = norm3(sub3(target, eye));
  let s = cross3(f, up);
  if (len3(s) < 1e-9) s = cross3(f, Math.abs(f[0]) < 0.9 ? [1, 0, 0] : [0, 1, 0]);
  s = norm3(s);
  const u = cross3(s, f);
  const m = new Float64Array(16);
  m.set([...s, 0], 0);
  m.set([...u, 0], 4);
  m.set([-f[0], -f[1], -f[2], 0], 8);
  m[15] = 1;
  m[3] = -(s[0] * eye[0] + s[1] * eye[1] + s[2] * eye[2]);
  m[7] = -(u[0] * eye[0] + u[1] * eye[1] + u[2] * eye[2]);
  m[11] = f[0] * eye[0] + f[1] * eye[1] + f[2] * eye[2];
  return m;
}

export function sub3(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function cross3(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

export function len3(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function norm3(a: Vec3): Vec3 {
  const l = len3(a);
  return [a[0] / l, a[1] / l, a[2] / l];
}

export function perspective(fovYDeg: number, aspect: number, near: number, far: number): Mat4 {
  const t = 1 / Math.tan((fovYDeg * Math.PI) / 360);
  const m = new Float64Array(16);
  m[0] = t / aspect;
  m[5] = t;
  m[10] = (far + near) / (near - far);
  m[11] = (2 * far * near) / (near - far);
  m[14] = -1;
  return m;
}

/** Column-major Float32Array for WebGL uniformMatrix4fv (transpose of row-major). */
export function toGl(m: Mat4): Float32Array {
  const out = new Float32Array(16);
  for (let i = 0; i < 4; i++)
    for (let j = 0; j < 4; j++) out[j * 4 + i] = m[i * 4 + j];
  return out;
}
