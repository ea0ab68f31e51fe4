import { describe, expect, it } from "vitest";
import {
  cameraCenter,
  invert,
  lookAt,
  mat4FromRows,
  matMul,
  perspective,
  toGl,
  transformPoint,
} from "../src/math";
import { OrbitControls } from "../src/orbit";

describe("mat4", () => {
  it("inverts a look-at view", () => {
    const v = lookAt([0, 0, 3], [0, 0, 0], [0, 1, 0]);
    const vi = invert(v);
    const ident = matMul(v, vi);
    for (let i = 0; i < 4; i++)
      for (let j = 0; j < 4; j++)
        expect(ident[i * 4 + j]).toBeCloseTo(i === j ? 1 : 0, 10);
  });

  it("camera center matches the eye", () => {
    const v = lookAt([1.5, -2, 0.7], [0, 0, 0]);
    const c = cameraCenter(v);
    expect(c[0]).toBeCloseTo(1.5, 10);
    expect(c[1]).toBeCloseTo(-2, 10);
    expect(c[2]).toBeCloseTo(0.7, 10);
  });

  it("projects the look-at target to NDC center", () => {
    const v = lookAt([0, 2, 0.5], [0, 0, 0]);
    const p = perspective(40, 1, 0.1, 10);
    const clip = transformPoint(matMul(p, v), [0, 0, 0]);
    expect(clip[0] / clip[3]).toBeCloseTo(0, 9);
    expect(clip[1] / clip[3]).toBeCloseTo(0, 9);
  });

  it("toGl transposes to column-major", () => {
    const m = mat4FromRows([...Array(16).keys()].map(Number));
    const g = toGl(m);
    expect(g[1]).toBe(4); // row 1, col 0 in row-major
    expect(g[4]).toBe(1);
  });
});

describe("OrbitControls", () => {
  it("clamps elevation and distance", () => {
    const o = new OrbitControls();
    o.rotate(0, 100000);
    expect(Math.abs(o.state.elevation)).toBeLessThan(Math.PI / 2);
    o.dolly(-1e9);
    expect(o.state.distance).toBeGreaterThanOrEqual(0.2);
    o.dolly(1e9);
    expect(o.state.distance).toBeLessThanOrEqual(20);
  });

  it("eye respects azimuth and distance", () => {
    const o = new OrbitControls({ azimuth: 0, elevation: 0, distance: 2, target: [0, 0, 0] });
    const e = o.eye();
    expect(e[0]).toBeCloseTo(2, 10);
    expect(e[1]).toBeCloseTo(0, 10);
    expect(e[2]).toBeCloseTo(0, 10);
  });

  it("view matrix looks at the target", () => {
    const o = new OrbitControls({ azimuth: 0.7, elevation: 0.2, distance: 3, target: [0, 0, 0] });
    const v = o.viewMatrix();
    const t = transformPoint(v, [0, 0, 0]);
    expect(t[0]).toBeCloseTo(0, 9);
    expect(t[1]).toBeCloseTo(0, 9);
    expect(t[2]).toBeCloseTo(-3, 9); // straight ahead, 3 units out
  });
});
