/** Orbit camera: drag rotates, wheel dollies, double-click recenters. */

import { lookAt, Mat4, Vec3 } from "./math";

export interface OrbitState {
  azimuth: number;
  elevation: number;
  distance: number;
  target: Vec3;
}

const EL_LIMIT = Math.PI / 2 - 0.01;
const DIST_MIN = 0.2;
const DIST_MAX = 20;

export class OrbitControls {
  state: OrbitState;

  constructor(initial?: Partial<OrbitState>) {
    this.state = {
      azimuth: 0.5,
      elevation: 0.35,
      distance: 2.0,
      target: [0, 0, 0],
      ...initial,
    };
  }

  rotate(dxPixels: number, dyPixels: number): void {
    this.state.azimuth -= dxPixels * 0.008;
    this.state.elevation += dyPixels * 0.008;
    this.state.elevation = Math.min(EL_LIMIT, Math.max(-EL_LIMIT, this.state.elevation));
  }

  dolly(wheelDelta: number): void {
    const factor = Math.exp(wheelDelta * 0.001);
    this.state.distance = Math.min(DIST_MAX, Math.max(DIST_MIN, this.state.distance * factor));
  }

  recenter(target: Vec3 = [0, 0, 0]): void {
    this.state.target = target;
  }

  eye(): Vec3 {
    const { azimuth: az, elevation: el, distance: d, target } = this.state;
    return [
      target[0] + d * Math.cos(el) * Math.cos(az),
      target[1] + d * Math.cos(el) * Math.sin(az),
      target[2] + d * Math.sin(el),
    ];
  }

  viewMatrix(): Mat4 {
    return lookAt(this.eye(), this.state.target);
  }

  attach(canvas: HTMLElement): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    canvas.addEventListener("pointerdown", (e) => {
      dragging = true;
      lastX = e.clientX;
      lastY = e.clientY;
      canvas.setPointerCapture?.(e.pointerId);
    });
    canvas.addEventListener("pointermove", (e) => {
      if (!dragging) return;
      this.rotate(e.clientX - lastX, e.clientY - lastY);
      lastX = e.clientX;
      lastY = e.clientY;
    });
    canvas.addEventListener("pointerup", () => {
      dragging = false;
    });
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.dolly(e.deltaY);
    }, { passive: false });
    canvas.addEventListener("dblclick", () => this.recenter());
  }
}
