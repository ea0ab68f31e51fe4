/** Fetch and decode an ExportBundle directory served over HTTP. */

import { Mat4, mat4FromRows, matMul, cameraCenter, Vec3 } from "./math";
import { MeshData, parseObj } from "./obj";
import { DepthMap, parsePfm } from "./pfm";

export interface TexCamera {
  view: Mat4;
  proj: Mat4;
  viewProj: Mat4;
  center: Vec3;
  width: number;
  height: number;
}

export interface Bundle {
  mesh: MeshData;
  cameras: TexCamera[];
  images: ImageBitmap[];
  depths: DepthMap[];
  meta: Record<string, unknown>;
}

async function fetchOrThrow(url: string): Promise<Response> {
  const resp = await fetch(url);
  if (!resp.ok) throw new Error(`failed to fetch ${url} (${resp.status})`);
  return resp;
}

export async function loadBundle(
  base: string,
  onProgress?: (msg: string) => void,
): Promise<Bundle> {
  const say = onProgress ?? (() => {});
  const root = base.endsWith("/") ? base : base + "/";

  say("cameras.json");
  const camsDoc = (await (await fetchOrThrow(root + "cameras.json")).json()) as Array<{
    view: number[];
    proj: number[];
    width: number;
    height: number;
  }>;
  const cameras: TexCamera[] = camsDoc.map((d) => {
    const view = mat4FromRows(d.view);
    const proj = mat4FromRows(d.proj);
    return {
      view,
      proj,
      viewProj: matMul(proj, view),
      center: cameraCenter(view),
      width: d.width,
      height: d.height,
    };
  });

  say("meta.json");
  let meta: Record<string, unknown> = {};
  try {
    meta = await (await fetchOrThrow(root + "meta.json")).json();
  } catch {
    meta = {};
  }

  say("mesh.obj");
  const mesh = parseObj(await (await fetchOrThrow(root + "mesh.obj")).text());

  const images: ImageBitmap[] = [];
  const depths: DepthMap[] = [];
  for (let i = 0; i < cameras.length; i++) {
    const id = String(i).padStart(3, "0");
    say(`tex/tex_${id}.png`);
    const blob = await (await fetchOrThrow(`${root}tex/tex_${id}.png`)).blob();
    images.push(await createImageBitmap(blob));
    say(`depth/dep_${id}.pfm`);
    const buf = await (await fetchOrThrow(`${root}depth/dep_${id}.pfm`)).arrayBuffer();
    depths.push(parsePfm(buf));
  }
  return { mesh, cameras, images, depths, meta };
}
