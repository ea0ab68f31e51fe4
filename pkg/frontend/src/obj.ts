/** Wavefront OBJ subset: v / vn / f v//n triangles (what the exporter emits). */

export interface MeshData {
  positions: Float32Array; // 3 per vertex
  normals: Float32Array;   // 3 per vertex (zeros if the file has none)
  indices: Uint32Array;    // 3 per triangle
}

export function parseObj(text: string): MeshData {
  const pos: number[] = [];
  const nrm: number[] = [];
  const idx: number[] = [];
  const normIdx: number[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (!line || line.startsWith("#")) continue;
    const parts = line.split(/\s+/);
    if (parts[0] === "v") {
      pos.push(+parts[1], +parts[2], +parts[3]);
    } else if (parts[0] === "vn") {
      nrm.push(+parts[1], +parts[2], +parts[3]);
    } else if (parts[0] === "f") {
      if (parts.length !== 4) throw new Error("only triangle faces are supported");
      for (let k = 1; k <= 3; k++) {
        const comps = parts[k].split("/");
        idx.push(parseInt(comps[0], 10) - 1);
        if (comps.length >= 3 && comps[2] !== "")
          normIdx.push(parseInt(comps[2], 10) - 1);
      }
    }
  }
  const nVerts = pos.length / 3;
  if (nVerts === 0) throw new Error("OBJ contains no vertices");
  const normals = new Float32Array(pos.length);
  if (nrm.length === pos.length && normIdx.length === idx.length) {
    // exporter writes v//n with matching indices, so copy straight through
    for (let i = 0; i < idx.length; i++) {
      const v = idx[i];
      const n = normIdx[i];
      normals[v * 3] = nrm[n * 3];
      normals[v * 3 + 1] = nrm[n * 3 + 1];
      normals[v * 3 + 2] = nrm[n * 3 + 2];
    }
  }
  return {
    positions: Float32Array.from(pos),
    normals,
    indices: Uint32Array.from(idx),
  };
}
