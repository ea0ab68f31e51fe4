/** Grayscale PFM depth maps (the exporter writes little-endian, bottom-up). */

export interface DepthMap {
  width: number;
  height: number;
  data: Float32Array; // row 0 = top
}

export function parsePfm(buf: ArrayBuffer): DepthMap {
  const bytes = new Uint8Array(buf);
  let off = 0;
  const line = () => {
    let s = "";
    while (off < bytes.length) {
      const c = bytes[off++];
      if (c === 0x0a) break;
      s += String.fromCharCode(c);
    }
    return s.trim();
  };
  const magic = line();
  if (magic !== "Pf") throw new Error(`not a grayscale PFM (magic "${magic}")`);
  const [w, h] = line().split(/\s+/).map(Number);
  const scale = Number(line());
  const little = scale < 0;
  const n = w * h;
  const view = new DataView(buf, off, 4 * n);
  const data = new Float32Array(n);
  // file rows run bottom-up; flip so row 0 is the top of the image
  for (let y = 0; y < h; y++) {
    const src = h - 1 - y;
    for (let x = 0; x < w; x++) {
      data[y * w + x] = view.getFloat32(4 * (src * w + x), little);
    }
  }
  return { width: w, height: h, data };
}
