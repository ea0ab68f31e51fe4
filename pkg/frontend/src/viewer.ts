/** WebGL2 session: bundle assets in GPU buffers plus the per-frame draw. */

import { Bundle } from "./bundle";
import { Mat4, matMul, perspective, toGl, Vec3 } from "./math";
import { OrbitControls } from "./orbit";
import { FRAG, MAX_TEXTURES, VERT } from "./shaders";

export type DebugMode = 0 | 1 | 2 | 3;

export class ViewerSession {
  gl: WebGL2RenderingContext;
  controls = new OrbitControls();
  debug: DebugMode = 0;
  bias = 0.01;
  private program!: WebGLProgram;
  private vao!: WebGLVertexArrayObject;
  private nIndices = 0;
  private uniforms: Record<string, WebGLUniformLocation | null> = {};
  private texVP: Float32Array;
  private texPos: Float32Array;
  private count = 0;

  constructor(private canvas: HTMLCanvasElement, public bundle: Bundle) {
    const gl = canvas.getContext("webgl2");
    if (!gl) throw new Error("WebGL2 is not available");
    this.gl = gl;
    if (bundle.cameras.length > MAX_TEXTURES)
      throw new Error(`bundle has ${bundle.cameras.length} textures; max ${MAX_TEXTURES}`);
    this.count = bundle.cameras.length;
    this.texVP = new Float32Array(16 * MAX_TEXTURES);
    this.texPos = new Float32Array(3 * MAX_TEXTURES);
    bundle.cameras.forEach((cam, i) => {
      this.texVP.set(toGl(cam.viewProj), 16 * i);
      this.texPos.set(cam.center, 3 * i);
    });
    this.setup();
    this.controls.attach(canvas);
  }

  private compile(kind: number, src: string): WebGLShader {
    const gl = this.gl;
    const sh = gl.createShader(kind)!;
    gl.shaderSource(sh, src);
    gl.compileShader(sh);
    if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS))
      throw new Error("shader compile failed: " + gl.getShaderInfoLog(sh));
    return sh;
  }

  private setup(): void {
    const gl = this.gl;
    const prog = gl.createProgram()!;
    gl.attachShader(prog, this.compile(gl.VERTEX_SHADER, VERT));
    gl.attachShader(prog, this.compile(gl.FRAGMENT_SHADER, FRAG));
    gl.linkProgram(prog);
    if (!gl.getProgramParameter(prog, gl.LINK_STATUS))
      throw new Error("program link failed: " + gl.getProgramInfoLog(prog));
    this.program = prog;
    for (const name of ["uViewProj", "uCount", "uTexVP", "uTexPos", "uEye",
                        "uBias", "uDebug", "uColor", "uDepth"])
      this.uniforms[name] = gl.getUniformLocation(prog, name);

    const mesh = this.bundle.mesh;
    this.vao = gl.createVertexArray()!;
    gl.bindVertexArray(this.vao);
    const pbuf = gl.createBuffer();
    gl.bindBuffer(gl.ARRAY_BUFFER, pbuf);
    gl.bufferData(gl.ARRAY_BUFFER, mesh.positions, gl.STATIC_DRAW);
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 3, gl.FLOAT, false, 0, 0);
    const nbuf = gl.createBuffer();
    gl.bindBuffer(gl.ARRAY_BUFFER, nbuf);
    gl.bufferData(gl.ARRAY_BUFFER, mesh.normals, gl.STATIC_DRAW);
    gl.enableVertexAttribArray(1);
    gl.vertexAttribPointer(1, 3, gl.FLOAT, false, 0, 0);
    const ibuf = gl.createBuffer();
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, ibuf);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, mesh.indices, gl.STATIC_DRAW);
    this.nIndices = mesh.indices.length;

    // color texture array
    const texW = this.bundle.cameras[0].width;
    const texH = this.bundle.cameras[0].height;
    const colorTex = gl.createTexture();
    gl.activeTexture(gl.TEXTURE0);
    gl.bindTexture(gl.TEXTURE_2D_ARRAY, colorTex);
    gl.texStorage3D(gl.TEXTURE_2D_ARRAY, 1, gl.RGBA8, texW, texH, this.count);
    this.bundle.images.forEach((img, i) => {
      gl.texSubImage3D(gl.TEXTURE_2D_ARRAY, 0, 0, 0, i, texW, texH, 1,
                       gl.RGBA, gl.UNSIGNED_BYTE, img);
    });
    gl.texParameteri(gl.TEXTURE_2D_ARRAY, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_2D_ARRAY, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_2D_ARRAY, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
    gl.texParameteri(gl.TEXTURE_2D_ARRAY, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);

    // depth maps re-encoded to an R32F array (nearest sampling only)
    const depthTex = gl.createTexture();
    gl.activeTexture(gl.TEXTURE1);
    gl.bindTexture(gl.TEXTURE_2D_ARRAY, depthTex);
    gl.texStorage3D(gl.TEXTURE_2D_ARRAY, 1, gl.R32F, texW, texH, this.count);
    this.bundle.depths.forEach((dep, i) => {
      const clamped = new Float32Array(dep.data.length);
      for (let k = 0; k < dep.data.length; k++)
        clamped[k] = Number.isFinite(dep.data[k]) ? dep.data[k] : 1.0e9;
      gl.texSubImage3D(gl.TEXTURE_2D_ARRAY, 0, 0, 0, i, texW, texH, 1,
                       gl.RED, gl.FLOAT, clamped);
    });
    gl.texParameteri(gl.TEXTURE_2D_ARRAY, gl.TEXTURE_MIN_FILTER, gl.NEAREST);
    gl.texParameteri(gl.TEXTURE_2D_ARRAY, gl.TEXTURE_MAG_FILTER, gl.NEAREST);
    gl.texParameteri(gl.TEXTURE_2D_ARRAY, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
    gl.texParameteri(gl.TEXTURE_2D_ARRAY, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);

    gl.enable(gl.DEPTH_TEST);
    gl.clearColor(0.04, 0.04, 0.06, 1.0);
  }

  /** Draw one frame from an explicit view matrix (or the orbit camera). */
  frame(view?: Mat4): void {
    const gl = this.gl;
    const w = this.canvas.width;
    const h = this.canvas.height;
    gl.viewport(0, 0, w, h);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    const v = view ?? this.controls.viewMatrix();
    const proj = perspective(35, w / h, 0.05, 50);
    const vp = matMul(proj, v);
    const eye = eyeFromView(v);

    gl.useProgram(this.program);
    gl.uniformMatrix4fv(this.uniforms.uViewProj, false, toGl(vp));
    gl.uniform1i(this.uniforms.uCount, this.count);
    gl.uniformMatrix4fv(this.uniforms.uTexVP, false, this.texVP);
    gl.uniform3fv(this.uniforms.uTexPos, this.texPos);
    gl.uniform3fv(this.uniforms.uEye, eye);
    gl.uniform1f(this.uniforms.uBias, this.bias);
    gl.uniform1i(this.uniforms.uDebug, this.debug);
    gl.uniform1i(this.uniforms.uColor, 0);
    gl.uniform1i(this.uniforms.uDepth, 1);
    gl.bindVertexArray(this.vao);
    gl.drawElements(gl.TRIANGLES, this.nIndices, gl.UNSIGNED_INT, 0);
  }
}

function eyeFromView(v: Mat4): Vec3 {
  // inverse of a rigid view matrix: eye = -R^T t
  const r = (i: number, j: number) => v[i * 4 + j];
  return [
    -(r(0, 0) * r(0, 3) + r(1, 0) * r(1, 3) + r(2, 0) * r(2, 3)),
    -(r(0, 1) * r(0, 3) + r(1, 1) * r(1, 3) + r(2, 1) * r(2, 3)),
    -(r(0, 2) * r(0, 3) + r(1, 2) * r(1, 3) + r(2, 2) * r(2, 3)),
  ];
}
