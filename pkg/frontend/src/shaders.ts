/** GLSL for the lumigraph pass: per-fragment angle ranking, shadow-map style
 * occlusion against baked depths, and the normalized (1/t)(1 - t/t_k) blend. */

export const MAX_TEXTURES = 64;
export const K = 5;

export const VERT = `#version 300 es
layout(location = 0) in vec3 aPosition;
layout(location = 1) in vec3 aNormal;
uniform mat4 uViewProj;
out vec3 vWorld;
out vec3 vNormal;
void main() {
  vWorld = aPosition;
  vNormal = aNormal;
  gl_Position = uViewProj * vec4(aPosition, 1.0);
}
`;

export const FRAG = `#version 300 es
precision highp float;
precision highp sampler2DArray;

in vec3 vWorld;
in vec3 vNormal;
out vec4 frag;

uniform int uCount;
uniform mat4 uTexVP[${MAX_TEXTURES}];
uniform vec3 uTexPos[${MAX_TEXTURES}];
uniform vec3 uEye;
uniform float uBias;
uniform int uDebug;        // 0 final, 1 weight heatmap, 2 depth, 3 texture id
uniform sampler2DArray uColor;
uniform sampler2DArray uDepth;

const int K = ${K};

vec3 idColor(int i) {
  float h = fract(float(i) * 0.618034);
  return clamp(abs(fract(h + vec3(0.0, 0.333, 0.667)) * 6.0 - 3.0) - 1.0, 0.0, 1.0);
}

void main() {
  vec3 toEye = normalize(uEye - vWorld);
  float tau[K];
  int   idx[K];
  vec2  uvs[K];
  for (int j = 0; j < K; j++) { tau[j] = 1.0e9; idx[j] = -1; uvs[j] = vec2(0.0); }

  for (int i = 0; i < ${MAX_TEXTURES}; i++) {
    if (i >= uCount) break;
    vec4 clip = uTexVP[i] * vec4(vWorld, 1.0);
    if (clip.w <= 1.0e-6) continue;
    vec3 ndc = clip.xyz / clip.w;
    if (abs(ndc.x) > 1.0 || abs(ndc.y) > 1.0) continue;
    vec2 uv = vec2(0.5 + 0.5 * ndc.x, 0.5 - 0.5 * ndc.y);
    float dist = distance(uTexPos[i], vWorld);
    float stored = texture(uDepth, vec3(uv, float(i))).r;
    if (stored < dist - uBias) continue;
    if (texture(uColor, vec3(uv, float(i))).a <= 0.0) continue;
    vec3 toTex = normalize(uTexPos[i] - vWorld);
    float t = acos(clamp(dot(toTex, toEye), -1.0, 1.0));
    // insertion sort into the k best
    for (int j = 0; j < K; j++) {
      if (t < tau[j]) {
        for (int m = K - 1; m > j; m--) {
          tau[m] = tau[m - 1]; idx[m] = idx[m - 1]; uvs[m] = uvs[m - 1];
        }
        tau[j] = t; idx[j] = i; uvs[j] = uv;
        break;
      }
    }
  }

  int count = 0;
  for (int j = 0; j < K; j++) if (idx[j] >= 0) count++;
  if (count == 0) {
    frag = (uDebug > 0) ? vec4(1.0, 0.0, 1.0, 1.0) : vec4(0.0, 0.0, 0.0, 0.0);
    return;
  }

  float w[K];
  float cut = (count == K) ? tau[K - 1] : 1.1 * tau[count - 1];
  float total = 0.0;
  for (int j = 0; j < K; j++) {
    if (idx[j] < 0 || j >= count) { w[j] = 0.0; continue; }
    if (count == 1) { w[j] = 1.0; total = 1.0; break; }
    float t = tau[j];
    w[j] = (j == count - 1 && count == K) ? 0.0
         : (1.0 / max(t, 1.0e-9)) * (1.0 - t / cut);
    total += w[j];
  }
  if (total < 1.0e-9) {
    for (int j = 0; j < K; j++) w[j] = (j < count) ? 1.0 / float(count) : 0.0;
    total = 1.0;
  }

  vec3 color = vec3(0.0);
  for (int j = 0; j < K; j++) {
    if (idx[j] < 0 || w[j] == 0.0) continue;
    color += (w[j] / total) * texture(uColor, vec3(uvs[j], float(idx[j]))).rgb;
  }

  if (uDebug == 1) {
    float w1 = w[0] / total;
    frag = vec4(w1, 1.0 - w1, 0.2, 1.0);
  } else if (uDebug == 2) {
    float d = distance(uEye, vWorld);
    frag = vec4(vec3(clamp(1.0 - (d - 1.0) * 0.5, 0.0, 1.0)), 1.0);
  } else if (uDebug == 3) {
    frag = vec4(idColor(idx[0]), 1.0);
  } else {
    frag = vec4(color, 1.0);
  }
}
`;
