/** Overlay: fps counter, checkpoint hash from meta.json, active debug mode. */

const MODE_NAMES = ["final", "weights-heatmap", "depth", "texture-id"];

export class Hud {
  private el: HTMLDivElement;
  private frames = 0;
  private lastStamp = performance.now();
  private fps = 0;

  constructor(parent: HTMLElement, private meta: Record<string, unknown>) {
    this.el = document.createElement("div");
    this.el.style.cssText =
      "position:absolute;top:8px;left:8px;color:#9f9;font:12px monospace;" +
      "background:rgba(0,0,0,0.55);padding:6px 8px;border-radius:4px;" +
      "pointer-events:none;white-space:pre";
    parent.appendChild(this.el);
  }

  tick(debugMode: number, nTextures: number): void {
    this.frames++;
    const now = performance.now();
    if (now - this.lastStamp >= 500) {
      this.fps = (this.frames * 1000) / (now - this.lastStamp);
      this.frames = 0;
      this.lastStamp = now;
    }
    const hash = (this.meta["checkpoint_hash"] as string) || "n/a";
    this.el.textContent =
      `${this.fps.toFixed(1)} fps  [${nTextures} textures]\n` +
      `ckpt ${hash}\n` +
      `mode ${MODE_NAMES[debugMode]} (keys 0-3)`;
  }

  error(msg: string): void {
    this.el.style.color = "#f88";
    this.el.textContent = msg;
  }
}
