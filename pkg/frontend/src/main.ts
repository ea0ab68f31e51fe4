import { loadBundle } from "./bundle";
import { Hud } from "./hud";
import { DebugMode, ViewerSession } from "./viewer";

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const bundleUrl = params.get("bundle") ?? "/bundle/";

  const wrap = document.getElementById("app")!;
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const status = document.createElement("div");
  status.style.cssText = "color:#ccc;font:13px monospace;padding:12px";
  wrap.appendChild(status);

  let session: ViewerSession;
  let hud: Hud;
  try {
    const bundle = await loadBundle(bundleUrl, (f) => {
      status.textContent = `loading ${f} ...`;
    });
    status.remove();
    session = new ViewerSession(canvas, bundle);
    hud = new Hud(wrap, bundle.meta);
  } catch (err) {
    status.style.color = "#f88";
    status.textContent = `failed to load bundle: ${(err as Error).message}`;
    throw err;
  }

  window.addEventListener("keydown", (e) => {
    if (e.key >= "0" && e.key <= "3")
      session.debug = Number(e.key) as DebugMode;
  });

  const resize = () => {
    canvas.width = canvas.clientWidth * devicePixelRatio;
    canvas.height = canvas.clientHeight * devicePixelRatio;
  };
  window.addEventListener("resize", resize);
  resize();

  const loop = () => {
    session.frame();
    hud.tick(session.debug, session.bundle.cameras.length);
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

boot();
