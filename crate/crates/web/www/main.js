import init, { Simulation, estimatorCurve, adaptiveTrace } from "./pkg/wavemap_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function status(msg) {
  $("status").textContent = msg;
}

function guard(fn) {
  return () => {
    status("");
    try {
      fn();
    } catch (e) {
      status(String(e.message || e));
    }
  };
}

// Draws y against x on a log scale in y. Points with accepted = false are red.
function plot(canvas, xs, ys, accepted, label) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  ctx.clearRect(0, 0, w, h);
  const ly = ys.map((y) => Math.log10(Math.max(y, 1e-300)));
  const x0 = Math.min(...xs), x1 = Math.max(...xs);
  const y0 = Math.min(...ly), y1 = Math.max(...ly);
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#222";
  ctx.font = "12px sans-serif";
  ctx.fillText(label, pad, pad - 8);
  ctx.fillText(`1e${y1.toFixed(1)}`, 2, pad + 4);
  ctx.fillText(`1e${y0.toFixed(1)}`, 2, h - pad + 4);
  ctx.fillText(x0.toFixed(3), pad, h - pad + 16);
  ctx.fillText(x1.toFixed(3), w - pad - 30, h - pad + 16);
  for (let k = 0; k < xs.length; k++) {
    ctx.fillStyle = accepted && !accepted[k] ? "#d22" : "#25a";
    ctx.fillRect(sx(xs[k]) - 1, sy(ly[k]) - 1, 3, 3);
  }
}

function columns(flat, n) {
  const cols = Array.from({ length: n }, () => []);
  for (let k = 0; k < flat.length; k++) cols[k % n].push(flat[k]);
  return cols;
}

let sim = null;

function showFrame() {
  if (!sim) return;
  const k = num("sim-frame");
  const n = sim.nodes();
  const img = new ImageData(new Uint8ClampedArray(sim.rgba(k)), n, n);
  const tmp = document.createElement("canvas");
  tmp.width = n;
  tmp.height = n;
  tmp.getContext("2d").putImageData(img, 0, 0);
  const ctx = $("sim-canvas").getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, 320, 320);
  $("sim-time").textContent = `t = ${sim.time(k).toFixed(4)}`;
}

await init();

$("sim-run").onclick = guard(() => {
  if (sim) sim.free();
  sim = new Simulation(num("sim-cells"), num("sim-tau"), num("sim-tend"));
  $("sim-frame").max = sim.frames() - 1;
  $("sim-frame").value = 0;
  showFrame();
});
$("sim-frame").oninput = showFrame;

$("est-run").onclick = guard(() => {
  const [t, , b] = columns(estimatorCurve(num("est-cells"), num("est-tau"), num("est-tend")), 3);
  plot($("est-canvas"), t, b, null, "error bound B against t");
});

$("ad-run").onclick = guard(() => {
  const flat = adaptiveTrace(num("ad-cells"), $("ad-strategy").value, num("ad-tol"), num("ad-tend"));
  const [t, tau, ok] = columns(flat, 3);
  plot($("ad-canvas"), t, tau, ok.map((v) => v === 1), "step size against t (red: rejected)");
});
