import init, { prox_curve, similarity_matrix, CompletionDemo } from "./pkg/dcot_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function showError(e) {
  $("error").textContent = String(e?.message ?? e);
}

// Mirror each slider value into the <output> next to it.
function bindOutputs() {
  for (const input of document.querySelectorAll("input[type=range]")) {
    const out = input.nextElementSibling;
    const sync = () => { if (out?.tagName === "OUTPUT") out.textContent = input.value; };
    input.addEventListener("input", sync);
    sync();
  }
}

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#bbb";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
}

function drawLine(ctx, xs, ys, map, style, dash = []) {
  ctx.beginPath();
  ctx.setLineDash(dash);
  ctx.strokeStyle = style;
  let started = false;
  xs.forEach((x, i) => {
    if (!Number.isFinite(ys[i])) { started = false; return; }
    const [px, py] = map(x, ys[i]);
    if (started) ctx.lineTo(px, py); else { ctx.moveTo(px, py); started = true; }
  });
  ctx.stroke();
  ctx.setLineDash([]);
}

function renderProx() {
  const canvas = $("prox");
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 20, lo = -3, hi = 3;
  const xs = Array.from({ length: 241 }, (_, i) => lo + (hi - lo) * i / 240);
  const ys = prox_curve($("prox-kind").value, num("prox-lambda"), num("prox-t"), num("prox-mix"), num("prox-companion"), Float64Array.from(xs));
  const map = (x, y) => [pad + (x - lo) / (hi - lo) * (w - 2 * pad), h - pad - (y - lo) / (hi - lo) * (h - 2 * pad)];
  axes(ctx, w, h, pad);
  drawLine(ctx, [lo, hi], [0, 0], map, "#ddd");
  drawLine(ctx, [0, 0], [lo, hi], map, "#ddd");
  drawLine(ctx, xs, xs, map, "#999", [4, 4]);
  ctx.lineWidth = 2;
  drawLine(ctx, xs, Array.from(ys), map, "#1f5fbf");
  ctx.lineWidth = 1;
}

// Blue to white to red, for values scaled into [-1, 1].
function diverging(v) {
  if (!Number.isFinite(v)) return [235, 235, 235];
  const t = Math.max(-1, Math.min(1, v));
  const a = Math.round(255 * (1 - Math.abs(t)));
  return t < 0 ? [a, a, 255] : [255, a, a];
}

function heatmap(canvas, values, n, color) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n, n);
  for (let k = 0; k < n * n; k++) {
    const [r, g, b] = color(values[k]);
    img.data.set([r, g, b, 255], 4 * k);
  }
  const off = new OffscreenCanvas(n, n);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function renderSimilarity() {
  const n = num("sim-n");
  const w = similarity_matrix(n, $("sim-kernel").value, num("sim-xi"), num("sim-h"), num("sim-groups"), num("sim-same"), num("sim-diff"), 7n);
  heatmap($("sim"), w, n, (v) => {
    const a = Math.round(255 * (1 - Math.max(0, Math.min(1, v))));
    return [a, a, 255 - Math.round(0.3 * (255 - a))];
  });
}

let demo = null;
let history = [];
let running = false;

function resetDemo() {
  running = false;
  $("cd-run").textContent = "run";
  demo?.free();
  demo = new CompletionDemo(num("cd-size"), num("cd-rank"), num("cd-missing"), num("cd-noise"), BigInt(num("cd-seed")), $("cd-smoothed").checked);
  history = [];
  renderDemo();
}

function renderDemo() {
  const n = demo.size();
  const k = num("cd-slice");
  const truth = demo.slice("truth", k);
  const scale = Math.max(1e-12, ...truth.map(Math.abs));
  const color = (v) => diverging(v / scale);
  heatmap($("cd-truth"), truth, n, color);
  heatmap($("cd-observed"), demo.slice("observed", k), n, color);
  heatmap($("cd-estimate"), demo.slice("estimate", k), n, color);
  const last = history.at(-1);
  $("cd-caption").textContent = last
    ? `estimate after ${last.it} sweeps, train ${last.train.toExponential(2)}, held-out ${last.test.toExponential(2)}`
    : "estimate (initial)";
  renderTrace();
}

function renderTrace() {
  const canvas = $("trace");
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 24;
  axes(ctx, w, h, pad);
  if (history.length < 2) return;
  const its = history.map((r) => r.it);
  const series = [["train", "#1f5fbf"], ["test", "#c0392b"]];
  const logs = history.flatMap((r) => series.map(([key]) => Math.log10(r[key]))).filter(Number.isFinite);
  const ylo = Math.min(...logs), yhi = Math.max(...logs) + 1e-9;
  const xhi = Math.max(...its);
  const map = (x, y) => [pad + x / xhi * (w - 2 * pad), h - pad - (y - ylo) / (yhi - ylo) * (h - 2 * pad)];
  for (const [key, color] of series) drawLine(ctx, its, history.map((r) => Math.log10(r[key])), map, color);
  ctx.fillStyle = "#555";
  ctx.fillText(`log10 RMSE  [${ylo.toFixed(2)}, ${yhi.toFixed(2)}]   blue train, red held-out`, pad, 14);
}

function tick() {
  if (!running) return;
  try {
    const rows = demo.step(10);
    for (let i = 0; i < rows.length; i += 4) history.push({ it: rows[i], lagrangian: rows[i + 1], train: rows[i + 2], test: rows[i + 3] });
    renderDemo();
    if (demo.iteration() >= 3000) { running = false; $("cd-run").textContent = "run"; return; }
    requestAnimationFrame(tick);
  } catch (e) {
    running = false;
    $("cd-run").textContent = "run";
    showError(e);
  }
}

function guard(f) {
  return () => { try { $("error").textContent = ""; f(); } catch (e) { showError(e); } };
}

async function main() {
  await init();
  bindOutputs();
  for (const id of ["prox-kind", "prox-lambda", "prox-t", "prox-mix", "prox-companion"]) $(id).addEventListener("input", guard(renderProx));
  for (const id of ["sim-n", "sim-kernel", "sim-xi", "sim-h", "sim-groups", "sim-same", "sim-diff"]) $(id).addEventListener("input", guard(renderSimilarity));
  for (const id of ["cd-size", "cd-rank", "cd-missing", "cd-noise", "cd-seed", "cd-smoothed"]) $(id).addEventListener("change", guard(resetDemo));
  $("cd-slice").addEventListener("input", guard(renderDemo));
  $("cd-reset").addEventListener("click", guard(resetDemo));
  $("cd-run").addEventListener("click", () => {
    running = !running;
    $("cd-run").textContent = running ? "pause" : "run";
    if (running) requestAnimationFrame(tick);
  });
  guard(renderProx)();
  guard(renderSimilarity)();
  guard(resetDemo)();
}

main().catch(showError);
