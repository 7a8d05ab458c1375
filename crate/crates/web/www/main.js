import init, { kernelCurves, resolventCurves, solveDisk } from "./pkg/wplap_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const $ = (id) => document.getElementById(id);

function extent(arrays) {
  let lo = Infinity, hi = -Infinity;
  for (const a of arrays) for (const v of a) { if (v < lo) lo = v; if (v > hi) hi = v; }
  if (lo === hi) { lo -= 1; hi += 1; }
  return [lo, hi];
}

// Line plot of several series sharing one x array.
function plot(canvas, x, series, colors) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 40;
  ctx.clearRect(0, 0, w, h);
  const [x0, x1] = extent([x]);
  const [y0, y1] = extent(series);
  const sx = (v) => pad + (v - x0) / (x1 - x0) * (w - 2 * pad);
  const sy = (v) => h - pad - (v - y0) / (y1 - y0) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 30, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);
  if (y0 < 0 && y1 > 0) {
    ctx.strokeStyle = "#ddd";
    ctx.beginPath(); ctx.moveTo(pad, sy(0)); ctx.lineTo(w - pad, sy(0)); ctx.stroke();
  }
  series.forEach((ys, k) => {
    ctx.strokeStyle = colors[k % colors.length];
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ys.forEach((y, i) => (i ? ctx.lineTo(sx(x[i]), sy(y)) : ctx.moveTo(sx(x[i]), sy(y))));
    ctx.stroke();
  });
}

function legend(el, names) {
  el.innerHTML = names.map((n, i) => `<span style="color:${COLORS[i]}">${n}</span>`).join("");
}

function guarded(errEl, f) {
  return () => {
    errEl.textContent = "";
    try { f(); } catch (e) { errEl.textContent = String(e.message || e); }
  };
}

function drawKernel() {
  const c = kernelCurves(+$("k-p").value, +$("k-smax").value, 400);
  const names = ["psi", "psi'", "psi_p", "chi~"];
  const series = names.map((_, i) => c.series(i));
  legend($("k-legend"), names);
  plot($("k-plot"), c.x, series, COLORS);
}

function heat(t) {
  // blue to yellow
  const r = Math.round(255 * Math.min(1, 1.6 * t));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.4 * t - 0.1)));
  const b = Math.round(255 * Math.max(0, 0.8 - 1.2 * t));
  return `rgb(${r},${g},${b})`;
}

function drawDisk() {
  const t0 = performance.now();
  const d = solveDisk(+$("d-n").value, +$("d-eps").value, +$("d-p").value, $("d-strategy").value);
  const ms = performance.now() - t0;
  const nodes = d.nodes, tris = d.triangles, u = d.u;
  const canvas = $("d-field"), ctx = canvas.getContext("2d");
  const size = canvas.width, half = size / 2, scale = half * 0.95;
  ctx.clearRect(0, 0, size, size);
  // log scale keeps the logarithmic singularity readable
  const lu = Array.from(u, (v) => Math.log1p(Math.max(v, 0)));
  const [lo, hi] = extent([lu]);
  for (let t = 0; t < tris.length; t += 3) {
    const [a, b, c] = [tris[t], tris[t + 1], tris[t + 2]];
    const mean = (lu[a] + lu[b] + lu[c]) / 3;
    ctx.fillStyle = heat((mean - lo) / (hi - lo));
    ctx.beginPath();
    ctx.moveTo(half + scale * nodes[2 * a], half - scale * nodes[2 * a + 1]);
    ctx.lineTo(half + scale * nodes[2 * b], half - scale * nodes[2 * b + 1]);
    ctx.lineTo(half + scale * nodes[2 * c], half - scale * nodes[2 * c + 1]);
    ctx.closePath();
    ctx.fill();
  }
  const r = Array.from(d.radii).slice(1);
  const m = Array.from(d.ringMean).slice(1);
  const exact = r.map((x) => -Math.log(x) / (2 * Math.PI));
  plot($("d-profile"), r, [m, exact], [COLORS[0], COLORS[1]]);
  const steps = JSON.parse(d.summary);
  $("d-summary").textContent =
    `${d.converged ? "converged" : "NOT converged"} in ${ms.toFixed(0)} ms\n` +
    steps.map((s) => `eps ${s.eps.toExponential(1)}  outer ${s.outer_iters}  residual ${s.residual.toExponential(2)}  ` +
      `chi slack ${s.chi_slack.toFixed(3)}  diagnostics ${s.diagnostics_passed ? "pass" : "FAIL"}`).join("\n");
}

function drawResolvent() {
  const c = resolventCurves($("r-preset").value, +$("r-l").value, +$("r-eps").value, 3, 600);
  const names = ["v = (eps Id + zeta)^-1 (s)", "zeta(v)", "mu_eps(s)"];
  legend($("r-legend"), names);
  plot($("r-plot"), c.x, [c.series(0), c.series(1), c.series(2)], COLORS);
}

await init();
const bind = (button, err, f) => { const g = guarded($(err), f); $(button).addEventListener("click", g); g(); };
bind("k-run", "k-error", drawKernel);
bind("d-run", "d-error", drawDisk);
bind("r-run", "r-error", drawResolvent);
