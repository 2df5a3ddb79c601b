import init, { exit_curve, tv_curve, young_curve } from "./pkg/feller_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plot(canvas, xs, series, yMax) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 36;
  ctx.clearRect(0, 0, w, h);
  const xMax = Math.max(...xs);
  const finite = series.flatMap((s) => s.ys).filter((y) => y !== null && Number.isFinite(y));
  const top = yMax ?? Math.max(1e-12, ...finite);
  const px = (x) => pad + (x / xMax) * (w - 2 * pad);
  const py = (y) => h - pad - (Math.min(y, top) / top) * (h - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText("0", pad - 10, h - pad + 12);
  ctx.fillText(xMax.toPrecision(3), w - pad - 10, h - pad + 12);
  ctx.fillText(top.toPrecision(3), 2, pad + 4);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    let pen = false;
    xs.forEach((x, i) => {
      const y = s.ys[i];
      if (y === null || !Number.isFinite(y)) { pen = false; return; }
      pen ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y));
      pen = true;
    });
    ctx.stroke();
  }
}

function show(id, out) {
  const el = $(id);
  el.className = out.error ? "err" : "note";
  return el;
}

function runExit() {
  const out = JSON.parse(exit_curve($("ex-kind").value, num("ex-param"), num("ex-r"), num("ex-t"), num("ex-paths"), 1n));
  const msg = show("ex-msg", out);
  if (out.error) { msg.textContent = out.error; return; }
  plot($("ex-plot"), out.times, [
    { color: "#1f5fbf", ys: out.p_exit },
    { color: "#c03030", ys: out.p_exit_bound },
    { color: "#999", ys: out.p_survive_bound.map((s) => 1 - s) },
  ], 1);
  msg.textContent = `H = ${out.big_h}, h = ${out.small_h}, censored paths ${out.censored}`;
}

function runTv() {
  const out = JSON.parse(tv_curve($("tv-kind").value, num("tv-param"), num("tv-t"), num("tv-gap"), 12, num("tv-paths"), 2n));
  const msg = show("tv-msg", out);
  if (out.error) { msg.textContent = out.error; return; }
  plot($("tv-plot"), out.gaps, [
    { color: "#1f5fbf", ys: out.tv },
    { color: "#7fa6e0", ys: out.tv.map((v, i) => v + 3 * out.se[i] + out.binning_allowance[i]) },
  ], 1);
  msg.textContent = `strong Feller signature: ${out.strong_feller_signature}`;
}

function runYoung() {
  const out = JSON.parse(young_curve($("yg-kind").value, num("yg-p"), num("yg-c"), num("yg-x"), 200));
  const msg = show("yg-msg", out);
  if (out.error) { msg.textContent = out.error; return; }
  plot($("yg-plot"), out.x, [
    { color: "#1f5fbf", ys: out.phi },
    { color: "#c03030", ys: out.conjugate },
  ]);
  msg.textContent = "";
}

await init();
$("ex-run").onclick = runExit;
$("tv-run").onclick = runTv;
for (const id of ["yg-kind", "yg-p", "yg-c", "yg-x"]) $(id).oninput = runYoung;
runYoung();
