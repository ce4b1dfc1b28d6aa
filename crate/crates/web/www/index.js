import init, { load_profile, cell_trace, TrainingRace } from "./pkg/deepdeff_web.js";

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22", "#aec7e8", "#98df8a"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// series: [{ name, values, color }]; null values break the line
function plot(canvas, series, { xlabels = null } = {}) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.scale(dpr, dpr);
  ctx.clearRect(0, 0, w, h);

  const finite = series.flatMap((s) => s.values.filter((v) => v !== null && Number.isFinite(v)));
  if (finite.length === 0) return;
  let lo = Math.min(...finite), hi = Math.max(...finite);
  if (hi === lo) { hi += 1; lo -= 1; }
  const n = Math.max(...series.map((s) => s.values.length));
  const pad = { l: 48, r: 8, t: 8, b: 20 };
  const x = (i) => pad.l + (i / Math.max(n - 1, 1)) * (w - pad.l - pad.r);
  const y = (v) => h - pad.b - ((v - lo) / (hi - lo)) * (h - pad.t - pad.b);

  ctx.fillStyle = "#666";
  ctx.font = "11px system-ui";
  ctx.strokeStyle = "#eee";
  for (let k = 0; k <= 4; k++) {
    const v = lo + (k / 4) * (hi - lo);
    ctx.beginPath();
    ctx.moveTo(pad.l, y(v));
    ctx.lineTo(w - pad.r, y(v));
    ctx.stroke();
    ctx.fillText(v.toPrecision(3), 2, y(v) + 4);
  }
  if (xlabels && xlabels.length) {
    for (const i of [0, Math.floor((n - 1) / 2), n - 1]) {
      const label = xlabels[i] ?? "";
      const tw = ctx.measureText(label).width;
      ctx.fillText(label, Math.min(Math.max(x(i) - tw / 2, pad.l), w - tw), h - 5);
    }
  }

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width ?? 1.5;
    ctx.beginPath();
    let pen = false;
    s.values.forEach((v, i) => {
      if (v === null || !Number.isFinite(v)) { pen = false; return; }
      pen ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v));
      pen = true;
    });
    ctx.stroke();
  }
}

function legend(el, series) {
  el.innerHTML = series.map((s) => `<span><i style="background:${s.color}"></i>${s.name}</span>`).join("");
}

function fail(el, err) {
  el.textContent = String(err);
  el.classList.add("error");
}

function drawProfile() {
  try {
    const p = JSON.parse(load_profile(num("p-days"), num("p-interval"), num("p-noise"), num("p-seed"), num("p-window")));
    const series = [
      { name: "load (kW)", values: p.load, color: PALETTE[0] },
      { name: "window mean", values: p.window_mean, color: PALETTE[1] },
      { name: "window std", values: p.window_std, color: PALETTE[2] },
    ];
    plot($("p-canvas"), series, { xlabels: p.labels });
    legend($("p-legend"), series);
    $("p-legend").classList.remove("error");
  } catch (e) {
    fail($("p-legend"), e);
  }
}

function drawCell() {
  try {
    const hidden = num("c-hidden"), steps = num("c-steps");
    const flat = cell_trace($("c-kind").value, hidden, steps, num("c-seed"));
    const series = [{ name: "input", values: Array.from({ length: steps }, (_, t) => (t >= Math.floor(steps / 4) ? 1 : 0)), color: "#bbb", width: 1 }];
    for (let j = 0; j < hidden; j++) {
      series.push({ name: `h${j}`, values: Array.from({ length: steps }, (_, t) => flat[t * hidden + j]), color: PALETTE[j % PALETTE.length] });
    }
    plot($("c-canvas"), series);
  } catch (e) {
    console.error(e);
  }
}

let race = null;
let running = false;
const history = { deepdeff: [], basic: [] };

function stopRace() {
  running = false;
  $("r-start").disabled = false;
  $("r-stop").disabled = true;
}

function drawCurves() {
  const c = JSON.parse(race.curves());
  const series = [
    { name: "actual", values: c.actual, color: "#444" },
    { name: `DeepDeFF (test MAPE ${c.deepdeff_mape.toFixed(2)}%)`, values: c.deepdeff, color: PALETTE[1] },
    { name: `basic (test MAPE ${c.basic_mape.toFixed(2)}%)`, values: c.basic, color: PALETTE[0] },
  ];
  plot($("r-curves"), series, { xlabels: c.labels });
  legend($("r-curves-legend"), series);
}

function tick() {
  if (!running) return;
  try {
    const s = JSON.parse(race.step());
    history.deepdeff.push(s.deepdeff.validation_mape);
    history.basic.push(s.basic.validation_mape);
    const row = (name, r) => `${name.padEnd(9)} epoch ${String(r.epoch).padStart(3)}  train ${r.train_loss.toFixed(3).padStart(8)}  val MAPE ${r.validation_mape.toFixed(2).padStart(6)}%  best ${r.best_validation_mape.toFixed(2)}%${r.done ? "  stopped" : ""}`;
    $("race-status").textContent = `${row("DeepDeFF", s.deepdeff)}\n${row("basic", s.basic)}`;
    const series = [
      { name: "DeepDeFF validation MAPE (%)", values: history.deepdeff, color: PALETTE[1] },
      { name: "basic validation MAPE (%)", values: history.basic, color: PALETTE[0] },
    ];
    plot($("r-loss"), series);
    legend($("r-loss-legend"), series);
    if (s.deepdeff.epoch % 5 === 0 || race.finished) drawCurves();
    if (race.finished) {
      drawCurves();
      stopRace();
      return;
    }
  } catch (e) {
    fail($("race-status"), e);
    stopRace();
    return;
  }
  // yield to the browser between epochs so the page stays responsive
  setTimeout(tick, 0);
}

function startRace() {
  try {
    race?.free();
    race = new TrainingRace($("r-method").value, num("r-k"), num("r-interval"), 0.05, num("r-seed"));
  } catch (e) {
    fail($("race-status"), e);
    return;
  }
  $("race-status").classList.remove("error");
  history.deepdeff = [];
  history.basic = [];
  running = true;
  $("r-start").disabled = true;
  $("r-stop").disabled = false;
  tick();
}

await init();
for (const id of ["p-days", "p-interval", "p-noise", "p-window", "p-seed"]) $(id).addEventListener("input", drawProfile);
for (const id of ["c-kind", "c-hidden", "c-steps", "c-seed"]) $(id).addEventListener("input", drawCell);
$("r-start").addEventListener("click", startRace);
$("r-stop").addEventListener("click", stopRace);
window.addEventListener("resize", () => { drawProfile(); drawCell(); });
drawProfile();
drawCell();
