import init, { generate, index_curves, event_study, amount_histogram } from "./pkg/lockdown_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

function call(f, req) {
  try {
    $("error").textContent = "";
    return JSON.parse(f(JSON.stringify(req)));
  } catch (e) {
    $("error").textContent = String(e.message ?? e);
    return null;
  }
}

function setupCanvas(canvas) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  ctx.clearRect(0, 0, w, h);
  ctx.font = "11px system-ui, sans-serif";
  return { ctx, w, h };
}

// Linear scale from [d0, d1] onto [r0, r1].
const scale = (d0, d1, r0, r1) => (v) => r0 + ((v - d0) / (d1 - d0 || 1)) * (r1 - r0);

function axes(ctx, box, x, y, yTicks, xLabels) {
  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#555";
  ctx.lineWidth = 1;
  ctx.strokeRect(box.l, box.t, box.r - box.l, box.b - box.t);
  ctx.textAlign = "right";
  for (const v of yTicks) {
    ctx.fillText(v.toFixed(2), box.l - 4, y(v) + 3);
  }
  ctx.textAlign = "center";
  for (const [v, label] of xLabels) {
    ctx.fillText(label, x(v), box.b + 14);
  }
}

function ticks(lo, hi, n = 5) {
  return Array.from({ length: n + 1 }, (_, i) => lo + ((hi - lo) * i) / n);
}

const DAY = 86400000;
const dateAt = (start, i) => new Date(Date.parse(start) + i * DAY);

let scenario = null;

function runGenerate() {
  $("summary").textContent = "generating...";
  setTimeout(() => {
    const g = call(generate, {
      seed: Number($("seed").value),
      noise_scale: Number($("noise").value),
      effect_scale: Number($("effect").value),
    });
    if (!g) return;
    scenario = g;
    $("summary").textContent =
      `${g.transactions.toLocaleString()} transactions, ${g.dropped.toLocaleString()} filtered out, ` +
      `${g.authorities} authorities. Events: ` +
      g.events.map((e) => `${e.event} (${e.announcement_date})`).join(", ") +
      (g.skipped.length ? `; skipped without a control: ${g.skipped.join(", ")}` : "");
    $("event").innerHTML = g.events.map((e) => `<option>${e.event}</option>`).join("");
    drawCurves();
    drawStudy();
  }, 10);
}

function drawCurves() {
  if (!scenario) return;
  const c = call(index_curves, { window: Number($("window").value), filter: $("filter").value });
  if (!c) return;
  const { ctx, w, h } = setupCanvas($("curves"));
  const box = { l: 44, r: w - 10, t: 10, b: h - 22 };
  const n = Math.max(...c.curves.map((s) => s.values.length));
  const vals = c.curves.flatMap((s) => s.values.filter((v) => v !== null));
  const lo = Math.min(...vals), hi = Math.max(...vals);
  const x = scale(0, n - 1, box.l, box.r);
  const y = scale(lo, hi, box.b, box.t);
  const months = [];
  for (let i = 0; i < n; i++) {
    const d = dateAt(c.start, i);
    if (d.getUTCDate() === 1) months.push([i, d.toISOString().slice(0, 7)]);
  }
  axes(ctx, box, x, y, ticks(lo, hi), months);

  const events = scenario.events.map((e) => e.event);
  for (const e of scenario.events) {
    const i = (Date.parse(e.announcement_date) - Date.parse(c.start)) / DAY;
    ctx.strokeStyle = COLORS[events.indexOf(e.event) % COLORS.length];
    ctx.setLineDash([2, 3]);
    ctx.beginPath();
    ctx.moveTo(x(i), box.t);
    ctx.lineTo(x(i), box.b);
    ctx.stroke();
  }
  for (const s of c.curves) {
    ctx.strokeStyle = COLORS[events.indexOf(s.event) % COLORS.length];
    ctx.setLineDash(s.role === "control" ? [6, 4] : []);
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let pen = false;
    s.values.forEach((v, i) => {
      if (v === null) { pen = false; return; }
      pen ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v));
      pen = true;
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);
  ctx.textAlign = "left";
  c.curves.forEach((s, k) => {
    ctx.fillStyle = COLORS[events.indexOf(s.event) % COLORS.length];
    ctx.fillText(`${s.group}${s.role === "control" ? " (control)" : ""}`, box.l + 8, box.t + 14 + 13 * k);
  });
}

function drawStudy() {
  if (!scenario || !$("event").value) return;
  const r = call(event_study, {
    event: $("event").value,
    spec: $("spec").value,
    outcome: $("outcome").value,
    cluster_key: $("cluster").value,
    cr: $("cr").value,
    window: Number($("window").value),
  });
  if (!r) return;
  const rows = r.rows;
  const { ctx, w, h } = setupCanvas($("study"));
  const box = { l: 54, r: w - 10, t: 10, b: h - 22 };
  const vals = rows.flatMap((q) => [q.lo, q.hi, q.truth ?? q.estimate, 0]);
  const pad = (Math.max(...vals) - Math.min(...vals)) * 0.1 || 0.01;
  const lo = Math.min(...vals) - pad, hi = Math.max(...vals) + pad;
  const x = scale(-0.5, rows.length - 0.5, box.l, box.r);
  const y = scale(lo, hi, box.b, box.t);
  axes(ctx, box, x, y, ticks(lo, hi), rows.map((q, i) => [i, q.week === null ? "Treat x After" : `W${q.week}`]));
  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.moveTo(box.l, y(0));
  ctx.lineTo(box.r, y(0));
  ctx.stroke();
  rows.forEach((q, i) => {
    ctx.strokeStyle = ctx.fillStyle = COLORS[0];
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(x(i), y(q.lo));
    ctx.lineTo(x(i), y(q.hi));
    ctx.stroke();
    ctx.beginPath();
    ctx.arc(x(i), y(q.estimate), 4, 0, 2 * Math.PI);
    ctx.fill();
    if (q.truth !== null) {
      ctx.strokeStyle = COLORS[1];
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(x(i) - 10, y(q.truth));
      ctx.lineTo(x(i) + 10, y(q.truth));
      ctx.stroke();
    }
  });
  ctx.textAlign = "left";
  ctx.fillStyle = COLORS[0];
  ctx.fillText("estimate with 95% interval", box.l + 8, box.t + 14);
  ctx.fillStyle = COLORS[1];
  ctx.fillText("effect induced in the index", box.l + 8, box.t + 28);

  const fmt = (v) => (v === null || v === undefined ? "" : v.toFixed(4));
  $("study-table").innerHTML =
    "<tr><th>term</th><th>estimate</th><th>se</th><th>truth</th><th>planted</th></tr>" +
    rows
      .map((q) => `<tr><td>${q.term}</td><td>${fmt(q.estimate)}${q.stars}</td><td>(${fmt(q.se)})</td>` +
        `<td>${fmt(q.truth)}</td><td>${fmt(q.planted)}</td></tr>`)
      .join("") +
    `<tr><td>Observations</td><td>${r.n_obs}</td></tr><tr><td>Clusters</td><td>${r.n_clusters}</td></tr>`;
  $("fingerprint").textContent = r.fingerprint +
    (r.post_weeks < 4 ? `; data end after ${r.post_weeks} post weeks` : "");
}

function drawHistogram() {
  const r = call(amount_histogram, {
    median_pence: Number($("median").value),
    mean_pence: Number($("mean").value),
    n: Number($("draws").value),
  });
  if (!r) return;
  const { ctx, w, h } = setupCanvas($("hist"));
  const box = { l: 44, r: w - 10, t: 10, b: h - 22 };
  const n = r.counts.length;
  const top = Math.max(...r.counts);
  const x = scale(0, n, box.l, box.r);
  const y = scale(0, top, box.b, box.t);
  const labels = [];
  for (let i = 0; i <= n; i += Math.ceil(n / 8)) {
    labels.push([i, "£" + (r.edges[i] / 100).toFixed(r.edges[i] < 100 ? 2 : 0)]);
  }
  ctx.strokeStyle = "#999";
  ctx.strokeRect(box.l, box.t, box.r - box.l, box.b - box.t);
  ctx.fillStyle = "#555";
  ctx.textAlign = "center";
  for (const [i, label] of labels) ctx.fillText(label, x(i), box.b + 14);
  ctx.textAlign = "right";
  ctx.fillText(String(top), box.l - 4, box.t + 8);
  ctx.fillText("0", box.l - 4, box.b);
  ctx.fillStyle = COLORS[0];
  r.counts.forEach((c, i) => {
    ctx.fillRect(x(i) + 1, y(c), x(i + 1) - x(i) - 2, box.b - y(c));
  });
  $("hist-summary").textContent =
    `log-normal mu ${r.mu.toFixed(3)}, sigma ${r.sigma.toFixed(3)}; ` +
    `sample median £${(r.sample_median / 100).toFixed(2)}, mean £${(r.sample_mean / 100).toFixed(2)}`;
}

await init();
$("generate").addEventListener("click", runGenerate);
for (const id of ["window", "filter"]) $(id).addEventListener("change", () => { drawCurves(); drawStudy(); });
for (const id of ["event", "spec", "outcome", "cluster", "cr"]) $(id).addEventListener("change", drawStudy);
for (const id of ["median", "mean", "draws"]) $(id).addEventListener("change", drawHistogram);
window.addEventListener("resize", () => { drawCurves(); drawStudy(); drawHistogram(); });
drawHistogram();
runGenerate();
