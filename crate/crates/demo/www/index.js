import init, { explain, compare_aspects, recall_curve } from "./pkg/dualrep_demo.js";

const $ = (id) => document.getElementById(id);

function guarded(out, fn) {
  try {
    out.classList.remove("err");
    fn();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e);
  }
}

// white → dark blue; negative similarities are clamped to white
function shade(v) {
  const t = Math.max(0, Math.min(1, v));
  const c = (a, b) => Math.round(a + (b - a) * t);
  return `rgb(${c(255, 8)},${c(255, 48)},${c(255, 107)})`;
}

function drawHeatmap(canvas, r) {
  const ctx = canvas.getContext("2d");
  const left = 110, top = 90, cell = Math.min(34, Math.floor((canvas.width - left - 10) / Math.max(1, r.doc_tokens.length)));
  canvas.height = top + cell * r.query_tokens.length + 10;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px system-ui";
  r.doc_tokens.forEach((t, j) => {
    ctx.save();
    ctx.translate(left + j * cell + cell / 2, top - 6);
    ctx.rotate(-Math.PI / 3);
    ctx.fillStyle = "#333";
    ctx.fillText(t, 0, 0);
    ctx.restore();
  });
  r.matrix.forEach((row, i) => {
    ctx.fillStyle = "#333";
    ctx.textAlign = "right";
    ctx.fillText(r.query_tokens[i], left - 6, top + i * cell + cell * 0.65);
    ctx.textAlign = "left";
    row.forEach((v, j) => {
      ctx.fillStyle = shade(v);
      ctx.fillRect(left + j * cell, top + i * cell, cell - 1, cell - 1);
    });
    const j = r.argmax[i];
    ctx.strokeStyle = "#e36209";
    ctx.lineWidth = 2;
    ctx.strokeRect(left + j * cell + 1, top + i * cell + 1, cell - 3, cell - 3);
  });
}

function runExplain() {
  guarded($("ex-out"), () => {
    const r = JSON.parse(explain($("ex-query").value, $("ex-passage").value, 0));
    drawHeatmap($("ex-canvas"), r);
    const parts = r.query_tokens.map((t, i) => `${t}→${r.doc_tokens[r.argmax[i]]} ${r.contributions[i].toFixed(3)}`);
    $("ex-out").textContent = `max-sim score ${r.score.toFixed(4)}  =  ${parts.join("  +  ")}`;
  });
}

function drawBars(canvas, groups) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px system-ui";
  const base = canvas.height - 30, scale = (base - 20) / 2, zero = 20 + scale;
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(40, zero);
  ctx.lineTo(canvas.width - 10, zero);
  ctx.stroke();
  groups.forEach((g, i) => {
    const x = 80 + i * 250;
    ctx.fillStyle = g.color;
    const h = Math.max(-1, Math.min(1, g.value)) * scale;
    ctx.fillRect(x, zero - Math.max(h, 0), 80, Math.abs(h));
    ctx.fillStyle = "#333";
    ctx.fillText(`${g.label}: ${g.value.toFixed(3)}`, x - 10, canvas.height - 10);
  });
}

function runAspects() {
  guarded($("asp-out"), () => {
    const r = JSON.parse(compare_aspects($("asp-query").value, $("asp-a").value, $("asp-b").value, 0));
    drawBars($("asp-canvas"), [
      { label: "multi gap (A−B)", value: r.multi.normalised_gap, color: "#2b6cb0" },
      { label: "single gap (A−B)", value: r.single.normalised_gap, color: "#c05621" },
    ]);
    $("asp-out").textContent =
      `multi:  A ${r.multi.a.toFixed(3)}  B ${r.multi.b.toFixed(3)}  (gap / self-score ${r.multi.normalised_gap.toFixed(3)})\n` +
      `single: A ${r.single.a.toFixed(3)}  B ${r.single.b.toFixed(3)}  (gap ${r.single.normalised_gap.toFixed(3)})`;
  });
}

function drawCurve(canvas, c) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px system-ui";
  const l = 50, r = canvas.width - 20, t = 20, b = canvas.height - 40;
  const n = c.points.length;
  const x = (i) => l + (n === 1 ? 0 : (i * (r - l)) / (n - 1));
  const y = (v) => b - v * (b - t);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(l, t, r - l, b - t);
  ctx.fillStyle = "#333";
  [0, 0.5, 1].forEach((v) => ctx.fillText(v.toFixed(1), 20, y(v) + 4));
  c.points.forEach((p, i) => ctx.fillText(String(p.nprobe), x(i) - 4, b + 16));
  ctx.fillText("nprobe", (l + r) / 2 - 20, b + 32);
  [["nearest", "#2b6cb0"], ["overlap", "#c05621"]].forEach(([key, color]) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    c.points.forEach((p, i) => (i ? ctx.lineTo(x(i), y(p[key])) : ctx.moveTo(x(i), y(p[key]))));
    ctx.stroke();
  });
}

function runRecall() {
  $("rc-out").textContent = "building…";
  // let the status paint before the synchronous build
  setTimeout(() => guarded($("rc-out"), () => {
    const c = JSON.parse(recall_curve(+$("rc-n").value, +$("rc-clusters").value, +$("rc-nlist").value, +$("rc-seed").value));
    drawCurve($("rc-canvas"), c);
    $("rc-out").textContent =
      `n=${c.n} dim=${c.dim} nlist=${c.nlist} m=${c.m} ks=${c.ks}\n` +
      "blue: nearest neighbour in top 10   orange: top-10 overlap\n" +
      c.points.map((p) => `nprobe ${p.nprobe}: ${p.nearest.toFixed(3)} / ${p.overlap.toFixed(3)}`).join("\n");
  }), 10);
}

await init();
$("ex-run").onclick = runExplain;
$("asp-run").onclick = runAspects;
$("rc-run").onclick = runRecall;
runExplain();
runAspects();
