import init, { mseCurves, matchPoints, exploreGap } from "./pkg/pairdesign_demo.js";

const $ = (id) => document.getElementById(id);
const COLORS = { bcrd: "#c0392b", block: "#2980b9", pm: "#27ae60" };

function show(el, text, isError) {
  el.textContent = text;
  el.className = isError ? "err" : "";
}

function drawCurves() {
  const canvas = $("curves");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  let points;
  try {
    points = JSON.parse(mseCurves(+$("b0").value, +$("b1").value, +$("bt").value, $("link").value, +$("blocks").value, 256));
  } catch (e) {
    show($("curves-msg"), e.message ?? String(e), true);
    return;
  }
  if (points.length === 0) {
    show($("curves-msg"), "no sample size splits into that many even blocks", true);
    return;
  }
  const pad = 50;
  const w = canvas.width - 2 * pad, h = canvas.height - 2 * pad;
  const xs = points.map((p) => p.n_subjects);
  const ys = points.flatMap((p) => [p.bcrd, p.block, p.pm]).map(Math.log10);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * w;
  const sy = (y) => pad + h - ((Math.log10(y) - y0) / (y1 - y0 || 1)) * h;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#444";
  ctx.fillText(`2n = ${x0}`, pad, pad + h + 15);
  ctx.fillText(`${x1}`, pad + w - 20, pad + h + 15);
  ctx.fillText(`log10 MSE ${y1.toFixed(2)}`, 5, pad - 8);
  ctx.fillText(`${y0.toFixed(2)}`, 5, pad + h);
  Object.entries(COLORS).forEach(([key, color], k) => {
    ctx.strokeStyle = color;
    ctx.beginPath();
    points.forEach((p, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, sx(p.n_subjects), sy(p[key])));
    ctx.stroke();
    ctx.fillStyle = color;
    ctx.fillText(key === "block" ? `block:${$("blocks").value}` : key, pad + w - 80, pad + 15 + 14 * k);
  });
  const last = points[points.length - 1];
  show($("curves-msg"), `at 2n = ${last.n_subjects}: bcrd / pm = ${(last.bcrd / last.pm).toFixed(2)}`, false);
}

const pts = [];

function drawPoints() {
  const canvas = $("points");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const segment = ([i, j], dashed) => {
    ctx.setLineDash(dashed ? [4, 4] : []);
    ctx.beginPath();
    ctx.moveTo(...pts[i]);
    ctx.lineTo(...pts[j]);
    ctx.stroke();
  };
  if (pts.length >= 4 && pts.length % 2 === 0) {
    try {
      const m = JSON.parse(matchPoints(JSON.stringify(pts)));
      ctx.strokeStyle = "#aaa";
      m.greedy.forEach((p) => segment(p, true));
      ctx.strokeStyle = "#27ae60";
      ctx.lineWidth = 2;
      m.optimal.forEach((p) => segment(p, false));
      ctx.lineWidth = 1;
      show($("points-msg"), `total distance: optimal ${m.optimal_total.toFixed(3)}, greedy ${m.greedy_total.toFixed(3)}`, false);
    } catch (e) {
      show($("points-msg"), e.message ?? String(e), true);
    }
  } else {
    show($("points-msg"), `${pts.length} points`, false);
  }
  ctx.setLineDash([]);
  ctx.fillStyle = "#222";
  pts.forEach(([x, y]) => ctx.fillRect(x - 3, y - 3, 6, 6));
}

function explore() {
  try {
    const v = $("v").value.split(/[\s,]+/).filter(Boolean).map(Number);
    const r = JSON.parse(exploreGap(JSON.stringify(v), $("mode").value, BigInt($("seed").value || 0)));
    const pairs = r.pairs.map(([i, j]) => `(${v[i]}, ${v[j]})`).join(" ");
    show(
      $("gap"),
      `pairs: ${pairs}\n` +
        `MSE(BCRD) - MSE(PM) = ${r.gap_bcrd_minus_pm.toExponential(4)}\n` +
        `match R² = ${r.r_squared === null ? "undefined (constant v)" : r.r_squared.toFixed(4)}` +
        `   random-pairing expectation = ${r.bcrd_expected_r_squared.toFixed(4)}\n` +
        (r.bcrd_beats_pm ? "complete randomization is better for this pairing" : "this pairing is at least as good as complete randomization"),
      false,
    );
  } catch (e) {
    show($("gap"), e.message ?? String(e), true);
  }
}

await init();
["b0", "b1", "bt", "link", "blocks"].forEach((id) => $(id).addEventListener("input", drawCurves));
["v", "mode", "seed"].forEach((id) => $(id).addEventListener("input", explore));
$("points").addEventListener("click", (ev) => {
  if (ev.shiftKey) pts.length = 0;
  else pts.push([ev.offsetX, ev.offsetY]);
  drawPoints();
});
[[120, 80], [160, 110], [600, 300], [640, 260], [400, 60], [430, 120], [200, 300], [700, 90]].forEach((p) => pts.push(p));
drawCurves();
drawPoints();
explore();
