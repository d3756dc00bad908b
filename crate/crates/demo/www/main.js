// Built with: wasm-pack build crates/demo --target web --out-dir www/pkg
import init, { dataset, fitSticc, kmeans } from "./pkg/sticc_demo.js";

const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];
const $ = (id) => document.getElementById(id);
let data = null;

function status(text) {
  $("status").textContent = text;
}

function draw(canvas, labels, permutation) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const sx = canvas.width / 100, sy = canvas.height / 60;
  labels.forEach((l, i) => {
    // Map predicted labels onto the truth colours when a matching is known.
    const c = permutation ? permutation[l] : l;
    ctx.fillStyle = PALETTE[c % PALETTE.length];
    ctx.beginPath();
    ctx.arc(data.x[i] * sx, canvas.height - data.y[i] * sy, 2.5, 0, 2 * Math.PI);
    ctx.fill();
  });
}

function row(table, cells) {
  const tr = document.createElement("tr");
  for (const c of cells) {
    const td = document.createElement("td");
    td.textContent = c;
    tr.appendChild(td);
  }
  $(table).querySelector("tbody").appendChild(tr);
}

function clear(table) {
  $(table).querySelector("tbody").innerHTML = "";
}

function seed() {
  return Number($("seed").value) >>> 0;
}

function timed(label, fn) {
  status(label + "…");
  // Let the status repaint before the blocking call.
  return new Promise((resolve) => setTimeout(() => {
    const t0 = performance.now();
    try {
      const out = JSON.parse(fn());
      status(`${label} done in ${((performance.now() - t0) / 1000).toFixed(2)} s`);
      resolve(out);
    } catch (e) {
      status(`${label} failed: ${e}`);
      resolve(null);
    }
  }, 10));
}

async function onGenerate() {
  const out = await timed("Generating", () => dataset(seed()));
  if (!out) return;
  data = out;
  data.seed = seed();
  draw($("truth"), data.truth, null);
  $("result").getContext("2d").clearRect(0, 0, 500, 300);
  clear("metrics");
  clear("clusters");
}

function report(name, out, iterations) {
  const m = out.metrics;
  row("metrics", [name, m.ari.toFixed(3), m.macro_f1.toFixed(3), m.join_count.ratio.toFixed(3), iterations]);
  draw($("result"), out.labels, m.permutation);
  $("result-caption").textContent = name;
}

async function onFit() {
  const k = Number($("k").value), r = Number($("radius").value);
  const beta = Number($("beta").value), lam = Number($("lambda").value);
  const out = await timed("Fitting STICC", () => fitSticc(data.seed, k, r, beta, lam));
  if (!out) return;
  report(`STICC K=${k} R=${r} β=${beta} λ=${lam}`, out, out.iterations + (out.converged ? "" : " (not converged)"));
  clear("clusters");
  out.clusters.forEach((c, i) => row("clusters", [i, c.members, c.ranking.join(" > ")]));
}

async function onKmeans() {
  const k = Number($("k").value), spatial = $("spatial").checked;
  const out = await timed("Running K-Means", () => kmeans(data.seed, k, spatial));
  if (!out) return;
  report(spatial ? `Spatial K-Means K=${k}` : `K-Means K=${k}`, out, "");
}

await init();
$("generate").onclick = onGenerate;
$("fit").onclick = () => { if (data) onFit(); };
$("kmeans").onclick = () => { if (data) onKmeans(); };
await onGenerate();
