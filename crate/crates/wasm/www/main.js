import init, { partition_demo, shapley_demo, glyph_demo } from "./pkg/flowshap_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function palette(i) {
  return `hsl(${(i * 137.508) % 360} 65% 55%)`;
}

function runPartition() {
  const info = $("p-info");
  try {
    const doc = JSON.parse(partition_demo(num("p-n"), num("p-k"), num("p-seed")));
    const ctx = $("p-canvas").getContext("2d");
    ctx.clearRect(0, 0, doc.width, doc.height);
    doc.cells.forEach((ring, i) => {
      if (ring.length === 0) return;
      ctx.beginPath();
      ring.forEach(([x, y], j) => (j ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
      ctx.closePath();
      ctx.fillStyle = palette(i).replace("55%)", "90%)");
      ctx.fill();
      ctx.strokeStyle = "#777";
      ctx.stroke();
    });
    for (const [x, y, c] of doc.points) {
      ctx.fillStyle = palette(c);
      ctx.fillRect(x - 1.5, y - 1.5, 3, 3);
    }
    ctx.fillStyle = "#000";
    for (const [x, y] of doc.centroids) {
      ctx.beginPath();
      ctx.arc(x, y, 4, 0, 2 * Math.PI);
      ctx.fill();
    }
    const h = doc.inertia_history;
    info.className = "";
    info.textContent = `${h.length} Lloyd steps, inertia ${h[0].toFixed(0)} → ${h[h.length - 1].toFixed(0)}`;
  } catch (e) {
    info.className = "err";
    info.textContent = String(e);
  }
}

function runShapley() {
  const out = $("s-out");
  try {
    const doc = JSON.parse(shapley_demo($("s-w").value, num("s-q"), num("s-m"), num("s-seed")));
    const rows = doc.players
      .map((p, i) => `<tr><td>${i}</td><td>${p.weight}</td>` +
        `<td>${p.exact === null ? "–" : p.exact.toFixed(4)}</td>` +
        `<td>${p.sampled.toFixed(4)}</td><td>±${p.stderr.toFixed(4)}</td></tr>`)
      .join("");
    out.className = "";
    out.innerHTML =
      `<table><tr><th>player</th><th>weight</th><th>exact φ</th><th>sampled φ</th><th>stderr</th></tr>${rows}</table>` +
      `<p>${doc.exact_evaluations} coalition evaluations exact, ${doc.sampled_evaluations} sampled.</p>`;
  } catch (e) {
    out.className = "err";
    out.textContent = String(e);
  }
}

const neighbors = [];
const SVG = "http://www.w3.org/2000/svg";

function el(name, attrs) {
  const e = document.createElementNS(SVG, name);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  return e;
}

function radarPath(values, scale) {
  // sector i is centered on bearing 45°·i, clockwise from north
  const pts = values.map((v, i) => {
    const a = (i * Math.PI) / 4;
    return [Math.sin(a) * v * scale, -Math.cos(a) * v * scale];
  });
  return "M" + pts.map(([x, y]) => `${x.toFixed(1)},${y.toFixed(1)}`).join("L") + "Z";
}

function drawGlyph() {
  const svg = $("glyph-board");
  svg.replaceChildren();
  for (let i = 0; i < 8; i++) {
    const a = (i * Math.PI) / 4;
    svg.append(el("line", { x1: 0, y1: 0, x2: Math.sin(a) * 200, y2: -Math.cos(a) * 200, stroke: "#eee" }));
  }
  const doc = JSON.parse(glyph_demo(JSON.stringify(neighbors)));
  const peak = Math.max(1e-9, ...doc.sectors.flatMap((s) => [s.pos, s.neg]));
  const scale = 150 / peak;
  svg.append(el("path", { d: radarPath(doc.sectors.map((s) => s.pos), scale), fill: "rgba(200,30,30,.35)", stroke: "#c00" }));
  svg.append(el("path", { d: radarPath(doc.sectors.map((s) => s.neg), scale), fill: "rgba(30,60,200,.35)", stroke: "#14c" }));
  doc.sectors.forEach((s, i) => {
    const a = (i * Math.PI) / 4;
    const t = el("text", { x: Math.sin(a) * 190, y: -Math.cos(a) * 190 + 4, "text-anchor": "middle", "font-size": 12 });
    t.textContent = s.dir;
    svg.append(t);
  });
  for (const n of neighbors) {
    svg.append(el("circle", { cx: n.dx, cy: -n.dy, r: 4, fill: n.phi >= 0 ? "#c00" : "#14c" }));
  }
  svg.append(el("circle", { cx: 0, cy: 0, r: 5, fill: "#000" }));
  $("g-info").textContent = `${neighbors.length} neighbors, Σφ = ${doc.total_phi.toFixed(3)}, Σ sectors (pos − neg) = ${doc.net.toFixed(3)}`;
}

function addNeighbor(ev) {
  const svg = $("glyph-board");
  const pt = svg.createSVGPoint();
  pt.x = ev.clientX;
  pt.y = ev.clientY;
  const p = pt.matrixTransform(svg.getScreenCTM().inverse());
  const mag = num("g-phi");
  neighbors.push({ dx: p.x, dy: -p.y, phi: ev.shiftKey ? -mag : mag });
  drawGlyph();
}

await init();
$("p-run").addEventListener("click", runPartition);
$("s-run").addEventListener("click", runShapley);
$("glyph-board").addEventListener("click", addNeighbor);
$("g-clear").addEventListener("click", () => {
  neighbors.length = 0;
  drawGlyph();
});
runPartition();
runShapley();
drawGlyph();
