import init, { soften, schedule, compareOnBlobs } from "./pkg/retrolearn_web.js";

const STD = "#c0392b";
const LWR = "#2471a3";
const $ = (id) => document.getElementById(id);

function clear(canvas) {
  const g = canvas.getContext("2d");
  g.clearRect(0, 0, canvas.width, canvas.height);
  g.font = "11px system-ui";
  return g;
}

function line(g, xs, ys, w, h, color, pad = 24) {
  g.strokeStyle = color;
  g.lineWidth = 2;
  g.beginPath();
  let started = false;
  xs.forEach((x, i) => {
    if (Number.isNaN(ys[i])) return;
    const px = pad + x * (w - 2 * pad);
    const py = h - pad - ys[i] * (h - 2 * pad);
    started ? g.lineTo(px, py) : g.moveTo(px, py);
    started = true;
  });
  g.stroke();
}

function axes(g, w, h, pad = 24) {
  g.strokeStyle = "#999";
  g.lineWidth = 1;
  g.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  g.fillStyle = "#666";
  g.fillText("1", 4, pad + 4);
  g.fillText("0", 4, h - pad);
}

function drawSoften() {
  const canvas = $("soft");
  const tau = parseFloat($("tau-soft").value);
  $("tau-soft-v").textContent = tau;
  const g = clear(canvas);
  const logits = $("logits").value.split(",").map(Number).filter((v) => !Number.isNaN(v));
  if (logits.length === 0) return;
  let hard, soft;
  try {
    hard = soften(new Float64Array(logits), 1.0);
    soft = soften(new Float64Array(logits), tau);
  } catch (e) {
    g.fillText(String(e), 10, 20);
    return;
  }
  const bw = (canvas.width - 40) / logits.length;
  const h = canvas.height - 30;
  for (let i = 0; i < logits.length; i++) {
    const x = 20 + i * bw;
    g.fillStyle = "#bbb";
    g.fillRect(x + 4, 10 + h * (1 - hard[i]), bw / 2 - 6, h * hard[i]);
    g.fillStyle = LWR;
    g.fillRect(x + bw / 2, 10 + h * (1 - soft[i]), bw / 2 - 6, h * soft[i]);
    g.fillStyle = "#333";
    g.fillText(soft[i].toFixed(2), x + bw / 2, canvas.height - 6);
  }
}

function drawSchedule() {
  const canvas = $("sched");
  const g = clear(canvas);
  let s;
  try {
    s = schedule(parseInt($("sched-k").value, 10), parseInt($("sched-m").value, 10));
  } catch (e) {
    g.fillText(String(e), 10, 20);
    return;
  }
  const alpha = s.alpha, beta = s.beta, commits = s.commitEpochs;
  s.free();
  const m = alpha.length;
  const xs = Array.from({ length: m }, (_, i) => (m === 1 ? 0 : i / (m - 1)));
  axes(g, canvas.width, canvas.height);
  g.strokeStyle = "#ddd";
  for (const e of commits) {
    const px = 24 + ((e - 1) / Math.max(1, m - 1)) * (canvas.width - 48);
    g.beginPath(); g.moveTo(px, 24); g.lineTo(px, canvas.height - 24); g.stroke();
  }
  line(g, xs, Array.from(alpha), canvas.width, canvas.height, STD);
  line(g, xs, Array.from(beta), canvas.width, canvas.height, LWR);
  g.fillStyle = STD; g.fillText("α", canvas.width - 18, 30);
  g.fillStyle = LWR; g.fillText("β", canvas.width - 18, 44);
}

function drawComparison(c) {
  const curves = $("curves");
  let g = clear(curves);
  axes(g, curves.width, curves.height);
  const std = Array.from(c.stdCurve), lwr = Array.from(c.lwrCurve);
  const m = std.length;
  const xs = Array.from({ length: m }, (_, i) => (m === 1 ? 0 : i / (m - 1)));
  line(g, xs, std, curves.width, curves.height, STD);
  line(g, xs, lwr, curves.width, curves.height, LWR);
  g.fillStyle = "#666";
  g.fillText("test accuracy per epoch", 30, 16);

  const rel = $("reliability");
  g = clear(rel);
  axes(g, rel.width, rel.height);
  const side = rel.width - 48;
  g.strokeStyle = "#ccc";
  g.beginPath(); g.moveTo(24, rel.height - 24); g.lineTo(24 + side, 24); g.stroke();
  const plot = (conf, acc, color) => {
    g.fillStyle = color;
    conf.forEach((x, i) => {
      if (Number.isNaN(x)) return;
      g.beginPath();
      g.arc(24 + x * side, rel.height - 24 - acc[i] * side, 3, 0, 2 * Math.PI);
      g.fill();
    });
  };
  plot(Array.from(c.stdBinConf), Array.from(c.stdBinAcc), STD);
  plot(Array.from(c.lwrBinConf), Array.from(c.lwrBinAcc), LWR);
  g.fillStyle = "#666";
  g.fillText("reliability (conf vs acc)", 30, 16);

  const f = (v) => (100 * v).toFixed(1);
  $("status").textContent =
    `STD last ${f(c.stdLast)} best ${f(c.stdBest)} ECE ${f(c.stdEce)}  |  ` +
    `LWR last ${f(c.lwrLast)} best ${f(c.lwrBest)} ECE ${f(c.lwrEce)}`;
}

function runComparison() {
  $("status").textContent = "training…";
  // Let the status repaint before the synchronous training call.
  setTimeout(() => {
    try {
      const c = compareOnBlobs(
        parseFloat($("cmp-noise").value),
        parseFloat($("cmp-tau").value),
        parseInt($("cmp-k").value, 10),
        parseInt($("cmp-m").value, 10),
        parseInt($("cmp-seed").value, 10),
      );
      drawComparison(c);
      c.free();
    } catch (e) {
      $("status").textContent = String(e);
    }
  }, 20);
}

await init();
for (const id of ["logits", "tau-soft"]) $(id).addEventListener("input", drawSoften);
for (const id of ["sched-k", "sched-m"]) $(id).addEventListener("input", drawSchedule);
$("cmp-run").addEventListener("click", runComparison);
drawSoften();
drawSchedule();
