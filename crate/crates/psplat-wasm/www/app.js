// Static driver for the psplat demo. Expects the wasm-bindgen output in
// ./pkg (see the README for the build command).

import init, { Demo } from "./pkg/psplat_wasm.js";

const el = (id) => document.getElementById(id);
const canvas = el("canvas");
const ctx = canvas.getContext("2d");

const RENDER_W = 320;
const RENDER_H = 240;

let demo = null;
let pipelineDone = false;
let yaw = 35;
let pitch = 18;
let zoom = 1.0;

function status(text) {
  el("status").textContent = text;
}

function draw() {
  if (!demo) return;
  let mode = el("mode").value;
  let frame;
  try {
    frame = demo.render(mode, yaw, pitch, zoom, RENDER_W, RENDER_H);
  } catch (e) {
    status(String(e));
    return;
  }
  const img = new ImageData(new Uint8ClampedArray(frame), RENDER_W, RENDER_H);
  createImageBitmap(img).then((bmp) => {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(bmp, 0, 0, canvas.width, canvas.height);
  });
}

function refreshQueryNames() {
  const names = JSON.parse(demo.classNames());
  const sel = el("queryName");
  sel.innerHTML = "";
  for (const n of names) {
    const opt = document.createElement("option");
    opt.value = n;
    opt.textContent = n;
    sel.appendChild(opt);
  }
}

function generate() {
  const seed = Number(el("seed").value) >>> 0;
  const objects = Number(el("objects").value) >>> 0;
  const sigma = Number(el("sigma").value) / 100;
  const rho = Number(el("rho").value) / 100;
  demo = new Demo(seed, objects, sigma, rho);
  pipelineDone = false;
  el("metrics").textContent = "—";
  el("queryResult").textContent = "";
  el("mode").value = "gt-instance";
  refreshQueryNames();
  status("scene ready — run the pipeline to segment it");
  draw();
}

async function runPipeline() {
  if (!demo) return;
  const btn = el("run");
  btn.disabled = true;
  status("fusing, distilling, cutting, clustering… (a few seconds)");
  // let the status paint before the wasm call blocks the thread
  await new Promise((r) => setTimeout(r, 30));
  try {
    const t0 = performance.now();
    const metrics = JSON.parse(demo.runPipeline());
    const dt = ((performance.now() - t0) / 1000).toFixed(1);
    pipelineDone = true;
    const fmt = (v) => (v == null ? " n/a " : v.toFixed(4));
    el("metrics").textContent =
      `mIoU    ${fmt(metrics.miou)}\n` +
      `mAcc    ${fmt(metrics.macc)}\n` +
      `PRQ(T)  ${fmt(metrics.prq_thing)}\n` +
      `PRQ(S)  ${fmt(metrics.prq_stuff)}\n` +
      `super-primitives ${metrics.segments}\n` +
      `instances ${metrics.thing_instances} (GT ${metrics.gt_objects})`;
    status(`pipeline done in ${dt}s`);
    el("mode").value = "pred-instance";
    draw();
  } catch (e) {
    status(String(e));
  } finally {
    btn.disabled = false;
  }
}

function runQuery() {
  if (!demo || !pipelineDone) {
    status("run the pipeline before querying");
    return;
  }
  try {
    const hits = JSON.parse(demo.query(el("queryName").value));
    el("queryResult").textContent =
      hits.length === 0
        ? "no matching instance"
        : `${hits.length} instance(s): ids ${hits.join(", ")}`;
    el("mode").value = "query";
    draw();
  } catch (e) {
    status(String(e));
  }
}

let dragging = false;
let last = [0, 0];
canvas.addEventListener("pointerdown", (e) => {
  dragging = true;
  last = [e.clientX, e.clientY];
  canvas.setPointerCapture(e.pointerId);
});
canvas.addEventListener("pointermove", (e) => {
  if (!dragging) return;
  yaw += (e.clientX - last[0]) * 0.45;
  pitch = Math.max(-80, Math.min(80, pitch + (e.clientY - last[1]) * 0.3));
  last = [e.clientX, e.clientY];
  draw();
});
canvas.addEventListener("pointerup", () => (dragging = false));
canvas.addEventListener("wheel", (e) => {
  e.preventDefault();
  zoom = Math.max(0.3, Math.min(4, zoom * (e.deltaY > 0 ? 1.08 : 0.93)));
  draw();
});

el("sigma").addEventListener("input", () => {
  el("sigmaVal").textContent = (Number(el("sigma").value) / 100).toFixed(2);
});
el("rho").addEventListener("input", () => {
  el("rhoVal").textContent = (Number(el("rho").value) / 100).toFixed(2);
});
el("generate").addEventListener("click", generate);
el("run").addEventListener("click", runPipeline);
el("runQuery").addEventListener("click", runQuery);
el("mode").addEventListener("change", draw);

await init();
generate();
