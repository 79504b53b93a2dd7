import init, { Demo } from "./pkg/inbetween_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Math.max(0, Number($(id).value) | 0);

function draw(canvas, frame) {
  canvas.width = frame.width;
  canvas.height = frame.height;
  const pixels = new ImageData(new Uint8ClampedArray(frame.rgba()), frame.width, frame.height);
  canvas.getContext("2d").putImageData(pixels, 0, 0);
  frame.free();
}

function guarded(fn) {
  return () => {
    try {
      const t0 = performance.now();
      fn();
      $("status").textContent = `done in ${(performance.now() - t0).toFixed(0)} ms`;
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
}

await init();
let modelSeed = num("model-seed");
let demo = new Demo(modelSeed);

const load = guarded(() => {
  draw($("clip"), demo.load_clip(num("data-seed"), num("clip-index")));
  $("ssim").textContent = "";
});

$("load").onclick = load;
$("generate").onclick = guarded(() => {
  if (num("model-seed") !== modelSeed) {
    modelSeed = num("model-seed");
    demo.free();
    demo = new Demo(modelSeed);
    demo.load_clip(num("data-seed"), num("clip-index")).free();
  }
  draw($("generated"), demo.inbetween(num("noise-seed")));
});
$("score").onclick = guarded(() => {
  $("ssim").textContent = demo.ssim().toFixed(4);
});

load();

