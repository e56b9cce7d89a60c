import init, { challenge, attempt, consistency, speakerCount } from "./pkg/lipsense_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Math.max(0, parseInt($(id).value, 10) || 0);

function guarded(out, fn) {
  return () => {
    out.classList.remove("err");
    out.textContent = "working...";
    // Let the page repaint before the synchronous wasm call.
    setTimeout(() => {
      try {
        fn();
      } catch (e) {
        out.classList.add("err");
        out.textContent = String(e);
      }
    }, 10);
  };
}

function plot(canvas, view) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 6;
  ctx.clearRect(0, 0, w, h);
  const t1 = view.duration_s;
  const x = (t) => pad + (w - 2 * pad) * (t / t1);
  const top = Math.max(view.threshold, ...view.envelope) || 1;
  const y = (v) => h - pad - (h - 2 * pad) * Math.min(v / top, 1);

  ctx.fillStyle = "rgba(40,170,40,0.18)";
  for (const [a, b] of view.truth_segments) ctx.fillRect(x(a), 0, x(b) - x(a), h);

  for (const f of view.fragments) {
    ctx.strokeStyle = f.kept ? "#d60" : "rgba(220,100,0,0.35)";
    ctx.lineWidth = 2;
    ctx.strokeRect(x(f.start_s), pad, x(f.end_s) - x(f.start_s), h - 2 * pad);
  }

  ctx.strokeStyle = "#999";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(pad, y(view.threshold));
  ctx.lineTo(w - pad, y(view.threshold));
  ctx.stroke();
  ctx.setLineDash([]);

  ctx.strokeStyle = "#36c";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  view.envelope.forEach((v, i) => {
    const t = view.envelope_start_s + i * view.envelope_step_s;
    i ? ctx.lineTo(x(t), y(v)) : ctx.moveTo(x(t), y(v));
  });
  ctx.stroke();
}

await init();
const n = speakerCount();
for (const id of ["a-speaker", "k-user", "k-probe"]) $(id).max = n - 1;
$("k-probe").value = 1;

$("c-run").onclick = guarded($("c-out"), () => {
  const v = JSON.parse(challenge(num("c-seed")));
  $("c-out").textContent = `${v.count} possible challenges\nthis one: ${v.frequencies_hz.join(" Hz, ")} Hz`;
});

$("a-run").onclick = guarded($("a-out"), () => {
  const v = JSON.parse(attempt($("a-kind").value, num("a-speaker"), num("a-seed")));
  plot($("a-plot"), v);
  const kept = v.fragments.filter((f) => f.kept).length;
  $("a-out").textContent =
    `${v.scenario}: tones ${v.frequencies_hz.join(", ")} Hz, ${v.duration_s.toFixed(2)} s\n` +
    `carrier levels ${v.carrier_levels_db.map((d) => d.toFixed(1)).join(", ")} dB` +
    (v.carriers_present ? "" : " (challenge tones missing)") +
    `\n${v.truth_segments.length} characters spoken, ${v.fragments.length} fragments found, ${kept} pass the SNR gate`;
});

$("k-run").onclick = guarded($("k-out"), () => {
  const v = JSON.parse(consistency(num("k-user"), num("k-probe"), num("k-seed")));
  $("k-out").textContent =
    `enrolled on ${v.enrolled} attempts against ${v.negatives} negatives\n` +
    `decision value ${v.score.toFixed(3)} (accept above ${v.threshold}): ${v.pass ? "accept" : "reject"}`;
});
