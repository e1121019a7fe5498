import init, { retrievalReport, weatherStoryboard, weatherCharts, transitionReport } from "./pkg/narrative_player_demo.js";

const $ = (id) => document.getElementById(id);
const fixed = (v, n = 3) => Number(v).toFixed(n);

function escapeHtml(s) {
  return String(s).replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function showError(target, err) {
  target.innerHTML = `<p class="error">${escapeHtml(err)}</p>`;
}

function updateRetrieval() {
  const out = $("retrieval-out");
  try {
    const r = JSON.parse(retrievalReport($("seq").value, Number($("alpha").value), Number($("beta").value)));
    const rows = r.items
      .map((i) => `<tr><td>${escapeHtml(i.label)}</td><td>${fixed(i.activation, 2)}</td><td>${fixed(i.share)}</td></tr>`)
      .join("");
    out.innerHTML = `<p>P = <strong>${fixed(r.p, 5)}</strong></p>
      <table><tr><th>item</th><th>activation</th><th>share</th></tr>${rows}</table>`;
  } catch (e) {
    showError(out, e);
  }
}

function updateStoryboard() {
  const [w1, w2, w3] = ["w1", "w2", "w3"].map((id) => {
    $(id + "v").textContent = fixed($(id).value, 1);
    return Number($(id).value);
  });
  try {
    const r = JSON.parse(weatherStoryboard(w1, w2, w3));
    const s = r.score;
    $("score").textContent =
      `F = ${fixed(s.f)}  (T ${fixed(s.t, 2)}, B ${s.b}, P ${fixed(s.p)}), ${r.search} search, ` +
      `${(r.total_ms / 1000).toFixed(1)} s total, choice [${r.choice.join(", ")}]`;
    $("frames").innerHTML = r.frames
      .map((f, i) => {
        const t = r.transitions.find((x) => x.to === f.index);
        const via = t ? `${t.kind}, ${t.steps} step${t.steps === 1 ? "" : "s"}` : "opening";
        return `<div class="frame">${f.svg ?? ""}
          <p>${escapeHtml(f.subtitle)}</p>
          <p class="meta">#${i} ${f.role}, ${f.start_ms}–${f.end_ms} ms, ${via}</p></div>`;
      })
      .join("");
  } catch (e) {
    showError($("frames"), e);
  }
}

function updateTransition() {
  const out = $("transition-out");
  try {
    const r = JSON.parse(transitionReport(Number($("from").value), Number($("to").value)));
    const steps = r.steps
      .map((s) => `<div><p class="meta">phase ${s.phase}: ${escapeHtml(s.action)}</p>${s.via ?? ""}</div>`)
      .join("");
    out.innerHTML = `<p>Kind <strong>${escapeHtml(r.kind)}</strong>. Cost: static ${fixed(r.cost.static, 2)},
        joined ${fixed(r.cost.joined, 2)}, composite ${fixed(r.cost.composite, 2)}.</p>
      <div class="steps"><div><p class="meta">from</p>${r.from_svg}</div>${steps}<div><p class="meta">to</p>${r.to_svg}</div></div>`;
  } catch (e) {
    showError(out, e);
  }
}

async function main() {
  await init();
  for (const id of ["seq", "alpha", "beta"]) $(id).addEventListener("input", updateRetrieval);
  for (const id of ["w1", "w2", "w3"]) $(id).addEventListener("change", updateStoryboard);

  const charts = JSON.parse(weatherCharts());
  const options = charts.map((c) => `<option value="${c.index}">${c.index}: ${escapeHtml(c.title)}</option>`).join("");
  $("from").innerHTML = options;
  $("to").innerHTML = options;
  $("to").value = String(Math.min(1, charts.length - 1));
  for (const id of ["from", "to"]) $(id).addEventListener("change", updateTransition);

  updateRetrieval();
  updateStoryboard();
  updateTransition();
}

main();
