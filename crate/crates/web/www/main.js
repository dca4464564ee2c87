const worker = new Worker(new URL("./worker.js", import.meta.url), { type: "module" });
const pending = new Map();
let nextId = 0;

worker.onmessage = ({ data }) => {
  const done = pending.get(data.id);
  pending.delete(data.id);
  done(data);
};

function call(op, args) {
  const id = nextId++;
  return new Promise((resolve) => {
    pending.set(id, resolve);
    worker.postMessage({ id, op, args });
  });
}

const num = (form, name) => Number(form.elements[name].value);
const text = (form, name) => form.elements[name].value;

function wire(formId, op, readArgs, show) {
  const form = document.getElementById(formId);
  const status = form.querySelector(".status");
  const button = form.querySelector("button");
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    button.disabled = true;
    status.textContent = "running...";
    const result = await call(op, readArgs(form));
    button.disabled = false;
    if (result.error) {
      status.textContent = `error: ${result.error}`;
      return;
    }
    status.textContent = `done in ${(result.ms / 1000).toFixed(1)} s`;
    show(result.output);
  });
}

wire(
  "fixed-form",
  "fixedSize",
  (f) => ({
    prevalence: num(f, "prevalence"),
    cstat: num(f, "cstat"),
    parameters: num(f, "parameters"),
    draws: num(f, "draws"),
  }),
  (json) => {
    const { result } = JSON.parse(json);
    const rows = [
      ["Cox-Snell R²", result.r2_cs.toFixed(4)],
      ["max Cox-Snell R²", result.max_r2_cs.toFixed(4)],
      ["shrinkage criterion", result.n_shrinkage],
      ["optimism criterion", result.n_optimism],
      ["overall risk criterion", result.n_overall_risk],
      ["minimum n", result.n_total],
      ["events", result.n_events],
    ];
    document.getElementById("fixed-out").innerHTML = rows
      .map(([k, v]) => `<tr><th>${k}</th><td>${v}</td></tr>`)
      .join("");
  },
);

wire(
  "curve-form",
  "learningCurve",
  (f) => ({
    seed: num(f, "seed"),
    nMax: num(f, "nMax"),
    b: num(f, "b"),
    strategy: text(f, "strategy"),
    rules: text(f, "rules"),
  }),
  (svg) => {
    document.getElementById("curve-out").innerHTML = svg;
  },
);

wire(
  "stability-form",
  "stability",
  (f) => ({
    seed: num(f, "seed"),
    n: num(f, "n"),
    b: num(f, "b"),
    strategy: text(f, "strategy"),
    threshold: num(f, "threshold"),
  }),
  (svg) => {
    document.getElementById("stability-out").innerHTML = svg;
  },
);
