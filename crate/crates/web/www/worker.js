// Runs the wasm module off the main thread so long runs keep the page live.
import init, { fixedSize, learningCurveSvg, stabilitySvg } from "./pkg/seqsize_web.js";

const ready = init();

const ops = {
  fixedSize: (a) => fixedSize(a.prevalence, a.cstat, a.parameters, a.draws),
  learningCurve: (a) => learningCurveSvg(a.seed, a.nMax, a.b, a.strategy, a.rules),
  stability: (a) => stabilitySvg(a.seed, a.n, a.b, a.strategy, a.threshold),
};

self.onmessage = async ({ data }) => {
  await ready;
  const started = performance.now();
  try {
    const output = ops[data.op](data.args);
    self.postMessage({ id: data.id, output, ms: performance.now() - started });
  } catch (e) {
    self.postMessage({ id: data.id, error: String(e.message ?? e) });
  }
};
