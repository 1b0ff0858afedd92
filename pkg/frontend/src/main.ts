/**
 * DOM wiring for the diagnosis front end.
 *
 * One render pass per state change: read `flow.state`, rebuild the three
 * screens (anomaly picker, interview, verdict).  All interaction goes
 * through the SessionFlow methods; this file never touches the numbers
 * beyond formatting them.
 */

import { ApiClient, type Anomaly, type SessionView } from "./api.js";
import {
  BAND_COLORS,
  BAND_LABELS,
  bandForVerdict,
  degreeMarkerPercent,
  gaugeGeometry,
  previewBand,
  progressLabel,
  verdictSummary,
} from "./gauge.js";
import { SessionFlow } from "./state.js";

const client = new ApiClient("");
const flow = new SessionFlow(client);

const app = document.getElementById("app") as HTMLElement;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

async function run(action: () => Promise<void>): Promise<void> {
  await action();
  render();
}

// ---------------------------------------------------------------------------
// anomaly picker

let anomalies: Anomaly[] = [];

function renderPicker(): void {
  app.replaceChildren();
  const card = el("section", "card");
  card.append(el("h1", "", "Start a diagnosis"));
  card.append(
    el("p", "hint", "Pick the anomaly to interview for."),
  );
  const list = el("div", "anomaly-list");
  for (const anomaly of anomalies) {
    const button = el("button", "anomaly", anomaly.name);
    button.addEventListener("click", () => {
      void run(() => flow.start(anomaly.id));
    });
    list.append(button);
  }
  card.append(list);
  if (flow.state.error) {
    card.append(el("p", "error", flow.state.error));
  }
  app.append(card);
}

// ---------------------------------------------------------------------------
// gauge

function renderGauge(view: SessionView): HTMLElement {
  const wrap = el("div", "gauge");
  const track = el("div", "gauge-track");
  const geometry = gaugeGeometry(view.cutoff);

  const zoneNegative = el("div", "zone zone-negative");
  zoneNegative.style.width = `${geometry.tndPercent}%`;
  const zoneExamine = el("div", "zone zone-examine");
  zoneExamine.style.left = `${geometry.tndPercent}%`;
  zoneExamine.style.width = `${geometry.tpdPercent - geometry.tndPercent}%`;
  const zonePositive = el("div", "zone zone-positive");
  zonePositive.style.left = `${geometry.tpdPercent}%`;
  zonePositive.style.width = `${100 - geometry.tpdPercent}%`;
  track.append(zoneNegative, zoneExamine, zonePositive);

  for (const [percent, label] of [
    [geometry.tndPercent, "TND"],
    [geometry.tpdPercent, "TPD"],
  ] as const) {
    const marker = el("div", "cutoff-marker");
    marker.style.left = `${percent}%`;
    const tag = el("span", "cutoff-label", `${label} ${(percent / 100).toFixed(3)}`);
    marker.append(tag);
    track.append(marker);
  }

  const needleAt = degreeMarkerPercent(
    view.diagnosis ? view.diagnosis.certainty_degree : view.certainty_degree,
  );
  if (needleAt !== null) {
    const needle = el("div", "needle");
    needle.style.left = `${needleAt}%`;
    track.append(needle);
  }
  wrap.append(track);

  const scale = el("div", "gauge-scale");
  scale.append(el("span", "", "0"), el("span", "", "100"));
  wrap.append(scale);
  return wrap;
}

// ---------------------------------------------------------------------------
// interview

function answerControl(view: SessionView): HTMLElement {
  const question = view.pending_question;
  const box = el("div", "answer-box");
  if (question === null) {
    return box;
  }

  if (question.kind === "categorical") {
    const select = el("select") as HTMLSelectElement;
    select.id = "answer-input";
    const blank = el("option", "", "— choose —") as HTMLOptionElement;
    blank.value = "";
    select.append(blank);
    for (const option of question.allowed ?? []) {
      const node = el("option", "", option) as HTMLOptionElement;
      node.value = option;
      select.append(node);
    }
    select.value = flow.state.draft;
    select.addEventListener("change", () => {
      flow.setDraft(select.value);
    });
    box.append(select);
    return box;
  }

  const number = el("input") as HTMLInputElement;
  number.type = "number";
  number.id = "answer-input";
  number.step = "1";
  if (question.kind === "certainty") {
    const min = question.range?.min ?? 0;
    const max = question.range?.max ?? 100;
    number.min = String(min);
    number.max = String(max);

    const slider = el("input", "certainty-slider") as HTMLInputElement;
    slider.type = "range";
    slider.min = String(min);
    slider.max = String(max);
    slider.step = "1";
    slider.value = flow.state.draft === "" ? String(min) : flow.state.draft;
    slider.addEventListener("input", () => {
      flow.setDraft(slider.value);
      number.value = slider.value;
    });
    number.addEventListener("input", () => {
      flow.setDraft(number.value);
      if (/^\d+$/.test(number.value)) {
        slider.value = number.value;
      }
    });
    box.append(slider);
  } else {
    number.addEventListener("input", () => {
      flow.setDraft(number.value);
    });
  }
  number.value = flow.state.draft;
  if (question.unit) {
    box.append(number, el("span", "unit", question.unit));
  } else {
    box.append(number);
  }
  return box;
}

function renderInterview(view: SessionView): void {
  app.replaceChildren();
  const card = el("section", "card");

  const head = el("header", "session-head");
  head.append(el("h1", "", view.anomaly.name));
  head.append(
    el(
      "span",
      "progress",
      progressLabel(view.progress.answered, view.progress.total),
    ),
  );
  card.append(head);

  const question = view.pending_question;
  if (question !== null) {
    card.append(el("p", "prompt", question.prompt));
    if (question.kind === "certainty") {
      card.append(
        el("p", "hint", "How certain are you, from 0 (not at all) to 100 (completely)?"),
      );
    }
    card.append(answerControl(view));
  }

  if (flow.state.error) {
    const error = el("p", "error");
    error.id = "inline-error";
    error.textContent = flow.state.error;
    card.append(error);
  }

  const controls = el("div", "controls");
  const answer = el("button", "primary", "Answer") as HTMLButtonElement;
  answer.id = "answer-button";
  answer.disabled = flow.state.busy || question === null;
  answer.addEventListener("click", () => {
    void run(() => flow.submitDraft());
  });
  const undo = el("button", "", "Undo") as HTMLButtonElement;
  undo.id = "undo-button";
  undo.disabled = !flow.canUndo();
  undo.addEventListener("click", () => {
    void run(() => flow.undo());
  });
  const stop = el("button", "", "Stop and conclude") as HTMLButtonElement;
  stop.id = "stop-button";
  stop.disabled = !flow.canStop();
  stop.addEventListener("click", () => {
    const early = view.pending_question !== null;
    void run(() => flow.stop(early));
  });
  controls.append(answer, undo, stop);
  card.append(controls);

  const preview = el("div", "preview");
  const band = previewBand(view);
  if (view.certainty_degree !== null && view.display_percent !== null) {
    const line = el(
      "p",
      "preview-line",
      `Current certainty ${view.display_percent}% — ${BAND_LABELS[band]}`,
    );
    line.style.color = BAND_COLORS[band];
    preview.append(line);
  } else {
    preview.append(el("p", "preview-line muted", "No evidence gathered yet."));
  }
  preview.append(renderGauge(view));
  card.append(preview);

  if (flow.state.connectionLost) {
    const retry = el("button", "", "Reconnect") as HTMLButtonElement;
    retry.addEventListener("click", () => {
      void run(() => flow.refresh());
    });
    card.append(retry);
  }

  app.append(card);
  (document.getElementById("answer-input") as HTMLInputElement | null)?.focus();
}

// ---------------------------------------------------------------------------
// verdict screen

function renderVerdict(view: SessionView): void {
  app.replaceChildren();
  const diagnosis = view.diagnosis;
  if (diagnosis === null) {
    return;
  }
  const card = el("section", "card");

  if (diagnosis.no_evidence) {
    card.append(el("h1", "", "Insufficient evidence"));
    card.append(
      el(
        "p",
        "hint",
        "No rule fired: every reported certainty stayed below its rule's threshold, so no conclusion about the anomaly can be drawn.",
      ),
    );
  } else {
    const band = bandForVerdict(diagnosis.verdict, diagnosis.no_evidence);
    const headline = el("h1", "verdict-headline", `${diagnosis.display_percent}%`);
    headline.style.color = BAND_COLORS[band];
    card.append(headline);
    card.append(el("p", "", BAND_LABELS[band]));
    card.append(renderGauge(view));
  }

  const summary = el("code", "verdict-line", verdictSummary(diagnosis));
  summary.id = "verdict-line";
  card.append(summary);

  if (diagnosis.stopped_early) {
    card.append(el("p", "hint", "Stopped before all questions were answered."));
  }

  if (diagnosis.fired_rules.length > 0) {
    card.append(el("h2", "", "Fired rules"));
    const trace = el("ul", "trace");
    for (const fired of diagnosis.fired_rules) {
      trace.append(el("li", "", `${fired.rule_id} — ${fired.cf.toFixed(4)}`));
    }
    card.append(trace);
  }

  const again = el("button", "primary", "New session");
  again.addEventListener("click", () => {
    flow.state = {
      view: null,
      draft: "",
      error: null,
      busy: false,
      connectionLost: false,
    };
    render();
  });
  card.append(again);

  app.append(card);
}

// ---------------------------------------------------------------------------

function render(): void {
  const view = flow.state.view;
  if (view === null) {
    renderPicker();
  } else if (view.stopped && view.diagnosis !== null) {
    renderVerdict(view);
  } else {
    renderInterview(view);
  }
}

async function boot(): Promise<void> {
  try {
    anomalies = await client.listAnomalies();
  } catch {
    flow.state = { ...flow.state, error: "service unreachable" };
  }
  render();
}

void boot();
