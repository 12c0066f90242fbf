/**
 * Grading UI entry point. One screen: the current example with one verdict
 * row per system (names blinded behind session-stable letters), progress in
 * the header, guidelines and report in slide-over panels.
 */

import { ApiError, GradingApi } from "./api.js";
import type { ExampleDetail, ExampleSummary } from "./api.js";
import { retryFailures, submitVerdict } from "./flow.js";
import { GradingSession, actionForKey, formatProgress } from "./session.js";
import type { Verdict } from "./session.js";

const api = new GradingApi("", (...args) => fetch(...args), window.localStorage);

interface AppState {
  session: GradingSession;
  examples: ExampleSummary[];
  index: number;
  focusRow: number;
  detail: ExampleDetail | null;
  guidelinesOpen: boolean;
  guidelinesText: string;
  reportText: string | null;
  banner: string | null;
}

let state: AppState | null = null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function root(): HTMLElement {
  return document.getElementById("app")!;
}

// -- boot -----------------------------------------------------------------

async function boot(graderId: string): Promise<void> {
  const examples = await api.examples();
  if (examples.length === 0) {
    root().replaceChildren(el("p", "error", "The server has no examples to grade."));
    return;
  }
  // The shuffle seed lives in sessionStorage so the display order survives
  // navigation within a session but reshuffles for the next one.
  let seed = Number(window.sessionStorage.getItem("rewriteqa.seed"));
  if (!Number.isFinite(seed) || seed === 0) {
    seed = Math.floor(Math.random() * 2 ** 31) + 1;
    window.sessionStorage.setItem("rewriteqa.seed", String(seed));
  }
  const session = new GradingSession(graderId, examples[0]!.systems, seed);
  session.applyServerGrades(await api.grades(graderId));
  const guidelinesOpen = window.sessionStorage.getItem("rewriteqa.guidelines-open") === "1";
  let guidelinesText = "";
  try {
    guidelinesText = await api.guidelines();
  } catch {
    guidelinesText = "Guidelines are unavailable while offline.";
  }
  state = {
    session,
    examples,
    index: 0,
    focusRow: 0,
    detail: null,
    guidelinesOpen,
    guidelinesText,
    reportText: null,
    banner: null,
  };
  await showExample(0);
}

async function showExample(index: number): Promise<void> {
  if (!state) return;
  state.index = Math.max(0, Math.min(index, state.examples.length - 1));
  state.focusRow = 0;
  state.detail = null;
  render();
  try {
    state.detail = await api.example(state.examples[state.index]!.question_id);
  } catch (error) {
    state.banner = error instanceof ApiError ? error.message : "Failed to load the example.";
  }
  render();
}

// -- rendering --------------------------------------------------------------

function render(): void {
  if (!state) return;
  const app = root();
  app.replaceChildren(header(), exampleCard(), navBar());
  if (state.guidelinesOpen) app.append(guidelinesPanel());
  if (state.reportText !== null) app.append(reportPanel());
  if (state.banner || state.session.failures().length > 0) app.append(banner());
  void refreshProgress();
}

function header(): HTMLElement {
  const bar = el("header", "topbar");
  bar.append(el("span", "title", "Answer grading"));
  bar.append(el("span", "grader", `grader: ${state!.session.graderId}`));
  const progress = el("span", "progress");
  progress.id = "progress";
  bar.append(progress);
  const guidelinesButton = el("button", "", "Guidelines (g)");
  guidelinesButton.onclick = () => toggleGuidelines();
  const reportButton = el("button", "", "Report");
  reportButton.onclick = () => void toggleReport();
  bar.append(guidelinesButton, reportButton);
  return bar;
}

async function refreshProgress(): Promise<void> {
  if (!state) return;
  try {
    const progress = await api.progress(state.session.graderId);
    const node = document.getElementById("progress");
    if (node) node.textContent = formatProgress(progress.graded_pairs, progress.total_pairs);
  } catch {
    // Progress is decoration; grading keeps working without it.
  }
}

function exampleCard(): HTMLElement {
  const card = el("section", "example");
  const summary = state!.examples[state!.index]!;
  const detail = state!.detail;

  const figure = el("figure", "image-box");
  if (detail) {
    const img = el("img");
    img.src = detail.image_url;
    img.alt = summary.image_id;
    img.onerror = () => {
      // Placeholder keeps the image identity visible when the fetch fails.
      figure.replaceChildren(el("div", "image-missing", summary.image_id));
    };
    figure.append(img);
  } else {
    figure.append(el("div", "image-missing", "loading"));
  }
  card.append(figure);

  const body = el("div", "example-body");
  body.append(el("h2", "question", summary.question));
  body.append(el("p", "golds", `Gold answers: ${summary.gold_answers.join(", ")}`));
  const lookup = el("a", "lookup", "Look the question up");
  lookup.href = `https://duckduckgo.com/?q=${encodeURIComponent(summary.question)}`;
  lookup.target = "_blank";
  lookup.rel = "noopener";
  body.append(lookup);

  if (detail) {
    const rows = el("div", "answers");
    state!.session.displayOrder.forEach((system, rowIndex) => {
      const answer = detail.answers.find((a) => a.system === system);
      if (!answer) return;
      rows.append(answerRow(summary.question_id, system, rowIndex, answer.predicted_answer, answer.rewrite_text));
    });
    body.append(rows);
  }
  card.append(body);
  return card;
}

function answerRow(
  questionId: string,
  system: string,
  rowIndex: number,
  predicted: string,
  rewrite: string | null,
): HTMLElement {
  const session = state!.session;
  const row = el("div", rowIndex === state!.focusRow ? "answer-row focused" : "answer-row");
  row.append(el("span", "system-label", session.label(system)));
  const texts = el("div", "answer-texts");
  if (rewrite) texts.append(el("div", "rewrite", rewrite));
  texts.append(el("div", "predicted", predicted));
  row.append(texts);

  const verdict = session.displayedVerdict(questionId, system);
  for (const choice of ["correct", "incorrect"] as const) {
    const button = el(
      "button",
      verdict === choice ? `verdict ${choice} selected` : `verdict ${choice}`,
      choice === "correct" ? "correct (c)" : "incorrect (x)",
    );
    button.onclick = () => void grade(rowIndex, choice);
    row.append(button);
  }
  if (session.isUnsaved(questionId, system)) {
    row.append(el("span", "unsaved", "unsaved"));
  }
  return row;
}

function navBar(): HTMLElement {
  const bar = el("footer", "navbar");
  const prev = el("button", "", "prev (p)");
  prev.disabled = state!.index === 0;
  prev.onclick = () => void showExample(state!.index - 1);
  const next = el("button", "", "next (n)");
  next.disabled = state!.index === state!.examples.length - 1;
  next.onclick = () => void showExample(state!.index + 1);
  bar.append(prev, el("span", "position", `${state!.index + 1} of ${state!.examples.length}`), next);
  return bar;
}

function guidelinesPanel(): HTMLElement {
  const panel = el("aside", "panel");
  panel.append(el("h3", "", "Grading guidelines"));
  const body = el("pre", "panel-body", state!.guidelinesText);
  panel.append(body);
  return panel;
}

function reportPanel(): HTMLElement {
  const panel = el("aside", "panel report");
  panel.append(el("h3", "", "Current report"));
  panel.append(el("pre", "panel-body", state!.reportText ?? ""));
  const close = el("button", "", "Close");
  close.onclick = () => {
    state!.reportText = null;
    render();
  };
  panel.append(close);
  return panel;
}

function banner(): HTMLElement {
  const failures = state!.session.failures().length;
  const box = el("div", "banner");
  const message =
    failures > 0
      ? `${failures} verdict(s) not saved yet.`
      : (state!.banner ?? "");
  box.append(el("span", "", message));
  if (failures > 0) {
    const retry = el("button", "", "Retry");
    retry.onclick = () => void retryAll();
    box.append(retry);
  }
  return box;
}

// -- actions ----------------------------------------------------------------

async function grade(rowIndex: number, verdict: Verdict): Promise<void> {
  if (!state || !state.detail) return;
  const system = state.session.displayOrder[rowIndex];
  if (!system) return;
  state.focusRow = rowIndex;
  const questionId = state.detail.question_id;
  render();
  const result = await submitVerdict(api, state.session, questionId, system, verdict);
  state.banner = result.ok ? null : "Saving failed; your pick is kept for retry.";
  render();
}

async function retryAll(): Promise<void> {
  if (!state) return;
  const remaining = await retryFailures(api, state.session);
  state.banner = remaining > 0 ? "Some verdicts are still unsaved." : null;
  render();
}

function toggleGuidelines(): void {
  if (!state) return;
  state.guidelinesOpen = !state.guidelinesOpen;
  window.sessionStorage.setItem("rewriteqa.guidelines-open", state.guidelinesOpen ? "1" : "0");
  render();
}

async function toggleReport(): Promise<void> {
  if (!state) return;
  if (state.reportText !== null) {
    state.reportText = null;
  } else {
    try {
      // Rendered verbatim: the UI never recomputes a score.
      state.reportText = (await api.report()).text;
    } catch {
      state.banner = "The report is unavailable right now.";
    }
  }
  render();
}

function onKey(event: KeyboardEvent): void {
  if (!state) return;
  const inTextInput =
    event.target instanceof HTMLInputElement || event.target instanceof HTMLTextAreaElement;
  const action = actionForKey(event.key, inTextInput);
  if (!action) return;
  event.preventDefault();
  switch (action.kind) {
    case "verdict":
      void grade(state.focusRow, action.verdict);
      break;
    case "next":
      void showExample(state.index + 1);
      break;
    case "prev":
      void showExample(state.index - 1);
      break;
    case "focus-next":
      state.focusRow = Math.min(state.focusRow + 1, state.session.displayOrder.length - 1);
      render();
      break;
    case "focus-prev":
      state.focusRow = Math.max(state.focusRow - 1, 0);
      render();
      break;
    case "guidelines":
      toggleGuidelines();
      break;
  }
}

// -- grader sign-in -----------------------------------------------------------

function signIn(): void {
  const app = root();
  const form = el("form", "signin");
  form.append(el("h2", "", "Who is grading?"));
  const input = el("input");
  input.placeholder = "grader id";
  input.value = window.sessionStorage.getItem("rewriteqa.grader") ?? "";
  const start = el("button", "", "Start grading");
  form.append(input, start);
  form.onsubmit = (event) => {
    event.preventDefault();
    const graderId = input.value.trim();
    if (!graderId) return;
    window.sessionStorage.setItem("rewriteqa.grader", graderId);
    void boot(graderId).catch((error) => {
      app.replaceChildren(el("p", "error", `Could not reach the grading service: ${error}`));
    });
  };
  app.replaceChildren(form);
  input.focus();
}

document.addEventListener("keydown", onKey);
signIn();
