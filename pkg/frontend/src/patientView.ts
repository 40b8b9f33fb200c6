/** Patient-facing view: server-driven questions, schema buttons, outcome banner.
 *
 * This view renders nothing derived from the engine's belief state: no
 * posterior numbers, no entropy, no scores. The commit banner shows only the
 * disease display name and the coarse confidence band.
 */

import type { SessionHandle } from "./types.js";

export interface PatientViewCallbacks {
  onStructured: (value: string | number) => void;
  onText: (text: string) => void;
  onNotSure: () => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderPatientView(
  container: HTMLElement,
  handle: SessionHandle,
  callbacks: PatientViewCallbacks,
): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  container.dataset.sessionId = handle.session_id;
  container.dataset.state = handle.state;

  if (handle.state !== "awaiting_answer") {
    const banner = el(doc, "div", "outcome-banner");
    if (handle.state === "committed" && handle.outcome) {
      banner.classList.add("committed");
      banner.append(el(doc, "h2", "diagnosis", handle.outcome.diagnosis ?? ""));
      banner.append(
        el(doc, "p", "confidence-band", `Confidence: ${handle.outcome.confidence_band ?? ""}`),
      );
    } else {
      banner.classList.add("abstained");
      banner.append(el(doc, "h2", undefined, "No diagnosis made"));
      banner.append(el(doc, "p", "referral", handle.outcome?.message ?? "Referred for further evaluation."));
    }
    container.append(banner);
    return;
  }

  const question = handle.current_question;
  if (!question) return;
  const qBox = el(doc, "div", "question-box");
  if (question.reask) {
    qBox.append(el(doc, "span", "reask-badge", "clarifying"));
  }
  qBox.append(el(doc, "p", "question-text", question.text));
  container.append(qBox);

  const controls = el(doc, "div", "answer-controls");

  if (question.kind === "binary" || question.kind === "categorical" || question.kind === "ordinal") {
    for (const value of question.values) {
      const button = el(doc, "button", "value-button", labelFor(value));
      button.dataset.value = value;
      button.addEventListener("click", () => callbacks.onStructured(value));
      controls.append(button);
    }
  } else if (question.kind === "numeric" && question.numeric_scale) {
    const [lo, hi, step] = question.numeric_scale;
    const input = el(doc, "input", "numeric-input") as HTMLInputElement;
    input.type = "number";
    input.min = String(lo);
    input.max = String(hi);
    input.step = String(step);
    const send = el(doc, "button", "numeric-send", "Answer");
    send.addEventListener("click", () => {
      const reading = Number(input.value);
      if (!Number.isNaN(reading) && reading >= lo && reading <= hi) {
        callbacks.onStructured(reading);
      }
    });
    controls.append(input, send);
  }

  const textBox = el(doc, "input", "free-text") as HTMLInputElement;
  textBox.type = "text";
  textBox.placeholder = question.kind === "free_text"
    ? "Describe what brought you in"
    : "Answer in your own words";
  const sendText = el(doc, "button", "send-text", "Send");
  sendText.addEventListener("click", () => {
    if (textBox.value.trim()) callbacks.onText(textBox.value);
  });
  controls.append(textBox, sendText);

  if (question.kind !== "free_text") {
    const notSure = el(doc, "button", "not-sure", "I'm not sure");
    notSure.addEventListener("click", () => callbacks.onNotSure());
    controls.append(notSure);
  }

  container.append(controls);
}

function labelFor(value: string): string {
  if (value === "yes") return "Yes";
  if (value === "no") return "No";
  return value;
}
