/** Bootstrap: session setup form, patient panel, and the clinician audit toggle. */

import { SessionApi } from "./api.js";
import { SessionController, clampTau } from "./controller.js";
import { renderAuditView } from "./auditView.js";
import { renderPatientView } from "./patientView.js";
import type { SessionHandle } from "./types.js";

export function mountApp(root: HTMLElement, api: SessionApi = new SessionApi()): SessionController {
  const doc = root.ownerDocument;
  root.replaceChildren();

  const form = doc.createElement("div");
  form.className = "setup-form";
  form.innerHTML = `
    <label>Knowledge base <input class="kb-id" type="text" value="default"></label>
    <label>Decision threshold <input class="tau-dial" type="number" min="0" max="1" step="0.05" value="0.5"></label>
    <label><input class="policy-toggle" type="checkbox"> Focused questioning</label>
    <button class="start-session">Start session</button>
    <span class="tau-warning" hidden>threshold clamped to [0, 1]</span>
  `;
  const patientPanel = doc.createElement("div");
  patientPanel.className = "patient-panel";
  const auditControls = doc.createElement("div");
  auditControls.className = "audit-controls";
  auditControls.innerHTML = `<button class="show-audit" hidden>Clinician audit view</button>`;
  const auditPanel = doc.createElement("div");
  auditPanel.className = "audit-panel";
  root.append(form, patientPanel, auditControls, auditPanel);

  const controller = new SessionController(api, (handle) => {
    renderPatient(handle);
  });

  function renderPatient(handle: SessionHandle): void {
    renderPatientView(patientPanel, handle, {
      onStructured: (value) => void controller.answerStructured(value),
      onText: (text) => void controller.answerText(text),
      onNotSure: () => void controller.answerNotSure(),
    });
    (auditControls.querySelector(".show-audit") as HTMLButtonElement).hidden = false;
  }

  (form.querySelector(".start-session") as HTMLButtonElement).addEventListener("click", () => {
    const kbId = (form.querySelector(".kb-id") as HTMLInputElement).value;
    const rawTau = Number((form.querySelector(".tau-dial") as HTMLInputElement).value);
    const tau = clampTau(rawTau);
    (form.querySelector(".tau-warning") as HTMLElement).hidden = !tau.clamped;
    const focused = (form.querySelector(".policy-toggle") as HTMLInputElement).checked;
    void controller.start(kbId, tau.value, focused).then(() => controller.startPolling());
  });

  (auditControls.querySelector(".show-audit") as HTMLButtonElement).addEventListener(
    "click",
    () => {
      const handle = controller.handle;
      if (!handle) return;
      void api.getClinicianTrace(handle.session_id).then((trace) => {
        renderAuditView(auditPanel, trace);
      });
    },
  );

  return controller;
}

declare global {
  interface Window {
    sessionConsole?: SessionController;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  window.sessionConsole = mountApp(document.getElementById("app") as HTMLElement);
}
