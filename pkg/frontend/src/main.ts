/** Application wiring: controls -> debounced service fetch -> linked panels. */

import { ApiClient, ServiceError } from "./api";
import { debouncedFetcher } from "./debounce";
import { renderPanels, pinColor, type PanelSet } from "./panels";
import { ElicitationSession, MAX_PINNED } from "./session";
import type { PanelPayloads, Setup } from "./types";

const CONTROL_IDS: Record<string, keyof Setup> = {
  "ctl-mu": "muR2",
  "ctl-phi": "phiR2",
  "ctl-api": "aPi",
  "ctl-p": "p",
  "ctl-k": "K",
  "ctl-l": "L",
  "ctl-n": "N",
};

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

export function startApp(baseUrl?: string): void {
  const client = new ApiClient(baseUrl ?? (window as { SERVICE_URL?: string }).SERVICE_URL);
  const session = new ElicitationSession();
  const banner = el<HTMLDivElement>("banner");
  const errors = el<HTMLDivElement>("field-errors");
  const meffSummary = el<HTMLDivElement>("meff-summary");
  const panels: PanelSet = {
    r2: el("panel-r2"),
    tau2: el("panel-tau2"),
    marginal: el("panel-marginal"),
    kappa: el("panel-kappa"),
    meff: el("panel-meff"),
  } as unknown as PanelSet;
  const pinnedPayloads = new Map<number, PanelPayloads>();

  const refresh = debouncedFetcher(async (signal) => {
    const payloads = await client.panels(session.setup, 0, signal);
    const overlays = session.pinned.map((pin, i) => ({
      color: pinColor(i),
      payloads: pinnedPayloads.get(pin.id)!,
    })).filter((o) => o.payloads);
    renderPanels(panels, payloads, overlays, session.setup.aPi <= 0.5);
    const q = payloads.meff.quantiles;
    meffSummary.textContent =
      `effective non-zero coefficients: mean ${payloads.meff.mean.toFixed(1)}, ` +
      `median ${q.median.toFixed(1)} [${q.q05.toFixed(1)}, ${q.q95.toFixed(1)}] ` +
      `of ${payloads.meff.total_coefficients}`;
    banner.hidden = true;
    errors.textContent = "";
    return payloads;
  }, 200);

  const onChange = () => {
    const change: Partial<Setup> = {};
    for (const [id, key] of Object.entries(CONTROL_IDS)) {
      const input = el<HTMLInputElement>(id);
      (change as Record<string, number>)[key] = Number(input.value);
    }
    const problems = session.update(change);
    if (problems.length) {
      errors.textContent = problems.join("; ");
      return;
    }
    refresh().catch((err) => {
      if (err instanceof ServiceError && err.status === 0) {
        banner.hidden = false;
      } else if (err instanceof ServiceError) {
        errors.textContent = err.fieldErrors
          .map((fe) => `${fe.field}: ${fe.message}`).join("; ");
      }
    });
  };

  for (const id of Object.keys(CONTROL_IDS)) {
    el(id).addEventListener("input", onChange);
  }
  el("btn-retry").addEventListener("click", onChange);

  el("btn-pin").addEventListener("click", async () => {
    if (session.pinned.length >= MAX_PINNED) return;
    const pin = session.pin();
    pinnedPayloads.set(pin.id, await client.panels(pin.setup));
    renderPinList();
    onChange();
  });

  const exportBtn = el<HTMLButtonElement>("btn-export");
  exportBtn.addEventListener("click", () => {
    const blob = new Blob([session.exportFragment()], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "hyperparameters.json";
    a.click();
    URL.revokeObjectURL(a.href);
  });

  function renderPinList(): void {
    const list = el<HTMLUListElement>("pin-list");
    list.innerHTML = "";
    session.pinned.forEach((pin, i) => {
      const item = document.createElement("li");
      item.style.color = pinColor(i);
      const s = pin.setup;
      item.textContent =
        `${pin.label}: mu=${s.muR2} phi=${s.phiR2} a_pi=${s.aPi}`;
      const remove = document.createElement("button");
      remove.textContent = "unpin";
      remove.addEventListener("click", () => {
        session.unpin(pin.id);
        pinnedPayloads.delete(pin.id);
        renderPinList();
        onChange();
      });
      item.appendChild(remove);
      list.appendChild(item);
    });
    exportBtn.disabled = !session.canExport;
    el<HTMLButtonElement>("btn-pin").disabled = session.pinned.length >= MAX_PINNED;
  }

  renderPinList();
  onChange();
}

if (typeof document !== "undefined" && document.getElementById("panel-r2")) {
  startApp();
}
