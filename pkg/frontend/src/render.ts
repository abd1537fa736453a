/** Pure HTML-string renderers. No DOM access, so tests run in plain node. */

import type { Stats } from "./api.js";
import type { AppState } from "./state.js";
import { canSubmit } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** "60.49%" style fixed two-decimal rendering. */
export function formatPercentage(value: number): string {
  return `${value.toFixed(2)}%`;
}

export function renderProgress(answered: number, total: number): string {
  return `<p class="progress">Question ${answered + 1} of ${total}</p>`;
}

function renderCandidate(
  id: string,
  url: string,
  index: number,
  selected: boolean,
): string {
  const cls = selected ? "candidate selected" : "candidate";
  return [
    `<figure class="${cls}" data-candidate="${escapeHtml(id)}">`,
    `<img src="${escapeHtml(url)}" alt="candidate ${index + 1}">`,
    `<figcaption><kbd>${index + 1}</kbd></figcaption>`,
    `</figure>`,
  ].join("");
}

export function renderQuestion(state: AppState): string {
  const view = state.view;
  if (view === null) {
    return renderError("no question loaded");
  }
  const busy = state.phase === "submitting";
  const candidates = view.candidates
    .map((c, i) => renderCandidate(c.id, c.url, i, state.selected === c.id))
    .join("\n");
  const submitDisabled = busy || !canSubmit(state) ? " disabled" : "";
  const submitLabel = busy ? "Submitting&hellip;" : "Submit";
  return [
    renderProgress(view.progress.answered, view.progress.total),
    `<section class="references">`,
    `<figure><img src="${escapeHtml(view.inputUrl)}" alt="input image"><figcaption>Input</figcaption></figure>`,
    `<figure><img src="${escapeHtml(view.truthUrl)}" alt="reference image"><figcaption>Reference</figcaption></figure>`,
    `</section>`,
    `<p class="prompt">Which generated tile looks closest to the reference?</p>`,
    `<section class="candidates">`,
    candidates,
    `</section>`,
    `<button id="submit" type="button"${submitDisabled}>${submitLabel}</button>`,
  ].join("\n");
}

export function renderStats(stats: Stats): string {
  const rows = stats.models
    .map(
      (row) =>
        `<tr><td>${escapeHtml(row.model)}</td>` +
        `<td>${row.count}</td>` +
        `<td>${formatPercentage(row.percentage)}</td></tr>`,
    )
    .join("\n");
  return [
    `<table class="stats">`,
    `<thead><tr><th>Model</th><th>Votes</th><th>Share</th></tr></thead>`,
    `<tbody>`,
    rows,
    `</tbody>`,
    `</table>`,
    `<p class="total">${stats.total} votes recorded</p>`,
  ].join("\n");
}

export function renderComplete(stats: Stats | null): string {
  const table = stats === null ? "" : renderStats(stats);
  return [
    `<h2>All done</h2>`,
    `<p>Thank you for participating. Current results:</p>`,
    table,
  ].join("\n");
}

export function renderStarting(): string {
  return `<p class="loading">Loading study&hellip;</p>`;
}

export function renderError(message: string): string {
  return `<p class="error" role="alert">${escapeHtml(message)}</p>`;
}

/** Top-level dispatch from state to markup. */
export function renderApp(state: AppState): string {
  switch (state.phase) {
    case "starting":
      return renderStarting();
    case "question":
    case "submitting":
      return renderQuestion(state);
    case "complete":
      return renderComplete(state.stats);
    case "error":
      return renderError(state.error ?? "something went wrong");
  }
}
