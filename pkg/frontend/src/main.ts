/**
 * Browser entry point: binds the workbench views to the DOM. Configuration
 * is a single base-URL setting (plus the run id under review), both taken
 * from the query string so a reload rebuilds everything from the service.
 */

import { ApiClient, ApiError } from './api.js';
import { editAndRetest, loadViewState, RetestQueue, ViewState } from './app.js';
import { shortVersion } from './model.js';
import { renderQueueHtml } from './queue.js';
import { buildTrendPoints, renderTrendSvg } from './trend.js';

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function renderBadges(state: ViewState): string {
  const entries = Object.entries(state.badges).sort(([a], [b]) => a.localeCompare(b));
  return entries
    .map(([codeId, badge]) => {
      const label = badge.kappa === null ? 'undefined' : badge.kappa.toFixed(2);
      return (
        `<button class="badge band-${badge.band ?? 'none'}" data-code="${codeId}">` +
        `${codeId} &kappa;=${label}</button>`
      );
    })
    .join(' ');
}

async function showTrend(api: ApiClient, codeId: string): Promise<void> {
  const points = buildTrendPoints(await api.kappaTrend(codeId));
  el('trend').innerHTML =
    `<h3>&kappa; across versions: ${codeId}</h3>` + renderTrendSvg(points);
}

function showError(message: string, retry: () => void): void {
  const banner = el('error-banner');
  banner.hidden = false;
  banner.textContent = message + ' ';
  const button = document.createElement('button');
  button.textContent = 'retry';
  button.onclick = () => {
    banner.hidden = true;
    retry();
  };
  banner.appendChild(button);
}

export async function mount(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get('service') ?? 'http://127.0.0.1:8700';
  const runId = params.get('run');
  const api = new ApiClient(baseUrl);
  const queue = new RetestQueue();

  if (!runId) {
    el('queue').innerHTML = '<p class="empty-state">Add ?run=&lt;run id&gt; to review a run.</p>';
    return;
  }

  let state: ViewState;
  const refresh = async () => {
    try {
      state = await loadViewState(api, runId);
    } catch (err) {
      const message =
        err instanceof ApiError ? `service error: ${err.message}` : 'service unreachable';
      showError(message, () => void refresh());
      return;
    }
    el('run-meta').textContent =
      `run ${state.runId} | codebook ${state.codebookId}@${shortVersion(state.codebookVersion)}`;
    el('badges').innerHTML = renderBadges(state);
    el('queue').innerHTML = renderQueueHtml(state.groups, state.changes);
    for (const badge of el('badges').querySelectorAll<HTMLButtonElement>('.badge')) {
      badge.onclick = () => void showTrend(api, badge.dataset.code!);
    }
  };
  await refresh();

  const form = el('retest-form') as HTMLFormElement;
  form.onsubmit = (event) => {
    event.preventDefault();
    const codeId = (el('edit-code') as HTMLInputElement).value.trim();
    const newDefinition = (el('edit-definition') as HTMLTextAreaElement).value.trim();
    const passageIds = (el('edit-passages') as HTMLInputElement).value
      .split(',')
      .map((s) => s.trim())
      .filter(Boolean);
    if (passageIds.length === 0) return; // action disabled without a selection
    void queue.submit(async () => {
      try {
        const result = await editAndRetest(api, state, { codeId, newDefinition, passageIds });
        state = result.state;
        await refresh();
      } catch (err) {
        const message = err instanceof ApiError ? err.message : String(err);
        (el('edit-error') as HTMLElement).textContent = message;
      }
    });
  };
}

if (typeof document !== 'undefined' && document.getElementById('queue')) {
  void mount();
}
