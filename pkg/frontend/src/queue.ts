/**
 * Disagreement triage queue: rows grouped per code (refinement edits target
 * code definitions, so the code is the unit of review), sorted by
 * (code, passage id), with the model's rationale expandable on demand.
 */

import type { ApiDisagreement, CellChange, DisagreementRow } from './model.js';

export interface QueueGroup {
  codeId: string;
  codeTitle: string;
  rows: DisagreementRow[];
}

export function buildQueue(
  rows: ApiDisagreement[],
  titles: Map<string, string>,
): QueueGroup[] {
  const byCode = new Map<string, DisagreementRow[]>();
  for (const raw of rows) {
    const row: DisagreementRow = {
      passageId: raw.passage_id,
      codeId: raw.code_id,
      codeTitle: titles.get(raw.code_id) ?? raw.code_id,
      gold: raw.gold,
      machine: raw.machine,
      justification: raw.justification,
      excerpt: raw.excerpt,
      runId: raw.run_id,
    };
    const bucket = byCode.get(raw.code_id);
    if (bucket) bucket.push(row);
    else byCode.set(raw.code_id, [row]);
  }
  const groups: QueueGroup[] = [];
  for (const codeId of [...byCode.keys()].sort()) {
    const rows = byCode.get(codeId)!;
    rows.sort((a, b) => a.passageId.localeCompare(b.passageId));
    groups.push({ codeId, codeTitle: rows[0].codeTitle, rows });
  }
  return groups;
}

export function escapeHtml(text: string): string {
  return text
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');
}

function decisionLabel(value: boolean | null): string {
  if (value === null) return 'unparseable';
  return value ? 'applied' : 'not applied';
}

function renderRow(row: DisagreementRow): string {
  const rationale = row.justification
    ? `<details class="rationale"><summary>rationale</summary><p>${escapeHtml(row.justification)}</p></details>`
    : '<span class="no-rationale">no rationale recorded</span>';
  return [
    `<li class="disagreement" data-passage="${escapeHtml(row.passageId)}" data-code="${escapeHtml(row.codeId)}">`,
    `<span class="passage-id">${escapeHtml(row.passageId)}</span>`,
    `<span class="verdicts">gold: <b>${decisionLabel(row.gold)}</b> / machine: <b>${decisionLabel(row.machine)}</b></span>`,
    `<blockquote class="excerpt">${escapeHtml(row.excerpt)}</blockquote>`,
    rationale,
    '</li>',
  ].join('');
}

function renderChange(change: CellChange): string {
  return [
    `<li class="resolved" data-passage="${escapeHtml(change.passageId)}" data-code="${escapeHtml(change.codeId)}">`,
    `<span class="passage-id">${escapeHtml(change.passageId)}</span>`,
    `<span class="transition">machine: ${decisionLabel(change.before)} &rarr; <b>${decisionLabel(change.after)}</b></span>`,
    '</li>',
  ].join('');
}

/**
 * The triage view for one run: grouped disagreements plus, after a retest,
 * the retested cells with their old -> new machine decisions.
 */
export function renderQueueHtml(groups: QueueGroup[], changes: CellChange[] = []): string {
  if (groups.length === 0 && changes.length === 0) {
    return '<p class="empty-state">No disagreements: machine and gold agree on every scored cell.</p>';
  }
  const parts: string[] = [];
  for (const group of groups) {
    parts.push(
      `<section class="code-group" data-code="${escapeHtml(group.codeId)}">`,
      `<h3>${escapeHtml(group.codeTitle)} <span class="count">(${group.rows.length})</span></h3>`,
      '<ul>',
      ...group.rows.map(renderRow),
      '</ul>',
      '</section>',
    );
  }
  if (changes.length > 0) {
    parts.push(
      '<section class="retested">',
      '<h3>Retested cells</h3>',
      '<ul>',
      ...changes.map(renderChange),
      '</ul>',
      '</section>',
    );
  }
  return parts.join('\n');
}
