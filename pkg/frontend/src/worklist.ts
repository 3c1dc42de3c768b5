// Radiologist worklist: rows derived purely from GET /v1/worklist responses.
// Rendering is a pure function of the entry, so a recorded-response replay
// reproduces every badge bit-for-bit (nothing client-invented).

import type { WorklistEntry } from './types.js';

export interface RowAction {
  label: string;
  action: 'request' | 'view' | 'none';
  enabled: boolean;
}

export function completenessBadge(entry: WorklistEntry): string {
  const c = entry.completeness;
  if (c.status === 'complete') return 'complete';
  if (c.status === 'incomplete') {
    const n = c.missing ?? 0;
    return `${n} image${n === 1 ? '' : 's'} missing`;
  }
  return 'unknown';
}

export function accessAction(entry: WorklistEntry): RowAction {
  switch (entry.access_status) {
    case 'granted':
      return { label: 'View Images', action: 'view', enabled: true };
    case 'pending':
      return { label: 'Pending', action: 'none', enabled: false };
    case 'denied':
      return { label: 'Denied', action: 'request', enabled: true };
    default:
      return { label: 'Request', action: 'request', enabled: true };
  }
}

export function reportBadge(entry: WorklistEntry): string {
  if (entry.report_status === 'final') {
    return entry.critical ? 'final (critical)' : 'final';
  }
  return 'unreported';
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function rowHtml(entry: WorklistEntry): string {
  const badge = completenessBadge(entry);
  const badgeClass = entry.completeness.status === 'complete' ? 'ok' : 'warn';
  const action = accessAction(entry);
  const report = reportBadge(entry);
  const reportClass = entry.critical ? 'critical' : entry.report_status === 'final' ? 'ok' : '';
  const canReport = entry.access_status === 'granted' && entry.report_status === 'none';
  return (
    `<tr data-exam="${escapeHtml(entry.exam_id)}">` +
    `<td class="exam-id">${escapeHtml(entry.exam_id)}</td>` +
    `<td>${escapeHtml(entry.modality)}</td>` +
    `<td>${escapeHtml(entry.referring_physician)}</td>` +
    `<td><span class="badge ${badgeClass}">${escapeHtml(badge)}</span></td>` +
    `<td><button class="access" data-action="${action.action}"${action.enabled ? '' : ' disabled'}>` +
    `${escapeHtml(action.label)}</button></td>` +
    `<td><span class="badge ${reportClass}">${escapeHtml(report)}</span></td>` +
    `<td>${canReport ? '<button class="report">Report</button>' : ''}</td>` +
    `</tr>`
  );
}

export function tableHtml(entries: WorklistEntry[]): string {
  const header =
    '<tr><th>Exam</th><th>Modality</th><th>Referring</th><th>Images</th>' +
    '<th>Access</th><th>Report</th><th></th></tr>';
  return `<table class="worklist">${header}${entries.map(rowHtml).join('')}</table>`;
}

export interface SortFilterState {
  filterText: string;
  sortKey: keyof WorklistEntry;
  ascending: boolean;
}

export function applySortFilter(
  entries: WorklistEntry[],
  state: SortFilterState,
): WorklistEntry[] {
  const needle = state.filterText.trim().toLowerCase();
  const filtered = needle
    ? entries.filter(
        (e) =>
          e.exam_id.toLowerCase().includes(needle) ||
          e.modality.toLowerCase().includes(needle) ||
          e.referring_physician.toLowerCase().includes(needle),
      )
    : entries.slice();
  filtered.sort((a, b) => {
    const left = String(a[state.sortKey]);
    const right = String(b[state.sortKey]);
    return state.ascending ? left.localeCompare(right) : right.localeCompare(left);
  });
  return filtered;
}
