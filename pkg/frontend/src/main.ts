// Browser bootstrap: login panel, radiologist worklist, physician alert board.
// All truth comes from the gateway; this file only wires DOM events to the
// client and re-renders from responses.

import { GatewayClient, GatewayError } from './api.js';
import { AlertBoard, boardHtml } from './alerts.js';
import { ResumableStream } from './sse.js';
import { applySortFilter, tableHtml } from './worklist.js';
import type { AlertEvent, WorklistEntry } from './types.js';

const client = new GatewayClient('');
const board = new AlertBoard();
let stream: ResumableStream | null = null;
let entries: WorklistEntry[] = [];
let pollTimer: number | null = null;
const inFlightRows = new Set<string>();

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function setStatus(text: string, isError = false): void {
  const el = $('status');
  el.textContent = text;
  el.className = isError ? 'status error' : 'status';
}

async function refreshWorklist(): Promise<void> {
  const response = await client.worklist();
  entries = response.entries;
  renderWorklist();
}

function renderWorklist(): void {
  const filter = ($('filter') as HTMLInputElement).value;
  const visible = applySortFilter(entries, {
    filterText: filter,
    sortKey: 'exam_id',
    ascending: true,
  });
  $('worklist-container').innerHTML = tableHtml(visible);
}

async function handleWorklistClick(event: Event): Promise<void> {
  const target = event.target as HTMLElement;
  const row = target.closest('tr[data-exam]') as HTMLElement | null;
  if (!row) return;
  const examId = row.dataset.exam!;
  if (inFlightRows.has(examId)) return;
  try {
    if (target.matches('button.access[data-action="request"]')) {
      inFlightRows.add(examId);
      const response = await client.requestAccess(examId);
      setStatus(`access request ${response.status} (tx ${response.tx_id.slice(0, 12)}…)`);
      await refreshWorklist();
    } else if (target.matches('button.access[data-action="view"]')) {
      inFlightRows.add(examId);
      const link = await client.viewLink(examId);
      setStatus(`view link issued (tx ${link.tx_id.slice(0, 12)}…)`);
      window.open(link.view_url, '_blank');
    } else if (target.matches('button.report')) {
      openReportDrawer(examId);
    }
  } catch (error) {
    surfaceError(error);
  } finally {
    inFlightRows.delete(examId);
  }
}

function openReportDrawer(examId: string): void {
  $('drawer-exam').textContent = examId;
  ($('drawer') as HTMLElement).classList.add('open');
}

async function submitReport(): Promise<void> {
  const examId = $('drawer-exam').textContent ?? '';
  const body = ($('report-body') as HTMLTextAreaElement).value;
  const impression = ($('report-impression') as HTMLTextAreaElement).value;
  try {
    const response = await client.submitReport(examId, body, impression);
    const critical = response.is_critical
      ? ` CRITICAL: ${response.matched_keywords.join(', ')}`
      : '';
    setStatus(`report ${response.report_id.slice(0, 12)}… committed (tx ${response.tx_id.slice(0, 12)}…)${critical}`);
    ($('drawer') as HTMLElement).classList.remove('open');
    await refreshWorklist();
  } catch (error) {
    surfaceError(error);
  }
}

function renderBoard(): void {
  $('alert-container').innerHTML = boardHtml(board);
}

function onAlertEvent(data: string): void {
  const alert = JSON.parse(data) as AlertEvent;
  if (stream) {
    board.apply(alert);
    renderBoard();
  }
}

async function handleBoardClick(event: Event): Promise<void> {
  const target = event.target as HTMLElement;
  if (!target.matches('button.ack[data-alert]')) return;
  const alertId = target.dataset.alert!;
  if (!board.beginAck(alertId)) return;
  renderBoard();
  try {
    const response = await client.ackAlert(alertId);
    board.finishAck(alertId, response.tx_id);
  } catch (error) {
    if (error instanceof GatewayError) {
      board.failAck(alertId, error.code, error.message);
    } else {
      board.failAck(alertId, 'Error', String(error));
    }
  }
  renderBoard();
}

function startAlertStream(): void {
  stream = new ResumableStream({
    url: '/v1/alerts/stream',
    headers: client.authHeaders(),
    onEvent: (event) => {
      if (event.event === 'alert') onAlertEvent(event.data);
    },
    onFallback: () => setStatus('alert stream unavailable; polling every 2 s'),
    pollIntervalMs: 2000,
  });
  stream.start();
}

async function handleLogin(): Promise<void> {
  const userId = ($('user-id') as HTMLInputElement).value.trim();
  const seed = ($('seed') as HTMLInputElement).value.trim();
  try {
    const session = await client.login(userId, seed);
    setStatus(`logged in as ${session.user_id} (${session.role})`);
    $('login-panel').classList.add('hidden');
    if (session.role === 'PHYSICIAN') {
      $('alert-panel').classList.remove('hidden');
      startAlertStream();
    } else {
      $('worklist-panel').classList.remove('hidden');
      await refreshWorklist();
      pollTimer = window.setInterval(() => void refreshWorklist().catch(surfaceError), 5000);
    }
  } catch (error) {
    surfaceError(error);
  }
}

function surfaceError(error: unknown): void {
  if (error instanceof GatewayError) {
    if (error.status === 401) {
      // Session expired mid-action: back to login, no phantom state.
      if (pollTimer !== null) window.clearInterval(pollTimer);
      stream?.stop();
      $('worklist-panel').classList.add('hidden');
      $('alert-panel').classList.add('hidden');
      $('login-panel').classList.remove('hidden');
      setStatus('session expired; log in again', true);
      return;
    }
    setStatus(`${error.code}: ${error.message}`, true);
  } else {
    setStatus(String(error), true);
  }
}

window.addEventListener('DOMContentLoaded', () => {
  $('login-button').addEventListener('click', () => void handleLogin());
  $('worklist-container').addEventListener('click', (e) => void handleWorklistClick(e));
  $('alert-container').addEventListener('click', (e) => void handleBoardClick(e));
  $('report-submit').addEventListener('click', () => void submitReport());
  $('drawer-close').addEventListener('click', () => $('drawer').classList.remove('open'));
  $('filter').addEventListener('input', renderWorklist);
});
