// Physician alert board: live critical-alert list with one-click
// acknowledgment. An alert leaves the unacknowledged list only after the ack
// endpoint confirms the on-chain commit; per-alert in-flight guards prevent
// duplicate mutations.

import { escapeHtml } from './worklist.js';
import type { AlertEvent } from './types.js';

export interface AlertItem {
  alert: AlertEvent;
  deliveredAt: number;
  ackInFlight: boolean;
  ackTxId: string | null;
  notice: string | null;
}

export class AlertBoard {
  items: AlertItem[] = [];
  private byId = new Map<string, AlertItem>();

  /** Apply a delivered alert event (stream, poll, or snapshot), in order. */
  apply(alert: AlertEvent, deliveredAt: number = Date.now() / 1000): AlertItem {
    const existing = this.byId.get(alert.alert_id);
    if (existing) {
      existing.alert = alert;
      return existing;
    }
    const item: AlertItem = {
      alert,
      deliveredAt,
      ackInFlight: false,
      ackTxId: null,
      notice: null,
    };
    this.items.push(item);
    this.byId.set(alert.alert_id, item);
    return item;
  }

  get(alertId: string): AlertItem | undefined {
    return this.byId.get(alertId);
  }

  unacknowledged(): AlertItem[] {
    return this.items.filter((i) => !i.alert.acknowledged);
  }

  /** One ack per alert: returns false when one is already running or done. */
  beginAck(alertId: string): boolean {
    const item = this.byId.get(alertId);
    if (!item || item.ackInFlight || item.alert.acknowledged) {
      return false;
    }
    item.ackInFlight = true;
    return true;
  }

  finishAck(alertId: string, txId: string): void {
    const item = this.byId.get(alertId);
    if (!item) return;
    item.ackInFlight = false;
    item.ackTxId = txId;
    item.alert = { ...item.alert, acknowledged: true };
    item.notice = null;
  }

  failAck(alertId: string, code: string, detail: string): void {
    const item = this.byId.get(alertId);
    if (!item) return;
    item.ackInFlight = false;
    if (code === 'AlreadyAcknowledged') {
      // The chain already holds the ack: reflect it, do not re-mutate.
      item.alert = { ...item.alert, acknowledged: true };
      item.notice = 'already acknowledged';
    } else {
      item.notice = detail;
    }
  }
}

export function highlightKeywords(text: string, keywords: string[]): string {
  let html = escapeHtml(text);
  for (const keyword of keywords) {
    const pattern = new RegExp(`(${keyword.replace(/[.*+?^${}()|[\]\\]/g, '\\$&')})`, 'gi');
    html = html.replace(pattern, '<mark>$1</mark>');
  }
  return html;
}

export function alertAgeLabel(item: AlertItem, nowS: number): string {
  const age = Math.max(0, Math.floor(nowS - item.alert.raised_at));
  if (age < 60) return `${age}s`;
  if (age < 3600) return `${Math.floor(age / 60)}m ${age % 60}s`;
  return `${Math.floor(age / 3600)}h ${Math.floor((age % 3600) / 60)}m`;
}

export function alertHtml(item: AlertItem, nowS: number = Date.now() / 1000): string {
  const alert = item.alert;
  const keywords = alert.matched_keywords
    .map((k) => `<mark>${escapeHtml(k)}</mark>`)
    .join(', ');
  const state = alert.acknowledged
    ? `<span class="badge ok">acknowledged</span>` +
      (item.ackTxId ? ` <code class="tx">tx ${escapeHtml(item.ackTxId)}</code>` : '')
    : item.ackInFlight
      ? '<button class="ack" disabled>Acking…</button>'
      : `<button class="ack" data-alert="${escapeHtml(alert.alert_id)}">Acknowledge</button>`;
  const notice = item.notice ? `<span class="notice">${escapeHtml(item.notice)}</span>` : '';
  return (
    `<div class="alert${alert.acknowledged ? ' acked' : ' live'}" data-alert="${escapeHtml(alert.alert_id)}">` +
    `<div class="alert-head"><strong>${escapeHtml(alert.exam_id)}</strong>` +
    ` <span class="age">age ${alertAgeLabel(item, nowS)}</span></div>` +
    `<div class="alert-keywords">critical: ${keywords}</div>` +
    `<div class="alert-actions">${state}${notice}</div>` +
    `</div>`
  );
}

export function boardHtml(board: AlertBoard, nowS: number = Date.now() / 1000): string {
  if (board.items.length === 0) {
    return '<p class="empty">No critical alerts.</p>';
  }
  return board.items.map((item) => alertHtml(item, nowS)).join('');
}
