import { describe, expect, it } from 'vitest';

import { AlertBoard, alertHtml, boardHtml, highlightKeywords } from '../src/alerts.js';
import type { AlertEvent } from '../src/types.js';

function alert(overrides: Partial<AlertEvent> = {}): AlertEvent {
  return {
    seq: 1,
    alert_id: 'a1',
    report_id: 'r1',
    exam_id: 'EX-1001',
    recipient: 'phy-001',
    matched_keywords: ['acute stroke'],
    raised_at: 1000,
    acknowledged: false,
    acknowledged_at: null,
    channel_id: 'telerad',
    height: 5,
    ...overrides,
  };
}

describe('alert board state', () => {
  it('applies alerts in delivery order and deduplicates by id', () => {
    const board = new AlertBoard();
    board.apply(alert({ seq: 1, alert_id: 'a1' }));
    board.apply(alert({ seq: 2, alert_id: 'a2' }));
    board.apply(alert({ seq: 1, alert_id: 'a1' }));
    expect(board.items.map((i) => i.alert.alert_id)).toEqual(['a1', 'a2']);
  });

  it('guards against duplicate acks in flight', () => {
    const board = new AlertBoard();
    board.apply(alert());
    expect(board.beginAck('a1')).toBe(true);
    expect(board.beginAck('a1')).toBe(false);
    board.finishAck('a1', 'txdead');
    expect(board.beginAck('a1')).toBe(false);
    expect(board.get('a1')!.alert.acknowledged).toBe(true);
    expect(board.get('a1')!.ackTxId).toBe('txdead');
  });

  it('never dismisses an alert without a confirmed ack', () => {
    const board = new AlertBoard();
    board.apply(alert());
    expect(board.unacknowledged()).toHaveLength(1);
    board.beginAck('a1');
    // Still pending: the endpoint has not confirmed.
    expect(board.unacknowledged()).toHaveLength(1);
    board.failAck('a1', 'NetworkError', 'connection reset');
    expect(board.unacknowledged()).toHaveLength(1);
    expect(board.get('a1')!.notice).toBe('connection reset');
    board.beginAck('a1');
    board.finishAck('a1', 'tx99');
    expect(board.unacknowledged()).toHaveLength(0);
  });

  it('surfaces AlreadyAcknowledged as a notice and reflects chain state', () => {
    const board = new AlertBoard();
    board.apply(alert());
    board.beginAck('a1');
    board.failAck('a1', 'AlreadyAcknowledged', 'ack exists');
    expect(board.get('a1')!.alert.acknowledged).toBe(true);
    expect(board.get('a1')!.notice).toBe('already acknowledged');
    // Second click cannot start another mutation.
    expect(board.beginAck('a1')).toBe(false);
  });

  it('renders keywords highlighted and shows the ack tx', () => {
    const board = new AlertBoard();
    board.apply(alert({ matched_keywords: ['intracranial hemorrhage'] }));
    let html = boardHtml(board, 1060);
    expect(html).toContain('<mark>intracranial hemorrhage</mark>');
    expect(html).toContain('data-alert="a1"');
    expect(html).toContain('age 1m 0s');
    board.beginAck('a1');
    board.finishAck('a1', 'txfeed');
    html = alertHtml(board.get('a1')!, 1060);
    expect(html).toContain('acknowledged');
    expect(html).toContain('tx txfeed');
  });

  it('highlights keywords case-insensitively and escapes the rest', () => {
    const html = highlightKeywords('Acute STROKE <b>now</b>', ['stroke']);
    expect(html).toContain('<mark>STROKE</mark>');
    expect(html).toContain('&lt;b&gt;now&lt;/b&gt;');
  });
});
