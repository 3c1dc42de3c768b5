// Typed client for the gateway /v1 JSON API. Every mutating call returns the
// tx_id of the commit it caused, which the UI surfaces next to the action.

import { LOGIN_NONCE_PREFIX, bytesToHex, concatBytes, hexToBytes, signWithSeed } from './signer.js';
import type {
  AccessRequestResponse,
  AckResponse,
  AlertEvent,
  ApiErrorBody,
  AuditEvent,
  ReportResponse,
  SessionInfo,
  ViewLinkResponse,
  WorklistEntry,
} from './types.js';

export class GatewayError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(detail);
  }
}

export class GatewayClient {
  session: SessionInfo | null = null;

  constructor(public baseUrl: string = '') {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.session) {
      headers['Authorization'] = `Bearer ${this.session.session_id}`;
    }
    return headers;
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let parsed: ApiErrorBody = { error: 'HttpError', detail: `status ${response.status}` };
      try {
        parsed = (await response.json()) as ApiErrorBody;
      } catch {
        // non-JSON error body
      }
      throw new GatewayError(response.status, parsed.error, parsed.detail);
    }
    return (await response.json()) as T;
  }

  /** Challenge-response login: the seed signs the nonce locally. */
  async login(userId: string, seedHex: string): Promise<SessionInfo> {
    const challenge = await this.call<{ nonce: string }>('POST', '/v1/login', { user_id: userId });
    const message = concatBytes(LOGIN_NONCE_PREFIX, hexToBytes(challenge.nonce));
    const signature = await signWithSeed(seedHex, message);
    this.session = await this.call<SessionInfo>('POST', '/v1/login', {
      user_id: userId,
      nonce: challenge.nonce,
      signature: bytesToHex(signature),
    });
    return this.session;
  }

  worklist(): Promise<{ entries: WorklistEntry[] }> {
    return this.call('GET', '/v1/worklist');
  }

  examDetail(examId: string): Promise<WorklistEntry & { image_hashes: string[] }> {
    return this.call('GET', `/v1/exams/${encodeURIComponent(examId)}`);
  }

  requestAccess(examId: string, reason = 0): Promise<AccessRequestResponse> {
    return this.call('POST', '/v1/access-requests', { exam_id: examId, reason });
  }

  viewLink(examId: string): Promise<ViewLinkResponse> {
    return this.call('POST', '/v1/view-links', { exam_id: examId });
  }

  submitReport(examId: string, bodyText: string, impressionText: string): Promise<ReportResponse> {
    return this.call('POST', '/v1/reports', {
      exam_id: examId,
      body_text: bodyText,
      impression_text: impressionText,
    });
  }

  alerts(): Promise<{ alerts: AlertEvent[] }> {
    return this.call('GET', '/v1/alerts');
  }

  ackAlert(alertId: string): Promise<AckResponse> {
    return this.call('POST', `/v1/alerts/${encodeURIComponent(alertId)}/ack`, {});
  }

  auditExam(examId: string): Promise<{ exam_id: string; channel_id: string; events: AuditEvent[] }> {
    return this.call('GET', `/v1/audit/exams/${encodeURIComponent(examId)}`);
  }

  authHeaders(): Record<string, string> {
    return this.session ? { Authorization: `Bearer ${this.session.session_id}` } : {};
  }
}
