// Gateway /v1 wire types. Everything the UI renders comes from these
// responses; the client never invents status on its own.

export interface SessionInfo {
  session_id: string;
  user_id: string;
  role: string;
  org_id: string;
  expires_at: number;
}

export interface Completeness {
  status: 'complete' | 'incomplete' | 'unknown';
  missing?: number;
}

export interface WorklistEntry {
  exam_id: string;
  channel_id: string;
  modality: string;
  org_id: string;
  referring_physician: string;
  image_count: number;
  completeness: Completeness;
  access_status: 'none' | 'pending' | 'granted' | 'denied';
  report_status: 'none' | 'final';
  critical: boolean;
}

export interface AccessRequestResponse {
  request_id: string;
  tx_id: string;
  status: string;
  evaluation_tx_id?: string;
}

export interface ViewLinkResponse {
  view_url: string;
  expires_at: number;
  tx_id: string;
}

export interface ReportResponse {
  report_id: string;
  tx_id: string;
  is_critical: boolean;
  matched_keywords: string[];
}

export interface AlertEvent {
  seq: number;
  alert_id: string;
  report_id: string;
  exam_id: string;
  recipient: string;
  matched_keywords: string[];
  raised_at: number;
  acknowledged: boolean;
  acknowledged_at: number | null;
  channel_id: string;
  height: number;
}

export interface AckResponse {
  alert_id: string;
  tx_id: string;
  acknowledged: boolean;
}

export interface AuditEvent {
  height: number;
  tx_index: number;
  tx_id: string;
  operation: string;
  creator: string;
  key: string;
  summary: string;
}

export interface ApiErrorBody {
  error: string;
  detail: string;
}
