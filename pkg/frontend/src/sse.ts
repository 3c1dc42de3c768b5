// Resumable server-sent-events client over fetch streams, with a 2-second
// polling fallback (once=true drains) when streaming is unavailable. Resume
// uses Last-Event-ID so no alert is lost across disconnects.

export interface SseEvent {
  id: string | null;
  event: string;
  data: string;
}

export interface ParserState {
  buffer: string;
  lastEventId: string | null;
}

export function newParserState(lastEventId: string | null = null): ParserState {
  return { buffer: '', lastEventId };
}

/** Feed a chunk of an SSE byte stream; returns completed events. */
export function feedChunk(state: ParserState, chunk: string): SseEvent[] {
  state.buffer += chunk.replace(/\r\n/g, '\n');
  const events: SseEvent[] = [];
  let index: number;
  while ((index = state.buffer.indexOf('\n\n')) !== -1) {
    const raw = state.buffer.slice(0, index);
    state.buffer = state.buffer.slice(index + 2);
    let id: string | null = null;
    let event = 'message';
    const dataLines: string[] = [];
    for (const line of raw.split('\n')) {
      if (line.startsWith(':')) continue; // heartbeat/comment
      const colon = line.indexOf(':');
      if (colon === -1) continue;
      const field = line.slice(0, colon);
      const value = line.slice(colon + 1).replace(/^ /, '');
      if (field === 'id') id = value;
      else if (field === 'event') event = value;
      else if (field === 'data') dataLines.push(value);
    }
    if (dataLines.length === 0) continue;
    if (id !== null) state.lastEventId = id;
    events.push({ id, event, data: dataLines.join('\n') });
  }
  return events;
}

export interface StreamOptions {
  url: string;
  headers?: Record<string, string>;
  lastEventId?: string | null;
  onEvent: (event: SseEvent) => void;
  onFallback?: () => void;
  pollIntervalMs?: number;
  fetchImpl?: typeof fetch;
}

/** Dedicated alert stream: reconnects with Last-Event-ID, falls back to
 * polling after repeated stream failures. stop() tears everything down. */
export class ResumableStream {
  private stopped = false;
  private state: ParserState;
  private failures = 0;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;
  private fetchImpl: typeof fetch;

  constructor(private options: StreamOptions) {
    this.state = newParserState(options.lastEventId ?? null);
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  get lastEventId(): string | null {
    return this.state.lastEventId;
  }

  start(): void {
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    if (this.pollTimer !== null) clearTimeout(this.pollTimer);
  }

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    const headers = { ...(this.options.headers ?? {}), ...extra };
    if (this.state.lastEventId !== null) {
      headers['Last-Event-ID'] = this.state.lastEventId;
    }
    return headers;
  }

  private async loop(): Promise<void> {
    while (!this.stopped) {
      try {
        const response = await this.fetchImpl(this.options.url, { headers: this.headers() });
        if (!response.ok || !response.body) {
          throw new Error(`stream unavailable: ${response.status}`);
        }
        this.failures = 0;
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        for (;;) {
          const { done, value } = await reader.read();
          if (done || this.stopped) break;
          for (const event of feedChunk(this.state, decoder.decode(value, { stream: true }))) {
            this.options.onEvent(event);
          }
        }
        if (this.stopped) return;
      } catch {
        this.failures += 1;
        if (this.failures >= 2) {
          this.options.onFallback?.();
          await this.pollLoop();
          return;
        }
        await sleep(500);
      }
    }
  }

  private async pollLoop(): Promise<void> {
    const interval = this.options.pollIntervalMs ?? 2000;
    while (!this.stopped) {
      try {
        const url = this.options.url + (this.options.url.includes('?') ? '&' : '?') + 'once=true';
        const response = await this.fetchImpl(url, { headers: this.headers() });
        if (response.ok && response.body) {
          const text = await response.text();
          for (const event of feedChunk(this.state, text)) {
            this.options.onEvent(event);
          }
        }
      } catch {
        // transient poll failure: keep trying
      }
      await sleep(interval);
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
