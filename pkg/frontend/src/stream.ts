// WebSocket event stream with seq-based resume.
//
// The server replays everything after `since` and then goes live with
// no gap and no duplicate, so reconnecting from the last applied seq
// is lossless. The socket constructor is injectable because the tests
// run under Node, where `ws` stands in for the browser global.
import type { EventFrame, HelloFrame } from './protocol.js';

export interface StreamHandlers {
  onHello?: (hello: HelloFrame) => void;
  onEvent: (frame: EventFrame, receivedAtMs: number) => void;
  onClose?: (code: number, reason: string) => void;
}

export interface StreamOptions {
  baseUrl: string; // ws://host:port
  token?: string;
  since?: number;
  requestId?: string;
  socketCtor?: new (url: string) => WebSocketLike;
  handlers: StreamHandlers;
}

// The subset of the WebSocket API the stream needs; satisfied by both
// the browser global and the `ws` package.
export interface WebSocketLike {
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: ((event: { code: number; reason: string }) => void) | null;
  onerror: ((event: unknown) => void) | null;
  onopen: ((event: unknown) => void) | null;
  send(data: string): void;
  close(code?: number): void;
}

export class EventStream {
  private socket: WebSocketLike | null = null;

  constructor(private readonly options: StreamOptions) {}

  connect(): void {
    const params = new URLSearchParams();
    if (this.options.token) params.set('token', this.options.token);
    if (this.options.since !== undefined) params.set('since', String(this.options.since));
    if (this.options.requestId) params.set('request_id', this.options.requestId);
    const url = `${this.options.baseUrl}/v1/stream?${params.toString()}`;
    const ctor =
      this.options.socketCtor ??
      ((globalThis as { WebSocket?: new (url: string) => WebSocketLike }).WebSocket as new (
        url: string,
      ) => WebSocketLike);
    if (!ctor) throw new Error('no WebSocket implementation available');
    const socket = new ctor(url);
    this.socket = socket;

    socket.onmessage = (event) => {
      const receivedAt = Date.now();
      const frame = JSON.parse(String(event.data)) as HelloFrame | EventFrame;
      if (frame.kind === 'hello') {
        this.options.handlers.onHello?.(frame as HelloFrame);
      } else if (frame.kind === 'pong') {
        // keepalive reply; nothing to do
      } else {
        this.options.handlers.onEvent(frame as EventFrame, receivedAt);
      }
    };
    socket.onclose = (event) => {
      this.options.handlers.onClose?.(event.code, event.reason);
    };
  }

  ping(): void {
    this.socket?.send(JSON.stringify({ action: 'ping' }));
  }

  close(): void {
    this.socket?.close(1000);
    this.socket = null;
  }
}
