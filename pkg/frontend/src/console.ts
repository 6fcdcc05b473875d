// Orchestration: snapshot bootstrap, stream attach, reconciliation.
import { GatewayClient } from './api.js';
import { ConsoleState } from './state.js';
import { EventStream, type WebSocketLike } from './stream.js';
import type { EventFrame } from './protocol.js';

export interface ConsoleOptions {
  httpUrl: string; // http://host:port
  wsUrl: string; // ws://host:port
  dispatcherToken: string;
  socketCtor?: new (url: string) => WebSocketLike;
}

export class DispatcherConsole {
  readonly state = new ConsoleState();
  readonly api: GatewayClient;
  private stream: EventStream | null = null;

  constructor(private readonly options: ConsoleOptions) {
    this.api = new GatewayClient({
      baseUrl: options.httpUrl,
      token: options.dispatcherToken,
    });
  }

  /** Bootstrap from /v1/state, then stream events from exactly that seq. */
  async start(): Promise<void> {
    const snapshot = await this.api.getState();
    this.state.loadSnapshot(snapshot);
    this.attachStream(snapshot.seq);
  }

  /** Stream-only start: reduce the full history from seq 0. */
  startFromHistory(): void {
    this.attachStream(0);
  }

  private attachStream(since: number): void {
    this.stream = new EventStream({
      baseUrl: this.options.wsUrl,
      token: this.options.dispatcherToken,
      since,
      socketCtor: this.options.socketCtor,
      handlers: {
        onEvent: (frame: EventFrame, receivedAtMs: number) => {
          this.state.applyEvent(frame, receivedAtMs);
        },
      },
    });
    this.stream.connect();
  }

  /** Re-fetch the snapshot and adopt it when the stream fell behind or
   *  diverged. Returns the field-level differences found beforehand. */
  async reconcile(): Promise<string[]> {
    const snapshot = await this.api.getState();
    const diffs = this.state.seq === snapshot.seq ? this.state.diffSnapshot(snapshot) : [];
    if (this.state.needsResync || this.state.seq < snapshot.seq || diffs.length > 0) {
      this.state.loadSnapshot(snapshot);
    }
    return diffs;
  }

  stop(): void {
    this.stream?.close();
    this.stream = null;
  }
}
