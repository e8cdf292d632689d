// Event-stream socket with reconnect backoff.

import type { EventFrame } from "./types.js";

export function backoffDelayMs(attempt: number, baseMs = 500, capMs = 10_000): number {
  const exp = Math.min(capMs, baseMs * 2 ** attempt);
  return exp;
}

export interface EventSocketHooks {
  onFrame: (frame: EventFrame) => void;
  onOpen?: () => void;
  onClose?: () => void;
}

export class EventSocket {
  private socket: WebSocket | null = null;
  private attempt = 0;
  private stopped = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly hooks: EventSocketHooks,
  ) {}

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
  }

  private connect(): void {
    const socket = new WebSocket(this.url);
    this.socket = socket;

    socket.onopen = () => {
      this.attempt = 0;
      this.hooks.onOpen?.();
    };
    socket.onmessage = (message: MessageEvent) => {
      try {
        this.hooks.onFrame(JSON.parse(String(message.data)) as EventFrame);
      } catch {
        // ignore malformed frames; the stream is advisory
      }
    };
    socket.onclose = () => {
      this.hooks.onClose?.();
      if (this.stopped) return;
      const delay = backoffDelayMs(this.attempt++);
      this.timer = setTimeout(() => this.connect(), delay);
    };
  }
}
