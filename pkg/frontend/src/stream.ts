// Live inbox updates: server-sent events with a polling fallback.
//
// The scheduling logic is injected with timer functions so tests can run
// it against fake clocks; the EventSource wiring stays in subscribe().

import type { InboxEvent } from './types.js';

export type ConnectionState = 'connecting' | 'live' | 'polling';

export interface StreamCallbacks {
  onEvent: (event: InboxEvent) => void;
  onRefresh: () => void;           // full reconcile (poll tick or stream event)
  onState: (state: ConnectionState) => void;
}

export const POLL_INTERVAL_MS = 5000;
export const RECONNECT_DELAY_MS = 4000;

interface TimerApi {
  setInterval: (fn: () => void, ms: number) => number;
  clearInterval: (id: number) => void;
  setTimeout: (fn: () => void, ms: number) => number;
  clearTimeout: (id: number) => void;
}

/** Drives refresh scheduling: while the stream is down, poll every 5 s
 *  and periodically retry the stream. Pure against the injected timers. */
export class FallbackScheduler {
  private pollId: number | null = null;
  private retryId: number | null = null;

  constructor(
    private timers: TimerApi,
    private refresh: () => void,
    private retryStream: () => void,
  ) {}

  streamUp(): void {
    this.stopPolling();
    if (this.retryId !== null) {
      this.timers.clearTimeout(this.retryId);
      this.retryId = null;
    }
  }

  streamDown(): void {
    if (this.pollId === null) {
      this.pollId = this.timers.setInterval(this.refresh, POLL_INTERVAL_MS);
    }
    if (this.retryId === null) {
      this.retryId = this.timers.setTimeout(() => {
        this.retryId = null;
        this.retryStream();
      }, RECONNECT_DELAY_MS);
    }
  }

  get polling(): boolean {
    return this.pollId !== null;
  }

  stop(): void {
    this.stopPolling();
    if (this.retryId !== null) {
      this.timers.clearTimeout(this.retryId);
      this.retryId = null;
    }
  }

  private stopPolling(): void {
    if (this.pollId !== null) {
      this.timers.clearInterval(this.pollId);
      this.pollId = null;
    }
  }
}

export interface Subscription {
  close: () => void;
}

/** Open the SSE stream for a human's inbox; fall back to polling when the
 *  stream drops and keep retrying it. */
export function subscribe(streamUrl: string, callbacks: StreamCallbacks): Subscription {
  let source: EventSource | null = null;
  let closed = false;

  const timers: TimerApi = {
    setInterval: (fn, ms) => window.setInterval(fn, ms),
    clearInterval: (id) => window.clearInterval(id),
    setTimeout: (fn, ms) => window.setTimeout(fn, ms),
    clearTimeout: (id) => window.clearTimeout(id),
  };
  const scheduler = new FallbackScheduler(
    timers,
    () => callbacks.onRefresh(),
    () => { if (!closed) connect(); },
  );

  function connect(): void {
    callbacks.onState('connecting');
    source?.close();
    source = new EventSource(streamUrl);
    source.addEventListener('open', () => {
      scheduler.streamUp();
      callbacks.onState('live');
      callbacks.onRefresh();
    });
    source.addEventListener('inbox', (raw) => {
      try {
        const event = JSON.parse((raw as MessageEvent).data) as InboxEvent;
        callbacks.onEvent(event);
      } catch {
        // malformed event payload; the refresh below still reconciles
      }
      callbacks.onRefresh();
    });
    source.addEventListener('error', () => {
      source?.close();
      source = null;
      if (!closed) {
        callbacks.onState('polling');
        scheduler.streamDown();
      }
    });
  }

  connect();
  return {
    close: () => {
      closed = true;
      source?.close();
      scheduler.stop();
    },
  };
}
