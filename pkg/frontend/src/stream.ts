import type { TraceEvent } from "./types.js";

/** One parsed server-sent-events frame. */
export interface SseFrame {
  id: number | null;
  event: string;
  data: string;
}

/** Incremental SSE parser: feed it arbitrary chunks, it emits whole frames.
 * Frames are separated by a blank line; data lines may repeat. */
export function createSseParser(onFrame: (frame: SseFrame) => void): (chunk: string) => void {
  let buffer = "";
  return (chunk: string) => {
    buffer += chunk;
    let cut = buffer.indexOf("\n\n");
    while (cut !== -1) {
      const block = buffer.slice(0, cut);
      buffer = buffer.slice(cut + 2);
      const frame = parseBlock(block);
      if (frame !== null) {
        onFrame(frame);
      }
      cut = buffer.indexOf("\n\n");
    }
  };
}

function parseBlock(block: string): SseFrame | null {
  let id: number | null = null;
  let event = "message";
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (line.startsWith("id:")) {
      const parsed = Number(line.slice(3).trim());
      id = Number.isFinite(parsed) ? parsed : null;
    } else if (line.startsWith("event:")) {
      event = line.slice(6).trim();
    } else if (line.startsWith("data:")) {
      data.push(line.slice(5).replace(/^ /, ""));
    }
  }
  if (data.length === 0) {
    return null;
  }
  return { id, event, data: data.join("\n") };
}

export type StreamStatus = "connecting" | "streaming" | "polling" | "retrying" | "done";

export interface StreamOptions {
  base: string;
  sessionId: string;
  fetchImpl: typeof fetch;
  onEvent: (event: TraceEvent) => void;
  onStatus?: (status: StreamStatus) => void;
  /** Resume after this sequence number (0 = from the beginning). */
  after?: number;
  retryDelayMs?: number;
}

export interface StreamHandle {
  stop(): void;
  done: Promise<void>;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Consume a session's event stream until the terminal event.
 *
 * Primary path reads the response body incrementally. When the client
 * cannot stream (no readable body), it falls back to polling: each request
 * carries the resume cursor, the full response is parsed once the server
 * closes it, and the loop repeats — the cursor guarantees no duplicates
 * either way. Reconnects resume via the Last-Event-ID header. */
export function streamEvents(options: StreamOptions): StreamHandle {
  let stopped = false;
  let controller: AbortController | null = null;
  let cursor = options.after ?? 0;
  const retryDelay = options.retryDelayMs ?? 1000;

  const deliver = (frame: SseFrame): boolean => {
    if (frame.id !== null && frame.id <= cursor) {
      return false; // already seen (reconnect overlap)
    }
    let event: TraceEvent;
    try {
      event = JSON.parse(frame.data) as TraceEvent;
    } catch {
      return false;
    }
    cursor = frame.id ?? (typeof event.seq === "number" ? event.seq : cursor);
    options.onEvent(event);
    return event.kind === "terminal";
  };

  const done = (async () => {
    while (!stopped) {
      options.onStatus?.("connecting");
      controller = new AbortController();
      const url = `${options.base}/sessions/${options.sessionId}/events?after=${cursor}`;
      const headers: Record<string, string> = { Accept: "text/event-stream" };
      if (cursor > 0) {
        headers["Last-Event-ID"] = String(cursor);
      }
      let response: Response;
      try {
        response = await options.fetchImpl(url, { headers, signal: controller.signal });
      } catch {
        if (stopped) {
          break;
        }
        options.onStatus?.("retrying");
        await sleep(retryDelay);
        continue;
      }
      if (response.status === 404) {
        break; // unknown session: nothing will ever arrive
      }
      if (!response.ok) {
        options.onStatus?.("retrying");
        await sleep(retryDelay);
        continue;
      }

      let terminal = false;
      const feed = createSseParser((frame) => {
        terminal = deliver(frame) || terminal;
      });
      const body = response.body;
      if (body && typeof body.getReader === "function") {
        options.onStatus?.("streaming");
        const reader = body.getReader();
        const decoder = new TextDecoder();
        try {
          for (;;) {
            const { value, done: eof } = await reader.read();
            if (value) {
              feed(decoder.decode(value, { stream: true }));
            }
            if (eof || stopped) {
              break;
            }
          }
        } catch {
          // connection dropped mid-stream; the cursor lets us resume
        }
      } else {
        options.onStatus?.("polling");
        try {
          feed(await response.text());
        } catch {
          // truncated poll; resume from cursor
        }
      }

      if (terminal || stopped) {
        break;
      }
      options.onStatus?.("retrying");
      await sleep(retryDelay);
    }
    options.onStatus?.("done");
  })();

  return {
    stop() {
      stopped = true;
      controller?.abort();
    },
    done,
  };
}
