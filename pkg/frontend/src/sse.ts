/** Minimal SSE reader over fetch streaming.
 *
 * Works in browsers and under node/jsdom (no EventSource dependency).
 * Only `data:` lines are used; comment lines are server keep-alives.
 */

export function parseSseChunk(buffer: string, emit: (data: string) => void): string {
  let rest = buffer;
  for (;;) {
    const cut = rest.indexOf("\n");
    if (cut < 0) return rest;
    const line = rest.slice(0, cut).replace(/\r$/, "");
    rest = rest.slice(cut + 1);
    if (line.startsWith("data: ")) emit(line.slice("data: ".length));
    else if (line.startsWith("data:")) emit(line.slice("data:".length));
  }
}

export interface SseHandle {
  close(): void;
}

export function subscribeSse(
  url: string,
  onData: (data: string) => void,
  onError?: (error: unknown) => void,
): SseHandle {
  const controller = new AbortController();
  (async () => {
    try {
      const response = await fetch(url, {
        signal: controller.signal,
        headers: { Accept: "text/event-stream" },
      });
      if (!response.ok || response.body === null) {
        throw new Error(`event stream failed: ${response.status}`);
      }
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        buffer = parseSseChunk(buffer + decoder.decode(value, { stream: true }), onData);
      }
    } catch (error) {
      if (!controller.signal.aborted && onError) onError(error);
    }
  })();
  return { close: () => controller.abort() };
}
