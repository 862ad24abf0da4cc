/** Debounce with cancellation of the in-flight request.
 *
 * Each invocation aborts the previous request's AbortController, so only the
 * latest control change ever resolves into the charts.
 */
export function debouncedFetcher<A extends unknown[], R>(
  run: (signal: AbortSignal, ...args: A) => Promise<R>,
  waitMs: number,
  schedule: (fn: () => void, ms: number) => number = (fn, ms) =>
    setTimeout(fn, ms) as unknown as number,
  cancel: (id: number) => void = (id) => clearTimeout(id),
): (...args: A) => Promise<R> {
  let timer: number | null = null;
  let controller: AbortController | null = null;

  return (...args: A) =>
    new Promise<R>((resolve, reject) => {
      if (timer !== null) cancel(timer);
      timer = schedule(() => {
        controller?.abort();
        controller = new AbortController();
        run(controller.signal, ...args).then(resolve, (err) => {
          if ((err as Error).name !== "AbortError") reject(err);
          // Aborted calls resolve nothing: a newer request owns the panels.
        });
      }, waitMs);
    });
}
