export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
  flush(): void;
  pending(): boolean;
}

/** Trailing-edge debounce; the slider uses the default 150 ms window. */
export function debounce<A extends unknown[]>(fn: (...args: A) => void, wait = 150): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let lastArgs: A | null = null;

  const debounced = (...args: A) => {
    lastArgs = args;
    if (timer != null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      const call = lastArgs as A;
      lastArgs = null;
      fn(...call);
    }, wait);
  };

  debounced.cancel = () => {
    if (timer != null) clearTimeout(timer);
    timer = null;
    lastArgs = null;
  };

  debounced.flush = () => {
    if (timer == null) return;
    clearTimeout(timer);
    timer = null;
    const call = lastArgs as A;
    lastArgs = null;
    fn(...call);
  };

  debounced.pending = () => timer != null;

  return debounced;
}
