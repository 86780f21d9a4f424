/**
 * Request sequencing: at most one applied response per scenario, latest
 * edit wins, stale responses discarded by monotonic sequence number.
 */

export class LatestWins {
  private nextSeq = 0;
  private applied = -1;

  /** Reserve a sequence number for a request about to be sent. */
  begin(): number {
    return this.nextSeq++;
  }

  /** True when the response may be applied; stale responses return false. */
  accept(seq: number): boolean {
    if (seq <= this.applied) {
      return false;
    }
    this.applied = seq;
    return true;
  }
}

export type Debounced<T extends unknown[]> = ((...args: T) => void) & {
  cancel: () => void;
};

/** Trailing-edge debounce; slider storms collapse into one call. */
export function debounce<T extends unknown[]>(
  waitMs: number,
  fn: (...args: T) => void,
): Debounced<T> {
  let handle: ReturnType<typeof setTimeout> | undefined;
  const wrapped = (...args: T) => {
    if (handle !== undefined) {
      clearTimeout(handle);
    }
    handle = setTimeout(() => {
      handle = undefined;
      fn(...args);
    }, waitMs);
  };
  wrapped.cancel = () => {
    if (handle !== undefined) {
      clearTimeout(handle);
      handle = undefined;
    }
  };
  return wrapped;
}
