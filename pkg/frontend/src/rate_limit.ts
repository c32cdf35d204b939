/** Sliding-window rate limiter for outbound commands. */

export const MAX_MESSAGES_PER_SECOND = 20;

export class RateLimiter {
  private stamps: number[] = [];

  constructor(
    private readonly limit: number = MAX_MESSAGES_PER_SECOND,
    private readonly windowMs: number = 1000,
  ) {}

  /** True if a message may be sent at `now` (ms); records the send if so. */
  allow(now: number): boolean {
    const cutoff = now - this.windowMs;
    while (this.stamps.length > 0 && this.stamps[0]! <= cutoff) {
      this.stamps.shift();
    }
    if (this.stamps.length >= this.limit) return false;
    this.stamps.push(now);
    return true;
  }

  /** Milliseconds until the next send would be allowed. */
  retryIn(now: number): number {
    if (this.stamps.length < this.limit) return 0;
    return Math.max(0, this.stamps[0]! + this.windowMs - now);
  }
}
