// Request discipline for the render/solve channels: at most one in-flight
// request per channel, a single pending slot that newer work overwrites,
// and sequence numbers so responses that arrive late never clobber newer
// state. The server applies the same newest-wins policy on its side; doing
// it here too keeps at most one request on the wire.

export class LatestWins<T, R> {
    private inFlight = false;
    private pending: T | null = null;
    private seq = 0;
    private applied = 0;

    constructor(
        private run: (work: T) => Promise<R>,
        private apply: (result: R, work: T) => void,
        private onError?: (err: unknown) => void,
    ) {}

    get busy(): boolean {
        return this.inFlight;
    }

    get hasPending(): boolean {
        return this.pending !== null;
    }

    submit(work: T): void {
        if (this.inFlight) {
            this.pending = work; // overwrite: only the newest matters
            return;
        }
        void this.launch(work);
    }

    private async launch(work: T): Promise<void> {
        this.inFlight = true;
        const ticket = ++this.seq;
        try {
            const result = await this.run(work);
            if (ticket > this.applied) {
                this.applied = ticket;
                this.apply(result, work);
            }
        } catch (err) {
            if (this.onError) this.onError(err);
        } finally {
            this.inFlight = false;
            if (this.pending !== null) {
                const next = this.pending;
                this.pending = null;
                void this.launch(next);
            }
        }
    }
}

// Exponential backoff with a cap; drives the "server unreachable" banner.
export class Backoff {
    failures = 0;

    constructor(
        public baseMs = 500,
        public maxMs = 10_000,
    ) {}

    get visible(): boolean {
        return this.failures > 0;
    }

    nextDelay(): number {
        const delay = Math.min(this.maxMs, this.baseMs * 2 ** this.failures);
        this.failures += 1;
        return delay;
    }

    reset(): void {
        this.failures = 0;
    }
}
