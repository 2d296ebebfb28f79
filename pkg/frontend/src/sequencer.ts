/** Monotonic ticket counter: a response is accepted only if it is newer than
 * everything already shown, so late arrivals from overtaken requests are
 * dropped instead of flashing an old frame. */
export class SequenceGate {
  private issued = 0;
  private shown = 0;

  issue(): number {
    return ++this.issued;
  }

  accept(ticket: number): boolean {
    if (ticket <= this.shown) return false;
    this.shown = ticket;
    return true;
  }
}

/** Keeps at most one request in flight; while one is running the newest
 * requested argument waits in a single slot (intermediate ones are simply
 * overwritten). Responses pass through a SequenceGate before they reach the
 * canvas. */
export class LatestWins<A, R> {
  private gate = new SequenceGate();
  private inflight = false;
  private queued = false;
  private queuedArg!: A;

  constructor(
    private task: (arg: A) => Promise<R>,
    private show: (result: R, arg: A) => void,
    private fail: (err: unknown, arg: A) => void = () => {},
  ) {}

  request(arg: A): void {
    if (this.inflight) {
      this.queued = true;
      this.queuedArg = arg;
      return;
    }
    void this.launch(arg);
  }

  busy(): boolean {
    return this.inflight;
  }

  private async launch(arg: A): Promise<void> {
    this.inflight = true;
    const ticket = this.gate.issue();
    try {
      const result = await this.task(arg);
      if (this.gate.accept(ticket)) this.show(result, arg);
    } catch (err) {
      if (this.gate.accept(ticket)) this.fail(err, arg);
    } finally {
      this.inflight = false;
      if (this.queued) {
        this.queued = false;
        void this.launch(this.queuedArg);
      }
    }
  }
}
