/** Feed state machine: polling, dialog gating, and override submission.
 *
 * The store is DOM-free so the dialog flow can be exercised against a fixture
 * service in tests. Invariants: a malicious verdict without an override gets
 * exactly one open dialog; polling pauses while that dialog is open; at most
 * one override request is in flight per verdict.
 */

import { OverrideChoice, ServiceApi, Verdict } from "./api.js";

export interface PendingChoice {
  verdictId: string;
  choice: OverrideChoice;
}

export interface StoreState {
  verdicts: Verdict[]; // newest last
  dialogVerdictId: string | null;
  pendingChoice: PendingChoice | null; // preserved across retries
  serviceError: string | null;
  overrideInFlight: boolean;
}

export class FeedStore {
  readonly state: StoreState = {
    verdicts: [],
    dialogVerdictId: null,
    pendingChoice: null,
    serviceError: null,
    overrideInFlight: false,
  };

  private listeners: Array<(s: StoreState) => void> = [];
  private timer: ReturnType<typeof setInterval> | null = null;
  private seen = new Set<string>();
  private answered = new Set<string>(); // overrides known to the client

  constructor(
    private readonly api: ServiceApi,
    readonly pollIntervalMs = 1000,
  ) {}

  onChange(fn: (s: StoreState) => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) {
      fn(this.state);
    }
  }

  start(): void {
    if (this.timer === null) {
      this.timer = setInterval(() => void this.tick(), this.pollIntervalMs);
    }
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  get dialogOpen(): boolean {
    return this.state.dialogVerdictId !== null;
  }

  dialogVerdict(): Verdict | null {
    if (this.state.dialogVerdictId === null) {
      return null;
    }
    return this.state.verdicts.find(
      (v) => v.verdict_id === this.state.dialogVerdictId) ?? null;
  }

  /** One poll step; skipped entirely while the warning dialog is open. */
  async tick(): Promise<void> {
    if (this.dialogOpen) {
      return;
    }
    try {
      const verdicts = await this.api.verdicts(0);
      this.state.serviceError = null;
      for (const v of verdicts) {
        if (!this.seen.has(v.verdict_id)) {
          this.seen.add(v.verdict_id);
          this.state.verdicts.push(v);
        } else {
          const idx = this.state.verdicts.findIndex(
            (x) => x.verdict_id === v.verdict_id);
          if (idx >= 0) {
            this.state.verdicts[idx] = v;
          }
        }
        if (v.override !== null) {
          this.answered.add(v.verdict_id);
        }
      }
      this.openDialogIfNeeded();
    } catch (err) {
      this.state.serviceError = String(err);
    }
    this.emit();
  }

  /** Oldest malicious verdict without an override gets the (single) dialog. */
  private openDialogIfNeeded(): void {
    if (this.dialogOpen) {
      return;
    }
    for (const v of this.state.verdicts) {
      if (v.label === "malicious" && v.override === null
          && !this.answered.has(v.verdict_id)) {
        this.state.dialogVerdictId = v.verdict_id;
        return;
      }
    }
  }

  /** Submit the user's dialog choice; on failure keep it for retry. */
  async choose(choice: OverrideChoice): Promise<boolean> {
    const verdictId = this.state.dialogVerdictId;
    if (verdictId === null || this.state.overrideInFlight) {
      return false;
    }
    this.state.pendingChoice = { verdictId, choice };
    this.state.overrideInFlight = true;
    this.emit();
    try {
      const record = await this.api.submitOverride(verdictId, choice);
      this.answered.add(verdictId);
      const v = this.state.verdicts.find((x) => x.verdict_id === verdictId);
      if (v) {
        v.override = record;
      }
      this.state.pendingChoice = null;
      this.state.dialogVerdictId = null;
      this.state.serviceError = null;
      this.openDialogIfNeeded();
      return true;
    } catch (err) {
      this.state.serviceError = String(err); // retry banner; choice preserved
      return false;
    } finally {
      this.state.overrideInFlight = false;
      this.emit();
    }
  }

  /** Re-submit the preserved choice after a failure. */
  async retryPending(): Promise<boolean> {
    const pending = this.state.pendingChoice;
    if (pending === null) {
      return false;
    }
    this.state.dialogVerdictId = pending.verdictId;
    return this.choose(pending.choice);
  }
}
