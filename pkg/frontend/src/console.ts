import { ApiClient, ApiError } from "./api.js";
import { renderApp } from "./render.js";
import { emptyViewModel, validateTopupAmount, type Tab, type ViewModel } from "./state.js";

export interface ConsoleOptions {
  pollMs?: number; // resource polling cadence (2 s in production)
  tickMs?: number; // running-duration repaint cadence
  nowSec?: () => number;
  autoStart?: boolean;
}

/** The whole client: one view model, one render target, cursor-polled
 * resources. `pollNow`/`tickNow` drive it deterministically from tests. */
export class ParkingConsole {
  vm: ViewModel = emptyViewModel();
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private tickTimer: ReturnType<typeof setInterval> | null = null;
  private nowSec: () => number;
  private polling = false;
  private pending: Promise<void> = Promise.resolve();

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private opts: ConsoleOptions = {},
  ) {
    this.nowSec = opts.nowSec ?? (() => Date.now() / 1000);
    this.root.addEventListener("click", (ev) => this.onClick(ev));
    this.root.addEventListener("submit", (ev) => this.onSubmit(ev));
    this.root.addEventListener("change", (ev) => this.onChange(ev));
    this.render();
    if (opts.autoStart !== false) {
      this.start();
    }
  }

  start(): void {
    this.stop();
    this.pollTimer = setInterval(() => void this.pollNow(), this.opts.pollMs ?? 2000);
    this.tickTimer = setInterval(() => this.tickNow(), this.opts.tickMs ?? 1000);
  }

  stop(): void {
    if (this.pollTimer) clearInterval(this.pollTimer);
    if (this.tickTimer) clearInterval(this.tickTimer);
    this.pollTimer = this.tickTimer = null;
  }

  dispose(): void {
    this.stop();
    this.root.innerHTML = "";
  }

  setUser(userId: string): void {
    if (userId === this.vm.userId) return;
    this.vm.userId = userId;
    this.vm.wallet = null;
    this.vm.trips = [];
    this.vm.feed.reset();
    this.render();
  }

  setTab(tab: Tab): void {
    this.vm.tab = tab;
    this.render();
  }

  /** Fetch every resource the current view depends on, then repaint.
   * Requests are serialized; an in-flight poll makes this one a no-op. */
  async pollNow(): Promise<void> {
    if (this.polling) return;
    this.polling = true;
    try {
      if (this.vm.schedule === null) {
        this.vm.schedule = (await this.api.config()).schedule;
      }
      if (this.vm.userId) {
        this.vm.wallet = await this.api.wallet(this.vm.userId);
        this.vm.trips = (await this.api.trips(this.vm.userId)).trips;
        const batch = await this.api.notifications(this.vm.userId, this.vm.feed.cursor);
        this.vm.feed.ingest(batch.notifications);
      }
      this.vm.activeSessions = (await this.api.activeSessions()).sessions;
      this.vm.reviews = (await this.api.pendingReviews()).reviews;
      this.vm.connection = "ok";
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        // unknown user: show empty state, connection itself is fine
        this.vm.connection = "ok";
      } else {
        this.vm.connection = "lost";
      }
    } finally {
      this.polling = false;
    }
    this.render();
  }

  /** Repaint only; running durations recompute from the client clock. */
  tickNow(): void {
    this.render();
  }

  /** Wait for the last user-triggered action (form submit, button) to land. */
  async settle(): Promise<void> {
    await this.pending;
  }

  private async submitTopup(raw: string): Promise<void> {
    const { amount, error } = validateTopupAmount(raw);
    if (error !== undefined || amount === undefined) {
      this.vm.topupError = error ?? "invalid amount";
      this.render();
      return; // no request leaves the client
    }
    this.vm.topupError = null;
    try {
      await this.api.topup(this.vm.userId, amount, `console-${Date.now()}-${amount}`);
      // no optimistic balance: re-fetch the ledger and show the server's sum
      this.vm.wallet = await this.api.wallet(this.vm.userId);
    } catch (err) {
      this.vm.topupError = err instanceof ApiError ? err.body.error : "request failed";
    }
    this.render();
  }

  private async resolveReview(reviewId: string, action: "approve" | "reject"): Promise<void> {
    this.vm.lastActionError = null;
    try {
      let plate: string | undefined;
      if (action === "approve") {
        const row = this.root.querySelector(`[data-review="${reviewId}"][data-testid="review"]`);
        const select = row?.querySelector<HTMLSelectElement>("[data-testid=review-plate]");
        plate = select?.value;
      }
      await this.api.resolveReview(reviewId, action, plate);
    } catch (err) {
      this.vm.lastActionError = err instanceof ApiError ? err.body.error : "request failed";
    }
    await this.pollNow(); // queue and session table reflect the server
  }

  private onClick(ev: Event): void {
    const target = ev.target as HTMLElement;
    const tab = target.getAttribute("data-tab");
    if (tab) {
      this.setTab(tab as Tab);
      return;
    }
    if (target.getAttribute("data-testid") === "retry") {
      this.pending = this.pollNow();
      return;
    }
    const action = target.getAttribute("data-action");
    const review = target.getAttribute("data-review");
    if (action && review && (action === "approve" || action === "reject")) {
      this.pending = this.resolveReview(review, action);
    }
  }

  private onSubmit(ev: Event): void {
    const form = ev.target as HTMLElement;
    if (form.getAttribute("data-testid") === "topup-form") {
      ev.preventDefault();
      const input = form.querySelector<HTMLInputElement>("[data-testid=topup-amount]");
      this.pending = this.submitTopup(input?.value ?? "");
    }
  }

  private onChange(ev: Event): void {
    const target = ev.target as HTMLInputElement;
    if (target.getAttribute("data-testid") === "user-input") {
      this.setUser(target.value.trim());
      this.pending = this.pollNow();
    }
  }

  private render(): void {
    const focused = document.activeElement;
    const keepValue =
      focused instanceof HTMLInputElement &&
      focused.getAttribute("data-testid") === "topup-amount"
        ? focused.value
        : null;
    this.root.innerHTML = renderApp(this.vm, this.nowSec());
    if (keepValue !== null) {
      const input = this.root.querySelector<HTMLInputElement>("[data-testid=topup-amount]");
      if (input) input.value = keepValue;
    }
  }
}

export function createConsole(
  root: HTMLElement,
  api: ApiClient,
  opts: ConsoleOptions = {},
): ParkingConsole {
  return new ParkingConsole(root, api, opts);
}
