import type {
  ApiErrorBody,
  NotificationView,
  RateSchedule,
  ReviewItem,
  SessionView,
  TripRecord,
  WalletView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody,
  ) {
    super(`${status}: ${body.error}${body.detail ? ` (${body.detail})` : ""}`);
  }
}

type FetchFn = typeof fetch;

/** Thin typed client over the gateway wire contract. */
export class ApiClient {
  constructor(
    public base: string,
    private fetchFn: FetchFn = (...args) => globalThis.fetch(...args),
  ) {}

  private async request<T>(method: "GET" | "POST", path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.base}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const parsed = (await resp.json()) as T;
    if (!resp.ok) {
      throw new ApiError(resp.status, parsed as ApiErrorBody);
    }
    return parsed;
  }

  health(): Promise<{ status: string; events: number }> {
    return this.request("GET", "/v1/health");
  }

  config(): Promise<{ schedule: RateSchedule }> {
    return this.request("GET", "/v1/config");
  }

  wallet(userId: string): Promise<WalletView> {
    return this.request("GET", `/v1/users/${encodeURIComponent(userId)}/wallet`);
  }

  topup(userId: string, amount: number, idempotencyKey?: string) {
    return this.request<{ transaction: unknown; balance: number }>(
      "POST",
      `/v1/users/${encodeURIComponent(userId)}/wallet/topup`,
      { amount, idempotency_key: idempotencyKey },
    );
  }

  trips(userId: string): Promise<{ user_id: string; trips: TripRecord[] }> {
    return this.request("GET", `/v1/users/${encodeURIComponent(userId)}/trips`);
  }

  notifications(userId: string, since: number): Promise<{ notifications: NotificationView[] }> {
    return this.request(
      "GET",
      `/v1/users/${encodeURIComponent(userId)}/notifications?since=${since}`,
    );
  }

  activeSessions(): Promise<{ sessions: SessionView[] }> {
    return this.request("GET", "/v1/sessions?state=active");
  }

  pendingReviews(): Promise<{ reviews: ReviewItem[] }> {
    return this.request("GET", "/v1/reviews?state=pending");
  }

  resolveReview(reviewId: string, action: "approve" | "reject", plate?: string) {
    return this.request<Record<string, unknown>>(
      "POST",
      `/v1/reviews/${encodeURIComponent(reviewId)}/resolve`,
      action === "approve" ? { action, plate } : { action },
    );
  }

  // fixture helpers (used by tests and demos, same wire surface)
  register(plate: string, userId: string, phone: string) {
    return this.request<Record<string, unknown>>("POST", "/v1/registrations", {
      plate,
      user_id: userId,
      phone,
    });
  }

  postEvent(type: "entry" | "exit", plate: string, ts: number, idempotencyKey: string) {
    return this.request<Record<string, unknown>>("POST", "/v1/events", {
      type,
      plate,
      ts,
      idempotency_key: idempotencyKey,
    });
  }
}
