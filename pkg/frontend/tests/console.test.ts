// Browser-level tests: a real DOM (happy-dom) driving the real gateway.

import { afterAll, afterEach, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ParkingConsole, createConsole } from "../src/console.js";
import { freshIdentity, startGateway, type GatewayFixture } from "./fixture.js";

let gw: GatewayFixture;
let api: ApiClient;
const consoles: ParkingConsole[] = [];

beforeAll(async () => {
  gw = await startGateway();
  api = new ApiClient(gw.base);
});

afterAll(() => {
  gw.stop();
});

afterEach(() => {
  while (consoles.length) {
    consoles.pop()!.dispose();
  }
  document.body.innerHTML = "";
});

function mount(client: ApiClient = api, nowSec?: () => number): ParkingConsole {
  const root = document.createElement("div");
  document.body.appendChild(root);
  const console_ = createConsole(root, client, { autoStart: false, nowSec });
  consoles.push(console_);
  return console_;
}

function el<T extends HTMLElement>(root: ParkingConsole, testid: string): T {
  const node = document.querySelector<T>(`[data-testid="${testid}"]`);
  if (!node) throw new Error(`missing [data-testid=${testid}]`);
  return node;
}

function maybeEl(testid: string): HTMLElement | null {
  return document.querySelector(`[data-testid="${testid}"]`);
}

describe("wallet screen", () => {
  it("re-fetches the balance after a top-up instead of trusting itself", async () => {
    const { plate, user } = freshIdentity();
    await api.register(plate, user, "+919900112233");
    const app = mount();
    app.setUser(user);
    await app.pollNow();
    app.setTab("wallet");
    expect(el(app, "wallet-balance").textContent).toBe("0.00");

    const input = el<HTMLInputElement>(app, "topup-amount");
    input.value = "5000";
    el(app, "topup-form").dispatchEvent(
      new Event("submit", { bubbles: true, cancelable: true }),
    );
    await app.settle();

    // the rendered figure is the server's ledger sum
    expect(el(app, "wallet-balance").textContent).toBe("50.00");
    const serverBalance = (await api.wallet(user)).balance;
    expect(serverBalance).toBe(5000);
    const rows = document.querySelectorAll("[data-testid=transactions] tbody tr");
    expect(rows.length).toBe(1);
  });

  it("rejects a zero top-up client-side without any request", async () => {
    const { plate, user } = freshIdentity();
    await api.register(plate, user, "+919900112233");
    let topupCalls = 0;
    const counting = new (class extends ApiClient {
      override topup(userId: string, amount: number, key?: string) {
        topupCalls += 1;
        return super.topup(userId, amount, key);
      }
    })(gw.base);
    const app = mount(counting);
    app.setUser(user);
    await app.pollNow();
    app.setTab("wallet");

    const input = el<HTMLInputElement>(app, "topup-amount");
    input.value = "0";
    el(app, "topup-form").dispatchEvent(
      new Event("submit", { bubbles: true, cancelable: true }),
    );
    await app.settle();

    expect(topupCalls).toBe(0);
    expect(el(app, "topup-error").textContent).toContain("positive");
    expect(el(app, "wallet-balance").textContent).toBe("0.00");
  });
});

describe("trips and bill screen", () => {
  it("shows the server fee and asserts the client recomputation matches", async () => {
    const { plate, user } = freshIdentity();
    await api.register(plate, user, "+919900112233");
    const t0 = 1_700_000_000;
    await api.postEvent("entry", plate, t0, `${plate}-in`);
    await api.postEvent("exit", plate, t0 + 95 * 60, `${plate}-out`);

    const app = mount();
    app.setUser(user);
    await app.pollNow();
    app.setTab("trips");

    const bills = document.querySelectorAll("[data-testid=bill]");
    expect(bills.length).toBe(1);
    expect(el(app, "trip-fee").textContent).toBe("40.00");
    expect(maybeEl("fee-check")).not.toBeNull(); // reconciliation passed
    expect(maybeEl("fee-mismatch")).toBeNull();
    const serverFee = (await api.trips(user)).trips[0]!.fee;
    expect(serverFee).toBe(4000);
  });

  it("lists trips newest first", async () => {
    const { plate, user } = freshIdentity();
    const second = freshIdentity().plate;
    await api.register(plate, user, "+919900112233");
    await api.register(second, user, "+919900112233");
    const t0 = 1_700_100_000;
    await api.postEvent("entry", plate, t0, `${plate}-in`);
    await api.postEvent("exit", plate, t0 + 600, `${plate}-out`);
    await api.postEvent("entry", second, t0 + 5000, `${second}-in`);
    await api.postEvent("exit", second, t0 + 8000, `${second}-out`);

    const app = mount();
    app.setUser(user);
    await app.pollNow();
    app.setTab("trips");
    const plates = [...document.querySelectorAll("[data-testid=bill] .plate")].map(
      (n) => n.textContent,
    );
    expect(plates).toEqual([second, plate]);
  });
});

describe("home screen", () => {
  it("shows the running session with a ticking duration", async () => {
    const { plate, user } = freshIdentity();
    await api.register(plate, user, "+919900112233");
    let now = 1_700_200_000 + 600; // entry happened 10 minutes ago
    await api.postEvent("entry", plate, 1_700_200_000, `${plate}-in`);

    const app = mount(api, () => now);
    app.setUser(user);
    await app.pollNow();

    expect(el(app, "running-duration").textContent).toBe("10:00");
    now += 2;
    app.tickNow();
    expect(el(app, "running-duration").textContent).toBe("10:02");
  });

  it("shows the empty state without a session", async () => {
    const { plate, user } = freshIdentity();
    await api.register(plate, user, "+919900112233");
    const app = mount();
    app.setUser(user);
    await app.pollNow();
    expect(maybeEl("no-session")).not.toBeNull();
  });

  it("renders notifications in seq order and never twice", async () => {
    const { plate, user } = freshIdentity();
    await api.register(plate, user, "+919900112233");
    const t0 = 1_700_300_000;
    await api.postEvent("entry", plate, t0, `${plate}-in`);
    await api.postEvent("exit", plate, t0 + 1200, `${plate}-out`);

    const app = mount();
    app.setUser(user);
    await app.pollNow();
    await app.pollNow(); // second poll must not duplicate anything
    const seqs = [...document.querySelectorAll("[data-testid=notifications] li")].map(
      (n) => Number(n.getAttribute("data-seq")),
    );
    expect(seqs.length).toBe(2);
    expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
    expect(new Set(seqs).size).toBe(seqs.length);
  });

  it("shows a connection-lost banner with retry when the gateway is down", async () => {
    const dead = new ApiClient("http://127.0.0.1:9"); // nothing listens here
    const app = mount(dead);
    app.setUser("whoever");
    await app.pollNow();
    expect(maybeEl("banner")).not.toBeNull();
    expect(maybeEl("retry")).not.toBeNull();
  });
});

describe("operator tab", () => {
  it("lists active sessions and resolves a manual review into one", async () => {
    // two registrations one lookalike apart force an ambiguous read
    const suffix = String(2000 + ((Date.now() / 7) % 7000 | 0));
    const plateD = `MD77AD${suffix}`;
    const plateQ = `MQ77AD${suffix}`;
    const reading = `MO77AD${suffix}`;
    await api.register(plateD, "op-user-d", "+919900112233");
    await api.register(plateQ, "op-user-q", "+919900112233");
    const resp = (await api.postEvent("entry", reading, 1_700_400_000, `${reading}-in`)) as {
      status?: string;
      review_id?: string;
    };
    expect(resp.status).toBe("manual_review");

    const app = mount();
    await app.pollNow();
    app.setTab("operator");

    const row = document.querySelector(`[data-testid=review][data-review="${resp.review_id}"]`);
    expect(row).not.toBeNull();
    const select = row!.querySelector<HTMLSelectElement>("[data-testid=review-plate]")!;
    select.value = plateQ;
    row!
      .querySelector<HTMLButtonElement>(`button[data-action="approve"]`)!
      .dispatchEvent(new MouseEvent("click", { bubbles: true }));
    await app.settle();

    // the review left the queue and the session is live
    expect(
      document.querySelector(`[data-testid=review][data-review="${resp.review_id}"]`),
    ).toBeNull();
    const sessionRow = document.querySelector(
      `[data-testid=op-session][data-plate="${plateQ}"]`,
    );
    expect(sessionRow).not.toBeNull();
    const serverSessions = (await api.activeSessions()).sessions;
    expect(serverSessions.some((s) => s.plate === plateQ)).toBe(true);
  });
});
