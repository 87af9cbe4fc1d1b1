import { formatClock, formatElapsed, formatMoney, reconcileTripFee } from "./fees.js";
import { deriveActiveSession, type Tab, type ViewModel } from "./state.js";

const TABS: { id: Tab; label: string }[] = [
  { id: "home", label: "Home" },
  { id: "wallet", label: "Wallet" },
  { id: "trips", label: "Trips" },
  { id: "operator", label: "Operator" },
];

function esc(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function banner(vm: ViewModel): string {
  if (vm.connection === "ok") return "";
  return `<div class="banner" data-testid="banner">
    connection lost — retrying
    <button data-testid="retry">retry now</button>
  </div>`;
}

function homeTab(vm: ViewModel, nowSec: number): string {
  const active = deriveActiveSession(vm.feed.items);
  if (!active) {
    return `<section><h2>Home</h2>
      <p data-testid="no-session">No active parking session.</p>
      ${notificationsList(vm)}</section>`;
  }
  const elapsed = formatElapsed(nowSec - active.entryTs);
  return `<section><h2>Home</h2>
    <div class="card" data-testid="active-session" data-session="${esc(active.sessionId)}">
      <div class="plate">${esc(active.plate)}</div>
      <div>entered ${formatClock(active.entryTs)}</div>
      <div class="duration" data-testid="running-duration">${elapsed}</div>
    </div>
    ${notificationsList(vm)}</section>`;
}

function notificationsList(vm: ViewModel): string {
  const cards = vm.feed.items
    .map((n) => {
      const body =
        n.kind === "entry"
          ? `entered at ${formatClock(n.body.entry_ts)}`
          : `exited after ${n.body.duration_min} min, fee ${formatMoney(n.body.fee ?? 0)}`;
      return `<li class="note note-${n.kind}" data-seq="${n.seq}">
        <b>${esc(n.body.plate)}</b> ${n.kind}: ${body}</li>`;
    })
    .join("");
  return `<h3>Notifications</h3>
    <ul class="notes" data-testid="notifications">${cards}</ul>`;
}

function walletTab(vm: ViewModel): string {
  if (!vm.wallet) return `<section><h2>Wallet</h2><p>loading…</p></section>`;
  const rows = vm.wallet.transactions
    .map(
      (t) => `<tr data-seq="${t.seq}">
        <td>${t.seq}</td><td>${esc(t.kind)}</td>
        <td class="num">${t.kind === "charge" ? "-" : "+"}${formatMoney(t.amount)}</td>
        <td>${t.ref ? esc(t.ref) : ""}</td></tr>`,
    )
    .join("");
  return `<section><h2>Wallet</h2>
    <div class="card">
      <div class="balance" data-testid="wallet-balance">${formatMoney(vm.wallet.balance)}</div>
      ${vm.wallet.delinquent ? `<div class="warn" data-testid="delinquent">balance overdrawn</div>` : ""}
    </div>
    <form data-testid="topup-form">
      <input name="amount" data-testid="topup-amount" placeholder="amount (minor units)" />
      <button type="submit" data-testid="topup-submit">Add money</button>
      ${vm.topupError ? `<span class="error" data-testid="topup-error">${esc(vm.topupError)}</span>` : ""}
    </form>
    <table class="grid" data-testid="transactions">
      <thead><tr><th>#</th><th>kind</th><th>amount</th><th>session</th></tr></thead>
      <tbody>${rows}</tbody>
    </table></section>`;
}

function tripsTab(vm: ViewModel): string {
  if (!vm.schedule) return `<section><h2>Trips</h2><p>loading…</p></section>`;
  const schedule = vm.schedule;
  const rows = vm.trips
    .map((trip) => {
      const bill = reconcileTripFee(trip, schedule);
      const check = bill.reconciled
        ? `<span class="ok" data-testid="fee-check">✓ matches schedule</span>`
        : `<span class="error" data-testid="fee-mismatch">✗ does not match schedule
             (recomputed ${formatMoney(bill.clientTotal)})</span>`;
      return `<div class="card bill" data-testid="bill" data-session="${esc(trip.session_id)}">
        <div class="plate">${esc(trip.plate)}</div>
        <div>in ${formatClock(trip.entry_ts)} / out ${formatClock(trip.exit_ts)}</div>
        <div>duration ${trip.duration_min} min</div>
        <div>base ${formatMoney(bill.baseFee)}
             + ${bill.blocks} block(s) ${formatMoney(bill.blockFee)}</div>
        <div class="fee" data-testid="trip-fee">${formatMoney(trip.fee)}</div>
        ${check}
      </div>`;
    })
    .join("");
  return `<section><h2>Trips</h2>
    <div data-testid="trips">${rows || "<p data-testid='no-trips'>No trips yet.</p>"}</div></section>`;
}

function operatorTab(vm: ViewModel): string {
  const sessions = vm.activeSessions
    .map(
      (s) => `<tr data-testid="op-session" data-plate="${esc(s.plate)}">
        <td>${esc(s.session_id)}</td><td>${esc(s.plate)}</td>
        <td>${formatClock(s.entry_ts)}</td></tr>`,
    )
    .join("");
  const reviews = vm.reviews
    .map((r) => {
      const options = r.candidates
        .map((c) => `<option value="${esc(c)}">${esc(c)}</option>`)
        .join("");
      return `<tr data-testid="review" data-review="${esc(r.review_id)}">
        <td>${esc(r.review_id)}</td><td>${esc(r.event_type)}</td>
        <td>${esc(r.reading_text)}</td>
        <td><select data-testid="review-plate">${options}</select></td>
        <td><button data-action="approve" data-review="${esc(r.review_id)}">approve</button>
            <button data-action="reject" data-review="${esc(r.review_id)}">reject</button></td>
      </tr>`;
    })
    .join("");
  return `<section><h2>Operator</h2>
    ${vm.lastActionError ? `<div class="error" data-testid="action-error">${esc(vm.lastActionError)}</div>` : ""}
    <h3>Active sessions</h3>
    <table class="grid" data-testid="op-sessions">
      <thead><tr><th>session</th><th>plate</th><th>entered</th></tr></thead>
      <tbody>${sessions}</tbody></table>
    <h3>Manual review</h3>
    <table class="grid" data-testid="op-reviews">
      <thead><tr><th>id</th><th>type</th><th>read</th><th>resolve to</th><th></th></tr></thead>
      <tbody>${reviews}</tbody></table></section>`;
}

export function renderApp(vm: ViewModel, nowSec: number): string {
  const tabs = TABS.map(
    (t) => `<button class="tab ${vm.tab === t.id ? "tab-active" : ""}"
      data-tab="${t.id}" data-testid="tab-${t.id}">${t.label}</button>`,
  ).join("");
  const body =
    vm.tab === "home"
      ? homeTab(vm, nowSec)
      : vm.tab === "wallet"
        ? walletTab(vm)
        : vm.tab === "trips"
          ? tripsTab(vm)
          : operatorTab(vm);
  return `<header>
      <h1>parking console</h1>
      <input data-testid="user-input" placeholder="user id" value="${esc(vm.userId)}" />
      <nav>${tabs}</nav>
    </header>
    ${banner(vm)}
    <main>${body}</main>`;
}
