// Inbox app: pick a human, watch their pending interactions, answer them.
// The server is the single source of truth; the only client state is the
// current view plus per-card submission locks.

import { ApiClient, ApiFailure, pickResponderIdentity } from './api.js';
import { SubmissionLock, buildCardView, reconcile } from './cards.js';
import type { CardView } from './cards.js';
import { renderCard, setCardLocked, showNotice } from './dom.js';
import { subscribe } from './stream.js';
import type { Subscription } from './stream.js';
import type { CardDoc } from './types.js';

const api = new ApiClient('');
const lock = new SubmissionLock();

const picker = document.getElementById('human-picker') as HTMLSelectElement;
const list = document.getElementById('cards') as HTMLElement;
const toasts = document.getElementById('toasts') as HTMLElement;
const connection = document.getElementById('connection') as HTMLElement;

let current: CardDoc | null = null;
let subscription: Subscription | null = null;

async function loadHumans(): Promise<void> {
  const cards = await api.listCards();
  picker.replaceChildren();
  const blank = document.createElement('option');
  blank.value = '';
  blank.textContent = 'choose…';
  picker.append(blank);
  for (const card of cards) {
    const option = document.createElement('option');
    option.value = card.id;
    option.textContent = `${card.profile.name} (${card.id})`;
    picker.append(option);
  }
}

async function refreshInbox(): Promise<void> {
  if (!current) return;
  const entries = await api.inbox(current.id);
  const views = reconcile(entries);
  list.replaceChildren();
  if (views.length === 0) {
    const empty = document.createElement('p');
    empty.className = 'empty';
    empty.textContent = 'Inbox empty.';
    list.append(empty);
    return;
  }
  for (const view of views) {
    list.append(renderCard(view, { onClick: submitClick, onText: submitText }));
    if (!lock.canSubmit(view.interactionId)) {
      setCardLocked(list, view.interactionId, true);
    }
  }
}

async function submit(view: CardView, event: { action_id?: string; text?: string }): Promise<void> {
  if (!current) return;
  if (!lock.begin(view.interactionId)) {
    showNotice(toasts, 'already handled');
    return;
  }
  setCardLocked(list, view.interactionId, true);
  const identity = pickResponderIdentity(current);
  try {
    const result = await api.respond(view.interactionId, { ...identity, ...event });
    lock.settle(view.interactionId);
    if (result.accepted) {
      showNotice(toasts, `response accepted (${result.state})`);
    } else {
      showNotice(toasts, 'already handled');
    }
    await refreshInbox();
  } catch (err) {
    if (err instanceof ApiFailure) {
      // Protocol errors (e.g. KIND_MISMATCH) are final; surface verbatim.
      lock.settle(view.interactionId);
      showNotice(toasts, `${err.code}: ${err.message}`, 'error');
    } else {
      // Network failure: unlock so the human can retry.
      lock.fail(view.interactionId);
      setCardLocked(list, view.interactionId, false);
      showNotice(toasts, 'network failure, try again', 'error');
    }
  }
}

function submitClick(view: CardView, actionId: string): void {
  void submit(view, { action_id: actionId });
}

function submitText(view: CardView, text: string): void {
  void submit(view, { text });
}

async function selectHuman(id: string): Promise<void> {
  subscription?.close();
  subscription = null;
  list.replaceChildren();
  if (!id) {
    current = null;
    return;
  }
  current = await api.getCard(id);
  await refreshInbox();
  subscription = subscribe(api.streamUrl(id), {
    onEvent: () => { /* refresh below reconciles the full view */ },
    onRefresh: () => { void refreshInbox(); },
    onState: (state) => {
      connection.textContent = state;
      connection.className = `connection ${state}`;
    },
  });
}

picker.addEventListener('change', () => { void selectHuman(picker.value); });

void loadHumans().catch((err) => {
  showNotice(toasts, `cannot reach service: ${err}`, 'error');
});

export {};
