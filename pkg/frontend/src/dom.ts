// DOM construction for card views. Kept thin: all decisions live in the
// view models from cards.ts.

import type { CardView } from './cards.js';

export interface CardHandlers {
  onClick: (view: CardView, actionId: string) => void;
  onText: (view: CardView, text: string) => void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderCard(view: CardView, handlers: CardHandlers): HTMLElement {
  const card = el('article', 'card' + (view.riskAlert ? ' risk' : ''));
  card.dataset.interactionId = view.interactionId;

  const tag = el('span', 'tag', view.primitive);
  const title = el('h3', 'title', view.title);
  const head = el('header');
  head.append(tag, title);
  card.append(head);

  if (view.malformed) {
    const pre = el('pre', 'fallback', view.rawFallback);
    card.append(el('p', 'notice', 'This card could not be rendered; raw document below.'), pre);
    return card;
  }

  if (view.bodyText) {
    const body = el('p', 'body');
    body.textContent = view.bodyText;
    card.append(body);
  }

  const controls = el('div', 'controls');
  for (const button of view.buttons) {
    const b = el('button', button.danger ? 'action danger' : 'action', button.label);
    b.dataset.actionId = button.actionId;
    b.addEventListener('click', () => handlers.onClick(view, button.actionId));
    controls.append(b);
  }
  if (view.needsTextInput) {
    const input = el('input', 'data-input') as HTMLInputElement;
    input.placeholder = 'type your reply';
    const send = el('button', 'action', 'Send');
    send.addEventListener('click', () => {
      if (input.value.trim()) handlers.onText(view, input.value);
    });
    controls.append(input, send);
  }
  if (controls.childElementCount > 0) {
    card.append(controls);
  }
  const meta = el('footer', 'meta', `${view.state} · ${view.interactionId}`);
  card.append(meta);
  return card;
}

export function setCardLocked(root: HTMLElement, interactionId: string, locked: boolean): void {
  const card = root.querySelector<HTMLElement>(
    `[data-interaction-id="${interactionId}"]`);
  if (!card) return;
  card.classList.toggle('locked', locked);
  card.querySelectorAll<HTMLButtonElement>('button, input').forEach((node) => {
    (node as HTMLButtonElement).disabled = locked;
  });
}

export function showNotice(container: HTMLElement, text: string, kind: 'info' | 'error' = 'info'): void {
  const note = el('div', `toast ${kind}`, text);
  container.append(note);
  setTimeout(() => note.remove(), 4000);
}
