// Pure view-model layer: inbox entries in, renderable card views out.
// No DOM access here so everything is unit-testable.

import type { InboxEntry, Block, Primitive } from './types.js';

export interface CardButton {
  label: string;
  actionId: string;
  danger: boolean;
}

export interface CardView {
  interactionId: string;
  primitive: Primitive;
  state: string;
  title: string;
  bodyText: string;
  buttons: CardButton[];
  needsTextInput: boolean;
  riskAlert: boolean;
  malformed: boolean;
  rawFallback: string;
}

/** Build the view for one entry. Malformed blocks degrade to a raw-document
 *  fallback card rather than a blank screen. Button labels and order come
 *  straight from the blocks, preserving message order exactly. */
export function buildCardView(entry: InboxEntry): CardView {
  const base: CardView = {
    interactionId: entry.interaction_id,
    primitive: entry.primitive,
    state: entry.state,
    title: '',
    bodyText: '',
    buttons: [],
    needsTextInput: entry.primitive === 'SOLICITATION',
    riskAlert: entry.primitive === 'PERMISSION',
    malformed: false,
    rawFallback: '',
  };
  const content = entry.rendered?.content;
  const blocks = typeof content === 'object' && content !== null
    ? (content as { blocks?: Block[] }).blocks
    : undefined;
  if (entry.rendered?.content_kind !== 'BLOCKS_DOC' || !Array.isArray(blocks)) {
    return { ...base, malformed: true, title: 'Unreadable card', rawFallback: JSON.stringify(entry.rendered ?? entry, null, 2) };
  }
  try {
    for (const block of blocks) {
      if (block.type === 'header' && block.text) {
        base.title = block.text.text;
      } else if (block.type === 'section' && block.text) {
        base.bodyText = block.text.text;
      } else if (block.type === 'actions' && Array.isArray(block.elements)) {
        for (const el of block.elements) {
          base.buttons.push({
            label: el.text.text,
            actionId: el.action_id,
            danger: el.style === 'danger',
          });
        }
      }
    }
  } catch {
    return { ...base, malformed: true, title: 'Unreadable card', rawFallback: JSON.stringify(entry.rendered, null, 2) };
  }
  if (!base.title) {
    return { ...base, malformed: true, title: 'Unreadable card', rawFallback: JSON.stringify(entry.rendered, null, 2) };
  }
  return base;
}

/** The server's pending list is the single source of truth: the next view
 *  is exactly the server set, newest first, as delivered. */
export function reconcile(serverEntries: InboxEntry[]): CardView[] {
  return serverEntries.map(buildCardView);
}

export type SubmitState = 'idle' | 'submitting' | 'done';

/** Per-interaction submission lock: the UI can never send two responses
 *  for one entry in one session. Controls lock on first submit and only
 *  unlock again after a network failure (retry affordance). */
export class SubmissionLock {
  private states = new Map<string, SubmitState>();

  stateOf(interactionId: string): SubmitState {
    return this.states.get(interactionId) ?? 'idle';
  }

  canSubmit(interactionId: string): boolean {
    return this.stateOf(interactionId) === 'idle';
  }

  /** Returns false when a submission is already in flight or done. */
  begin(interactionId: string): boolean {
    if (!this.canSubmit(interactionId)) return false;
    this.states.set(interactionId, 'submitting');
    return true;
  }

  /** Server answered (accepted or already-handled): locked for good. */
  settle(interactionId: string): void {
    this.states.set(interactionId, 'done');
  }

  /** Network failure: allow a retry. */
  fail(interactionId: string): void {
    this.states.set(interactionId, 'idle');
  }
}
