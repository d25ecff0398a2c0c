// Thin fetch client for the /v1 endpoints.

import type { CardDoc, InboxEntry, RespondResult } from './types.js';

export class ApiFailure extends Error {
  constructor(public code: string, message: string) {
    super(message);
  }
}

async function check<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = `HTTP_${response.status}`;
    let message = response.statusText;
    try {
      const doc = await response.json();
      code = doc.error ?? code;
      message = doc.message ?? message;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiFailure(code, message);
  }
  return response.json() as Promise<T>;
}

export function bareId(humanId: string): string {
  return humanId.replace(/^human:\/\//, '');
}

export class ApiClient {
  constructor(private baseUrl: string = '') {}

  async listCards(): Promise<CardDoc[]> {
    const doc = await check<{ cards: CardDoc[] }>(
      await fetch(`${this.baseUrl}/v1/cards`));
    return doc.cards;
  }

  async getCard(humanId: string): Promise<CardDoc> {
    return check<CardDoc>(
      await fetch(`${this.baseUrl}/v1/cards/${bareId(humanId)}`));
  }

  async inbox(humanId: string): Promise<InboxEntry[]> {
    const doc = await check<{ entries: InboxEntry[] }>(
      await fetch(`${this.baseUrl}/v1/inbox/${bareId(humanId)}`));
    return doc.entries;
  }

  /** POST a channel event (button click or text) for an interaction. */
  async respond(interactionId: string, event: {
    channel: string; actor: string; action_id?: string; text?: string;
  }): Promise<RespondResult> {
    return check<RespondResult>(await fetch(
      `${this.baseUrl}/v1/interactions/${interactionId}/response`, {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify(event),
      }));
  }

  streamUrl(humanId: string): string {
    return `${this.baseUrl}/v1/inbox/${bareId(humanId)}/stream`;
  }
}

/** Channel identity the UI responds as: the card's first endpoint, in
 *  channel-name order (matches how the server verifies the actor). */
export function pickResponderIdentity(card: CardDoc): { channel: string; actor: string } {
  const channels = Object.keys(card.endpoints).sort();
  const channel = channels[0];
  if (!channel) throw new ApiFailure('NO_ENDPOINT', `${card.id} has no endpoints`);
  return { channel, actor: card.endpoints[channel]! };
}
