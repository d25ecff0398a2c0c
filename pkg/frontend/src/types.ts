// Wire types for the /v1 API. Field names follow the canonical format.

export type Primitive = 'PERMISSION' | 'CLARIFICATION' | 'SOLICITATION' | 'NOTIFICATION';
export type InteractionStateName = 'PENDING' | 'DELIVERED' | 'RESOLVED' | 'EXPIRED' | 'CANCELLED';

export interface BlockText {
  type: string;
  text: string;
}

export interface Block {
  type: string;
  text?: BlockText;
  elements?: BlockButton[];
}

export interface BlockButton {
  type: string;
  text: BlockText;
  action_id: string;
  value: string;
  style?: string;
}

export interface RenderedPayload {
  channel: string;
  content: { blocks: Block[] } | string;
  content_kind: string;
}

export interface InboxEntry {
  interaction_id: string;
  rendered: RenderedPayload;
  primitive: Primitive;
  state: InteractionStateName;
  opened_at: number;
}

export interface CardDoc {
  id: string;
  profile: { name: string; role: string; timezone: string };
  capabilities: string[];
  endpoints: Record<string, string>;
  status: string;
}

export interface InboxEvent {
  interaction_id: string;
  state: InteractionStateName;
  target: string;
}

export interface RespondResult {
  accepted: boolean;
  state: InteractionStateName;
  already_resolved?: boolean;
}

export interface ApiError {
  error: string;
  message: string;
}
