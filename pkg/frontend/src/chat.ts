import { ApiClient, ApiError } from "./api.js";
import { linkifyCveIds, escapeHtml } from "./linkify.js";

export interface ChatMessage {
  kind: "message";
  role: "user" | "assistant";
  text: string;
  retrievedCveIds: string[];
  timestamp: string;
  inputTokens: number;
  outputTokens: number;
}

export interface ErrorBubble {
  kind: "error";
  text: string;
  failureKind: string;
  timestamp: string;
}

export type ChatEntry = ChatMessage | ErrorBubble;

export function canSend(question: string): boolean {
  return question.trim().length > 0;
}

/** Chat transcript state; one session per page load. */
export class ChatSession {
  readonly entries: ChatEntry[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly now: () => string = () => new Date().toISOString(),
  ) {}

  /** Send one question; appends the user/assistant pair, or the user
   * message plus an inline error bubble when the call fails. Chat history
   * is preserved either way. */
  async send(question: string, backend?: string, k?: number): Promise<ChatEntry> {
    if (!canSend(question)) {
      throw new Error("cannot send an empty question");
    }
    this.entries.push({
      kind: "message",
      role: "user",
      text: question,
      retrievedCveIds: [],
      timestamp: this.now(),
      inputTokens: 0,
      outputTokens: 0,
    });
    let entry: ChatEntry;
    try {
      const result = await this.api.query(question, backend, k);
      entry = {
        kind: "message",
        role: "assistant",
        text: result.answer,
        retrievedCveIds: result.retrieved_cve_ids,
        timestamp: this.now(),
        inputTokens: result.input_tokens,
        outputTokens: result.output_tokens,
      };
    } catch (err) {
      const failureKind =
        err instanceof ApiError
          ? typeof err.body.kind === "string"
            ? err.body.kind
            : err.kind
          : "transport";
      entry = {
        kind: "error",
        text: err instanceof Error ? err.message : String(err),
        failureKind,
        timestamp: this.now(),
      };
    }
    this.entries.push(entry);
    return entry;
  }
}

/** One transcript entry as an HTML string; assistant text is CVE-linkified. */
export function renderEntryHtml(entry: ChatEntry): string {
  if (entry.kind === "error") {
    return (
      `<div class="bubble error"><span class="failure-kind">${escapeHtml(entry.failureKind)}</span> ` +
      `${escapeHtml(entry.text)}</div>`
    );
  }
  if (entry.role === "user") {
    return `<div class="bubble user">${escapeHtml(entry.text)}</div>`;
  }
  const ids = entry.retrievedCveIds.map(escapeHtml).join(", ");
  const meta =
    `<div class="meta">context: [${ids}] &middot; ` +
    `${entry.inputTokens}&rarr;${entry.outputTokens} tokens</div>`;
  const body = entry.text.trim()
    ? linkifyCveIds(entry.text)
    : '<span class="empty-answer">(no answer)</span>';
  return `<div class="bubble assistant">${body}${meta}</div>`;
}
