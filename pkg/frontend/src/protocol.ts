/**
 * Wire codec: 4-byte big-endian length prefix + UTF-8 JSON payload.
 *
 * Mirrors the server's canonical encoding (sorted keys, compact separators)
 * so identical messages produce identical bytes on both ends.
 */

export const MAX_FRAME_BYTES = 16 * 1024 * 1024;

export interface Message {
  type: string;
  seq?: number;
  body: Record<string, unknown>;
}

export class ProtocolError extends Error {}

/** JSON.stringify with object keys sorted recursively (canonical form). */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(",")}]`;
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .filter(([, v]) => v !== undefined)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => `${JSON.stringify(k)}:${canonicalJson(v)}`);
  return `{${entries.join(",")}}`;
}

export function encodeMessage(msg: Message): Uint8Array {
  if ("type" in msg.body || "seq" in msg.body) {
    throw new ProtocolError("body may not contain reserved keys");
  }
  const record: Record<string, unknown> = { type: msg.type, ...msg.body };
  if (msg.seq !== undefined) {
    record["seq"] = msg.seq;
  }
  const payload = new TextEncoder().encode(canonicalJson(record));
  if (payload.byteLength > MAX_FRAME_BYTES) {
    throw new ProtocolError(`payload of ${payload.byteLength} bytes exceeds cap`);
  }
  const frame = new Uint8Array(4 + payload.byteLength);
  new DataView(frame.buffer).setUint32(0, payload.byteLength, false);
  frame.set(payload, 4);
  return frame;
}

export function decodePayload(payload: Uint8Array): Message {
  let record: unknown;
  try {
    record = JSON.parse(new TextDecoder("utf-8", { fatal: true }).decode(payload));
  } catch (err) {
    throw new ProtocolError(`malformed JSON payload: ${err}`);
  }
  if (record === null || typeof record !== "object" || Array.isArray(record)) {
    throw new ProtocolError("message must be a JSON object");
  }
  const { type, seq, ...body } = record as Record<string, unknown>;
  if (typeof type !== "string") {
    throw new ProtocolError("message missing string 'type'");
  }
  if (seq !== undefined && !Number.isInteger(seq)) {
    throw new ProtocolError("'seq' must be an integer when present");
  }
  return { type, seq: seq as number | undefined, body };
}

/** Incremental decoder; partial frames wait for more bytes. */
export class FrameDecoder {
  private buf = new Uint8Array(0);

  feed(data: Uint8Array): Message[] {
    const joined = new Uint8Array(this.buf.byteLength + data.byteLength);
    joined.set(this.buf, 0);
    joined.set(data, this.buf.byteLength);
    this.buf = joined;

    const out: Message[] = [];
    for (;;) {
      if (this.buf.byteLength < 4) {
        return out;
      }
      const view = new DataView(this.buf.buffer, this.buf.byteOffset, this.buf.byteLength);
      const length = view.getUint32(0, false);
      if (length > MAX_FRAME_BYTES) {
        throw new ProtocolError(`declared frame length ${length} exceeds cap`);
      }
      if (this.buf.byteLength < 4 + length) {
        return out;
      }
      out.push(decodePayload(this.buf.subarray(4, 4 + length)));
      this.buf = this.buf.slice(4 + length);
    }
  }

  get pendingBytes(): number {
    return this.buf.byteLength;
  }
}
