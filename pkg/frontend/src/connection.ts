/**
 * Request/reply plumbing over a Transport: assigns seq numbers, pairs
 * replies, and funnels broadcasts into a single handler.
 */

import { encodeMessage, FrameDecoder, Message } from "./protocol.js";
import { Transport } from "./transport.js";

type Pending = { resolve: (msg: Message) => void; reject: (err: Error) => void };

export class Connection {
  private decoder = new FrameDecoder();
  private nextSeq = 1;
  private pending = new Map<number, Pending>();
  private broadcastHandler: ((msg: Message) => void) | null = null;

  constructor(private transport: Transport) {
    transport.onData((data) => {
      for (const msg of this.decoder.feed(data)) {
        this.dispatch(msg);
      }
    });
    transport.onClose(() => {
      for (const [, p] of this.pending) {
        p.reject(new Error("connection closed"));
      }
      this.pending.clear();
    });
  }

  private dispatch(msg: Message): void {
    if (msg.seq !== undefined && this.pending.has(msg.seq)) {
      const p = this.pending.get(msg.seq)!;
      this.pending.delete(msg.seq);
      p.resolve(msg);
      return;
    }
    this.broadcastHandler?.(msg);
  }

  onBroadcast(handler: (msg: Message) => void): void {
    this.broadcastHandler = handler;
  }

  /** Fire-and-track request; the promise resolves with the reply (ok or error). */
  request(type: string, body: Record<string, unknown> = {}): Promise<Message> {
    const seq = this.nextSeq++;
    return new Promise((resolve, reject) => {
      this.pending.set(seq, { resolve, reject });
      this.transport.send(encodeMessage({ type, body, seq }));
    });
  }

  close(): void {
    this.transport.close();
  }
}
