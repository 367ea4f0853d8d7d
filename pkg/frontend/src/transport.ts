/** Byte transports carrying wire frames; the app never touches sockets directly. */

import { encodeMessage, Message } from "./protocol.js";

export interface Transport {
  send(frame: Uint8Array): void;
  onData(handler: (data: Uint8Array) => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

/** Browser WebSocket carrying one wire frame per binary message. */
export class WebSocketTransport implements Transport {
  private ws: WebSocket;
  private dataHandler: ((data: Uint8Array) => void) | null = null;
  private closeHandler: (() => void) | null = null;

  constructor(url: string) {
    this.ws = new WebSocket(url);
    this.ws.binaryType = "arraybuffer";
    this.ws.onmessage = (event) => {
      if (event.data instanceof ArrayBuffer) {
        this.dataHandler?.(new Uint8Array(event.data));
      }
    };
    this.ws.onclose = () => this.closeHandler?.();
  }

  send(frame: Uint8Array): void {
    this.ws.send(frame);
  }

  onData(handler: (data: Uint8Array) => void): void {
    this.dataHandler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  close(): void {
    this.ws.close();
  }
}

/**
 * In-memory transport for tests: records outbound messages and lets tests
 * inject inbound ones through the real codec.
 */
export class MockTransport implements Transport {
  /** Outbound messages as flat JSON records ({type, seq?, ...body}). */
  sent: Record<string, unknown>[] = [];
  sentFrames: Uint8Array[] = [];
  private dataHandler: ((data: Uint8Array) => void) | null = null;
  private closeHandler: (() => void) | null = null;

  send(frame: Uint8Array): void {
    this.sentFrames.push(frame);
    const length = new DataView(frame.buffer, frame.byteOffset).getUint32(0, false);
    const payload = new TextDecoder().decode(frame.subarray(4, 4 + length));
    this.sent.push(JSON.parse(payload) as Record<string, unknown>);
  }

  onData(handler: (data: Uint8Array) => void): void {
    this.dataHandler = handler;
  }

  onClose(handler: () => void): void {
    this.closeHandler = handler;
  }

  close(): void {
    this.closeHandler?.();
  }

  /** Deliver a message to the app through the real frame encoding. */
  deliver(msg: Message): void {
    this.dataHandler?.(encodeMessage(msg));
  }

  /** Raw variant for split/garbage injection tests. */
  deliverBytes(data: Uint8Array): void {
    this.dataHandler?.(data);
  }

  /** Outbound messages of one type, in send order. */
  ofType(type: string): Record<string, unknown>[] {
    return this.sent.filter((m) => m["type"] === type);
  }
}
