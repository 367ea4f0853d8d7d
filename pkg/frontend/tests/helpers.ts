import { Message } from "../src/protocol.js";
import { MockTransport } from "../src/transport.js";

export type Handler = (record: Record<string, unknown>) => Omit<Message, "seq"> | null;

/**
 * MockTransport that answers requests synchronously from a handler table,
 * echoing seq like the real endpoint does.
 */
export function scriptedTransport(handlers: Record<string, Handler>): MockTransport {
  const transport = new MockTransport();
  const plainSend = transport.send.bind(transport);
  transport.send = (frame: Uint8Array) => {
    plainSend(frame);
    const record = transport.sent[transport.sent.length - 1];
    const handler = handlers[record["type"] as string];
    if (handler) {
      const reply = handler(record);
      if (reply) {
        transport.deliver({ ...reply, seq: record["seq"] as number | undefined });
      }
    }
  };
  return transport;
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

export const WELCOME_EMPTY = {
  revision: 1,
  users: { webby: { pose: { position: [0, 0, 0], rotation: [1, 0, 0, 0], uniform_scale: 1 } } },
  objects: {},
  pins: {},
  menus: {},
  counters: { object: 0, pin: 0 },
  session_id: "studio",
};
