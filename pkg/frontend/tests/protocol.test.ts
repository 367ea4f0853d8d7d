import { existsSync, readFileSync } from "node:fs";
import { resolve } from "node:path";
import { describe, expect, it } from "vitest";

import {
  canonicalJson,
  decodePayload,
  encodeMessage,
  FrameDecoder,
  Message,
  ProtocolError,
} from "../src/protocol.js";

function roundtrip(msg: Message): Message {
  const [out] = new FrameDecoder().feed(encodeMessage(msg));
  return out;
}

describe("frame codec", () => {
  it("round-trips messages", () => {
    const msg: Message = { type: "op", seq: 3,
                           body: { op: "grab", object_id: "obj-1", nested: { a: [1, 2] } } };
    expect(roundtrip(msg)).toEqual(msg);
  });

  it("matches the server's canonical encoding", () => {
    // same bytes the python side produces for this record
    const frame = encodeMessage({ type: "ping", seq: 9, body: { nonce: 41 } });
    const payload = new TextDecoder().decode(frame.subarray(4));
    expect(payload).toBe('{"nonce":41,"seq":9,"type":"ping"}');
    expect(Array.from(frame.subarray(0, 4))).toEqual([0, 0, 0, payload.length]);
  });

  it("sorts keys recursively", () => {
    expect(canonicalJson({ b: { d: 1, c: 2 }, a: [true, null] }))
      .toBe('{"a":[true,null],"b":{"c":2,"d":1}}');
  });

  it("handles partial feeds", () => {
    const frame = encodeMessage({ type: "pong", body: {} });
    const decoder = new FrameDecoder();
    expect(decoder.feed(frame.subarray(0, 3))).toEqual([]);
    expect(decoder.feed(frame.subarray(3, 7))).toEqual([]);
    const rest = decoder.feed(frame.subarray(7));
    expect(rest.length).toBe(1);
    expect(rest[0].type).toBe("pong");
    expect(decoder.pendingBytes).toBe(0);
  });

  it("preserves unknown types", () => {
    const msg: Message = { type: "vendor_extension", body: { anything: [1, 2, 3] } };
    expect(roundtrip(msg)).toEqual(msg);
  });

  it("rejects malformed payloads with typed errors", () => {
    expect(() => decodePayload(new TextEncoder().encode("not json")))
      .toThrow(ProtocolError);
    expect(() => decodePayload(new TextEncoder().encode('{"seq": 1}')))
      .toThrow(ProtocolError);
    expect(() => encodeMessage({ type: "op", body: { type: "sneaky" } }))
      .toThrow(ProtocolError);
  });

  it("reproduces the server's golden frame corpus byte for byte", () => {
    // cross-implementation protocol freeze against the backend's fixtures
    const binPath = resolve(process.cwd(), "../tests/golden/frames.bin");
    if (!existsSync(binPath)) {
      return; // frontend checked out standalone
    }
    const blob = new Uint8Array(readFileSync(binPath));
    const expected = JSON.parse(readFileSync(
      resolve(process.cwd(), "../tests/golden/frames.json"), "utf-8")) as
      { type: string; seq: number | null; body: Record<string, unknown> }[];

    const messages = new FrameDecoder().feed(blob);
    expect(messages.length).toBe(expected.length);
    messages.forEach((msg, i) => {
      expect(msg.type).toBe(expected[i].type);
      expect(msg.seq ?? null).toBe(expected[i].seq);
      expect(msg.body).toEqual(expected[i].body);
    });
    const reencoded = messages.map((m) => encodeMessage(m));
    const total = new Uint8Array(reencoded.reduce((n, f) => n + f.byteLength, 0));
    let offset = 0;
    for (const frame of reencoded) {
      total.set(frame, offset);
      offset += frame.byteLength;
    }
    expect(Buffer.from(total).equals(Buffer.from(blob))).toBe(true);
  });
});
