import { describe, expect, it } from "vitest";

import { crc32, encodeIndexedPng } from "../src/png.js";
import { LABEL_COLORS } from "../src/palette.js";

function chunks(png: Uint8Array): { type: string; data: Uint8Array; crc: number }[] {
  const out = [];
  let offset = 8;
  const view = new DataView(png.buffer, png.byteOffset, png.byteLength);
  while (offset < png.length) {
    const length = view.getUint32(offset);
    const type = String.fromCharCode(...png.subarray(offset + 4, offset + 8));
    const data = png.subarray(offset + 8, offset + 8 + length);
    const crc = view.getUint32(offset + 8 + length);
    out.push({ type, data, crc });
    offset += 12 + length;
  }
  return out;
}

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  const { DecompressionStream } = (await import("node:stream/web")) as any;
  const stream = new DecompressionStream("deflate");
  const writer = stream.writable.getWriter();
  void writer.write(data);
  void writer.close();
  const reader = stream.readable.getReader();
  const parts: Uint8Array[] = [];
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    parts.push(value);
  }
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

describe("indexed png encoder", () => {
  it("crc32 matches the reference value for 'IEND'", () => {
    // Well-known constant: crc of the bare IEND chunk type.
    expect(crc32(new Uint8Array([0x49, 0x45, 0x4e, 0x44]))).toBe(0xae426082);
  });

  it("produces a structurally valid indexed png", async () => {
    const grid = new Uint8Array(16 * 16).map((_, i) => i % 7);
    const png = await encodeIndexedPng(grid, 16, 16, LABEL_COLORS);
    expect([...png.subarray(0, 8)]).toEqual([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
    const parsed = chunks(png);
    expect(parsed.map((c) => c.type)).toEqual(["IHDR", "PLTE", "IDAT", "IEND"]);
    const ihdr = parsed[0];
    const view = new DataView(ihdr.data.buffer, ihdr.data.byteOffset);
    expect(view.getUint32(0)).toBe(16);
    expect(view.getUint32(4)).toBe(16);
    expect(ihdr.data[8]).toBe(8); // bit depth
    expect(ihdr.data[9]).toBe(3); // indexed
    expect(parsed[1].data.length).toBe(LABEL_COLORS.length * 3);
  });

  it("round-trips the grid through the zlib scanlines", async () => {
    const grid = new Uint8Array(8 * 8).map((_, i) => (i * 3) % 7);
    const png = await encodeIndexedPng(grid, 8, 8, LABEL_COLORS);
    const idat = chunks(png).find((c) => c.type === "IDAT")!;
    const raw = await inflate(idat.data);
    expect(raw.length).toBe(8 * 9);
    for (let y = 0; y < 8; y++) {
      expect(raw[y * 9]).toBe(0); // filter byte
      expect([...raw.subarray(y * 9 + 1, y * 9 + 9)]).toEqual(
        [...grid.subarray(y * 8, y * 8 + 8)],
      );
    }
  });

  it("chunk crcs verify", async () => {
    const grid = new Uint8Array(8 * 8).fill(2);
    const png = await encodeIndexedPng(grid, 8, 8, LABEL_COLORS);
    for (const { type, data, crc } of chunks(png)) {
      const typed = new Uint8Array(4 + data.length);
      typed.set([...type].map((c) => c.charCodeAt(0)));
      typed.set(data, 4);
      expect(crc32(typed)).toBe(crc);
    }
  });

  it("rejects a grid that does not match the dimensions", async () => {
    await expect(encodeIndexedPng(new Uint8Array(10), 8, 8, LABEL_COLORS)).rejects.toThrow(
      /entries/,
    );
  });
});
