/** PFM image I/O (PF color / Pf gray, negative scale = little-endian,
 *  rows stored bottom-to-top), matching the simulator's interchange files. */

import { readFileSync, writeFileSync } from "node:fs";

export interface PfmImage {
  width: number;
  height: number;
  channels: number;
  /** channel-planar, row-major, top-down */
  data: Float64Array;
}

export function readPfm(path: string): PfmImage {
  const blob = readFileSync(path);
  let offset = 0;
  const token = (): string => {
    let out = "";
    while (offset < blob.length) {
      const ch = String.fromCharCode(blob[offset++]);
      if (/\s/.test(ch)) {
        if (out.length > 0) return out;
      } else {
        out += ch;
      }
    }
    throw new Error(`${path}: truncated PFM header`);
  };
  const magic = token();
  if (magic !== "PF" && magic !== "Pf") throw new Error(`${path}: bad PFM magic ${magic}`);
  const channels = magic === "PF" ? 3 : 1;
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const scale = parseFloat(token());
  const count = width * height * channels;
  if (blob.length < offset + count * 4) throw new Error(`${path}: truncated PFM payload`);
  const little = scale < 0;
  const view = new DataView(blob.buffer, blob.byteOffset + offset, count * 4);
  const data = new Float64Array(count);
  // file rows run bottom-to-top, interleaved by channel
  for (let y = 0; y < height; y++) {
    const srcRow = height - 1 - y;
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < channels; c++) {
        const v = view.getFloat32(((srcRow * width + x) * channels + c) * 4, little);
        data[(c * height + y) * width + x] = v;
      }
    }
  }
  return { width, height, channels, data };
}

export function writePfm(path: string, image: PfmImage): void {
  const { width, height, channels, data } = image;
  const header = Buffer.from(`${channels === 3 ? "PF" : "Pf"}\n${width} ${height}\n-1.0\n`, "ascii");
  const payload = Buffer.alloc(width * height * channels * 4);
  for (let y = 0; y < height; y++) {
    const dstRow = height - 1 - y;
    for (let x = 0; x < width; x++) {
      for (let c = 0; c < channels; c++) {
        payload.writeFloatLE(
          data[(c * height + y) * width + x],
          ((dstRow * width + x) * channels + c) * 4,
        );
      }
    }
  }
  writeFileSync(path, Buffer.concat([header, payload]));
}
