/** FTBW named-tensor container: magic "FTBW", u32 version, u32 tensor count,
 *  then per tensor a u16 name length, UTF-8 name, u8 rank, u32 dims each and
 *  a float32 little-endian row-major payload.  This file is the contract
 *  between the trainer and the inference engine. */

import { readFileSync, writeFileSync } from "node:fs";

export interface NamedTensor {
  name: string;
  dims: number[];
  data: Float64Array;
}

export const FTBW_VERSION = 1;

export function writeFtbw(path: string, tensors: NamedTensor[]): void {
  const sorted = [...tensors].sort((a, b) => (a.name < b.name ? -1 : 1));
  const chunks: Buffer[] = [];
  const head = Buffer.alloc(12);
  head.write("FTBW", 0, "ascii");
  head.writeUInt32LE(FTBW_VERSION, 4);
  head.writeUInt32LE(sorted.length, 8);
  chunks.push(head);
  for (const tensor of sorted) {
    const name = Buffer.from(tensor.name, "utf-8");
    const meta = Buffer.alloc(2 + name.length + 1 + 4 * tensor.dims.length);
    meta.writeUInt16LE(name.length, 0);
    name.copy(meta, 2);
    meta.writeUInt8(tensor.dims.length, 2 + name.length);
    tensor.dims.forEach((d, i) => meta.writeUInt32LE(d, 2 + name.length + 1 + 4 * i));
    const payload = Buffer.alloc(tensor.data.length * 4);
    for (let i = 0; i < tensor.data.length; i++) payload.writeFloatLE(tensor.data[i], i * 4);
    chunks.push(meta, payload);
  }
  writeFileSync(path, Buffer.concat(chunks));
}

export function readFtbw(path: string): Map<string, NamedTensor> {
  const blob = readFileSync(path);
  if (blob.toString("ascii", 0, 4) !== "FTBW") throw new Error(`${path}: bad magic`);
  const version = blob.readUInt32LE(4);
  if (version !== FTBW_VERSION) throw new Error(`${path}: unsupported version ${version}`);
  const count = blob.readUInt32LE(8);
  let offset = 12;
  const tensors = new Map<string, NamedTensor>();
  for (let t = 0; t < count; t++) {
    const nameLen = blob.readUInt16LE(offset);
    offset += 2;
    const name = blob.toString("utf-8", offset, offset + nameLen);
    offset += nameLen;
    const rank = blob.readUInt8(offset);
    offset += 1;
    const dims: number[] = [];
    for (let i = 0; i < rank; i++) {
      dims.push(blob.readUInt32LE(offset));
      offset += 4;
    }
    const size = dims.reduce((a, b) => a * b, 1);
    if (blob.length < offset + size * 4) throw new Error(`${path}: truncated payload for ${name}`);
    const data = new Float64Array(size);
    for (let i = 0; i < size; i++) data[i] = blob.readFloatLE(offset + i * 4);
    offset += size * 4;
    tensors.set(name, { name, dims, data });
  }
  return tensors;
}
