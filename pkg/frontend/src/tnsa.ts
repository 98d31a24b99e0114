/**
 * TNSA tensor archive: the flat binary container the scoring engine loads
 * its backbone weights from.
 *
 * Layout, all little-endian, no padding:
 *
 *   magic   4 bytes  "TNSA"
 *   version u32      currently 1
 *   count   u32      number of entries
 *   entry*  u32 name length, UTF-8 name, u32 rank, rank x u64 dims,
 *           prod(dims) x f32 data
 *
 * Entry order is preserved, names must be unique, and a reader must
 * consume the buffer exactly (trailing bytes are an error).
 */

export const TNSA_MAGIC = "TNSA";
export const TNSA_VERSION = 1;

export interface TensorEntry {
  name: string;
  dims: number[];
  data: Float32Array;
}

export class ArchiveFormatError extends Error {}

function product(dims: number[]): number {
  let n = 1;
  for (const d of dims) n *= d;
  return n;
}

function checkEntry(e: TensorEntry): void {
  if (e.name.length === 0) throw new ArchiveFormatError("empty entry name");
  for (const d of e.dims) {
    if (!Number.isInteger(d) || d < 0) {
      throw new ArchiveFormatError(`bad dimension ${d} in entry "${e.name}"`);
    }
  }
  if (e.data.length !== product(e.dims)) {
    throw new ArchiveFormatError(
      `entry "${e.name}": data length ${e.data.length} does not match dims [${e.dims}]`,
    );
  }
}

/** Serialize entries to archive bytes, preserving order. */
export function packArchive(entries: TensorEntry[]): Buffer {
  const seen = new Set<string>();
  let size = 4 + 8;
  const names: Buffer[] = [];
  for (const e of entries) {
    checkEntry(e);
    if (seen.has(e.name)) {
      throw new ArchiveFormatError(`duplicate entry name "${e.name}"`);
    }
    seen.add(e.name);
    const nb = Buffer.from(e.name, "utf-8");
    names.push(nb);
    size += 4 + nb.length + 4 + 8 * e.dims.length + 4 * e.data.length;
  }

  const buf = Buffer.alloc(size);
  buf.write(TNSA_MAGIC, 0, "ascii");
  buf.writeUInt32LE(TNSA_VERSION, 4);
  buf.writeUInt32LE(entries.length, 8);
  let off = 12;
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  for (let i = 0; i < entries.length; i++) {
    const e = entries[i];
    const nb = names[i];
    buf.writeUInt32LE(nb.length, off);
    off += 4;
    nb.copy(buf, off);
    off += nb.length;
    buf.writeUInt32LE(e.dims.length, off);
    off += 4;
    for (const d of e.dims) {
      view.setBigUint64(off, BigInt(d), true);
      off += 8;
    }
    for (let j = 0; j < e.data.length; j++) {
      view.setFloat32(off, e.data[j], true);
      off += 4;
    }
  }
  return buf;
}

/** Parse archive bytes back into entries; rejects anything malformed. */
export function unpackArchive(buf: Buffer): TensorEntry[] {
  if (buf.length < 12) {
    throw new ArchiveFormatError("truncated archive: header incomplete");
  }
  if (buf.toString("ascii", 0, 4) !== TNSA_MAGIC) {
    throw new ArchiveFormatError("bad magic: not a tensor archive");
  }
  const version = buf.readUInt32LE(4);
  if (version !== TNSA_VERSION) {
    throw new ArchiveFormatError(`unsupported archive version ${version}`);
  }
  const count = buf.readUInt32LE(8);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);

  const entries: TensorEntry[] = [];
  const seen = new Set<string>();
  let off = 12;
  const need = (n: number, what: string) => {
    if (off + n > buf.length) {
      throw new ArchiveFormatError(`truncated archive: ${what}`);
    }
  };
  for (let i = 0; i < count; i++) {
    need(4, `entry ${i} name length`);
    const nameLen = buf.readUInt32LE(off);
    off += 4;
    need(nameLen, `entry ${i} name`);
    const name = buf.toString("utf-8", off, off + nameLen);
    off += nameLen;
    if (seen.has(name)) {
      throw new ArchiveFormatError(`duplicate entry name "${name}"`);
    }
    seen.add(name);
    need(4, `"${name}" rank`);
    const rank = buf.readUInt32LE(off);
    off += 4;
    need(8 * rank, `"${name}" dims`);
    const dims: number[] = [];
    for (let j = 0; j < rank; j++) {
      const d = view.getBigUint64(off, true);
      off += 8;
      if (d > BigInt(Number.MAX_SAFE_INTEGER)) {
        throw new ArchiveFormatError(`dimension overflow in "${name}"`);
      }
      dims.push(Number(d));
    }
    const n = product(dims);
    need(4 * n, `"${name}" data`);
    const data = new Float32Array(n);
    for (let j = 0; j < n; j++) {
      data[j] = view.getFloat32(off, true);
      off += 4;
    }
    entries.push({ name, dims, data });
  }
  if (off !== buf.length) {
    throw new ArchiveFormatError(
      `${buf.length - off} trailing bytes after last entry`,
    );
  }
  return entries;
}
