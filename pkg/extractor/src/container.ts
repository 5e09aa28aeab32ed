/**
 * mmfuse embedding container format (version 1), bit-exact with the Python
 * side. All integers little-endian:
 *
 *   offset  size  field
 *   0       8     magic "MMFUSE01"
 *   8       4     version uint32 (= 1)
 *   12      1     kind uint8: 1 = acoustic, 2 = text, 3 = fused
 *   13      1     has_layer uint8
 *   14      2     reserved uint16 (= 0)
 *   16      4     layer_index uint32 (0 when absent)
 *   20      4     rows uint32
 *   24      4     cols uint32
 *   28      8     duration_s float64 (0.0 when absent)
 *   36      ...   payload: rows * cols float32, row-major
 */

export const MAGIC = "MMFUSE01";
export const CONTAINER_VERSION = 1;
export const HEADER_SIZE = 36;

export type ContainerKind = "acoustic" | "text" | "fused";

const KIND_CODES: Record<ContainerKind, number> = { acoustic: 1, text: 2, fused: 3 };
const CODE_KINDS: Record<number, ContainerKind> = { 1: "acoustic", 2: "text", 3: "fused" };

export interface EmbeddingContainer {
  kind: ContainerKind;
  rows: number;
  cols: number;
  layerIndex: number | null;
  durationS: number | null;
  /** row-major, rows * cols values */
  payload: Float32Array;
}

export function writeContainer(c: EmbeddingContainer): Buffer {
  if (c.rows < 1 || c.cols < 1) {
    throw new Error(`container needs rows >= 1 and cols >= 1, got ${c.rows}x${c.cols}`);
  }
  if (c.payload.length !== c.rows * c.cols) {
    throw new Error(`payload length ${c.payload.length} != rows*cols ${c.rows * c.cols}`);
  }
  if (c.kind === "acoustic" && !(c.durationS !== null && c.durationS > 0)) {
    throw new Error("acoustic containers require durationS > 0");
  }
  const buf = Buffer.alloc(HEADER_SIZE + 4 * c.payload.length);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(CONTAINER_VERSION, 8);
  buf.writeUInt8(KIND_CODES[c.kind], 12);
  buf.writeUInt8(c.layerIndex === null ? 0 : 1, 13);
  buf.writeUInt16LE(0, 14);
  buf.writeUInt32LE(c.layerIndex ?? 0, 16);
  buf.writeUInt32LE(c.rows, 20);
  buf.writeUInt32LE(c.cols, 24);
  buf.writeDoubleLE(c.durationS ?? 0.0, 28);
  for (let i = 0; i < c.payload.length; i++) {
    const v = c.payload[i];
    if (!Number.isFinite(v)) {
      throw new Error(`payload value at ${i} is not finite`);
    }
    buf.writeFloatLE(v, HEADER_SIZE + 4 * i);
  }
  return buf;
}

export function readContainer(buf: Buffer): EmbeddingContainer {
  if (buf.length < HEADER_SIZE) {
    throw new Error(`container too short: ${buf.length} bytes`);
  }
  if (buf.toString("ascii", 0, 8) !== MAGIC) {
    throw new Error("bad magic");
  }
  const version = buf.readUInt32LE(8);
  if (version !== CONTAINER_VERSION) {
    throw new Error(`unsupported version ${version}`);
  }
  const kind = CODE_KINDS[buf.readUInt8(12)];
  if (!kind) {
    throw new Error("unknown kind code");
  }
  const hasLayer = buf.readUInt8(13) === 1;
  const layerIndex = buf.readUInt32LE(16);
  const rows = buf.readUInt32LE(20);
  const cols = buf.readUInt32LE(24);
  const durationS = buf.readDoubleLE(28);
  const expected = HEADER_SIZE + 4 * rows * cols;
  if (buf.length !== expected) {
    throw new Error(`payload length mismatch: expected ${expected} bytes, got ${buf.length}`);
  }
  const payload = new Float32Array(rows * cols);
  for (let i = 0; i < payload.length; i++) {
    payload[i] = buf.readFloatLE(HEADER_SIZE + 4 * i);
  }
  return {
    kind,
    rows,
    cols,
    layerIndex: hasLayer ? layerIndex : null,
    durationS: durationS !== 0.0 ? durationS : null,
    payload,
  };
}
