/** Minimal RIFF/WAVE reader (PCM16 and IEEE float32) plus resampling to the
 * 16 kHz rate the acoustic encoders expect. Multi-channel input keeps
 * channel 0. */

export const TARGET_SAMPLE_RATE = 16000;

export interface AudioClip {
  samples: Float32Array;
  sampleRate: number;
}

export function readWav(buf: Buffer): AudioClip {
  if (buf.length < 44 || buf.toString("ascii", 0, 4) !== "RIFF" || buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error("not a RIFF/WAVE file");
  }
  let offset = 12;
  let format = 0;
  let channels = 0;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let data: Buffer | null = null;
  while (offset + 8 <= buf.length) {
    const chunkId = buf.toString("ascii", offset, offset + 4);
    const chunkSize = buf.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (chunkId === "fmt ") {
      format = buf.readUInt16LE(body);
      channels = buf.readUInt16LE(body + 2);
      sampleRate = buf.readUInt32LE(body + 4);
      bitsPerSample = buf.readUInt16LE(body + 14);
    } else if (chunkId === "data") {
      data = buf.subarray(body, body + chunkSize);
    }
    offset = body + chunkSize + (chunkSize % 2);
  }
  if (!data || !sampleRate || !channels) {
    throw new Error("missing fmt or data chunk");
  }
  let samples: Float32Array;
  if (format === 1 && bitsPerSample === 16) {
    const n = Math.floor(data.length / 2 / channels);
    samples = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      samples[i] = data.readInt16LE(i * 2 * channels) / 32768;
    }
  } else if (format === 3 && bitsPerSample === 32) {
    const n = Math.floor(data.length / 4 / channels);
    samples = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      samples[i] = data.readFloatLE(i * 4 * channels);
    }
  } else {
    throw new Error(`unsupported wav encoding: format ${format}, ${bitsPerSample} bits`);
  }
  return { samples, sampleRate };
}

export function writeWavPcm16(samples: Float32Array, sampleRate: number): Buffer {
  const buf = Buffer.alloc(44 + samples.length * 2);
  buf.write("RIFF", 0, "ascii");
  buf.writeUInt32LE(36 + samples.length * 2, 4);
  buf.write("WAVE", 8, "ascii");
  buf.write("fmt ", 12, "ascii");
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(1, 20);
  buf.writeUInt16LE(1, 22);
  buf.writeUInt32LE(sampleRate, 24);
  buf.writeUInt32LE(sampleRate * 2, 28);
  buf.writeUInt16LE(2, 32);
  buf.writeUInt16LE(16, 34);
  buf.write("data", 36, "ascii");
  buf.writeUInt32LE(samples.length * 2, 40);
  for (let i = 0; i < samples.length; i++) {
    const v = Math.max(-1, Math.min(1, samples[i]));
    buf.writeInt16LE(Math.round(v * 32767), 44 + i * 2);
  }
  return buf;
}

/** Linear-interpolation resampler; identity when rates already match. */
export function resample(clip: AudioClip, targetRate: number = TARGET_SAMPLE_RATE): AudioClip {
  if (clip.sampleRate === targetRate) {
    return clip;
  }
  const ratio = clip.sampleRate / targetRate;
  const n = Math.max(1, Math.floor(clip.samples.length / ratio));
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    const pos = i * ratio;
    const lo = Math.floor(pos);
    const hi = Math.min(lo + 1, clip.samples.length - 1);
    const frac = pos - lo;
    out[i] = clip.samples[lo] * (1 - frac) + clip.samples[hi] * frac;
  }
  return { samples: out, sampleRate: targetRate };
}
