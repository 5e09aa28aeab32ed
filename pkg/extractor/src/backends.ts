/** Encoder and transcriber backends.
 *
 * The production deployment plugs pretrained models into these interfaces
 * (wav2vec 2.0 / Whisper for audio, DistilBERT / RoBERTa for text, WhisperX
 * for timestamped transcription); model inference needs network access to
 * fetch weights and is not bundled here. The "stub" backends below are fully
 * deterministic signal-derived encoders with the same shapes and contracts
 * (768-dim embeddings, ~20 ms acoustic step, 12 layers, word-level
 * timestamps), which is what the round-trip tests and offline pipelines run
 * against.
 */

import { fnv1a, gaussian, mulberry32 } from "./rng";
import { WordTiming } from "./timing";
import { PositionPlan } from "./positionPlan";

export const EMBEDDING_DIM = 768;
export const FRAME_HOP = 320; // samples at 16 kHz -> 20 ms
export const FRAME_WIN = 400; // 25 ms analysis window
export const NUM_LAYERS = 12;
export const MAX_TEXT_POSITION = 512;

export interface AcousticFrames {
  rows: number;
  cols: number;
  payload: Float32Array; // row-major
  durationS: number;
}

export interface AcousticEncoder {
  modelId: string;
  encodeLayer(samples: Float32Array, sampleRate: number, layer: number): AcousticFrames;
}

export interface Transcriber {
  modelId: string;
  transcribe(samples: Float32Array, sampleRate: number): WordTiming[];
}

export interface TextEncoder {
  modelId: string;
  tokenize(word: string): string[];
  /** One row per token; positionIndex overrides the default ordinal
   * positions when supplied (clamped to the encoder's maximum position). */
  encode(tokens: string[], positionIndex: number[] | null, warn?: (msg: string) => void): Float32Array;
}

// ----------------------------------------------------------------- acoustic

interface FrameFeatures {
  energy: number;
  features: Float64Array; // 8 low-level descriptors
}

function frameFeatures(samples: Float32Array, sampleRate: number): FrameFeatures[] {
  const hop = Math.round((FRAME_HOP * sampleRate) / 16000);
  const win = Math.round((FRAME_WIN * sampleRate) / 16000);
  const n = Math.max(1, Math.ceil(samples.length / hop));
  const bands = [250, 500, 1000, 2000]; // Goertzel probe frequencies
  const out: FrameFeatures[] = [];
  for (let f = 0; f < n; f++) {
    const start = f * hop;
    const end = Math.min(start + win, samples.length);
    let energy = 0;
    let crossings = 0;
    let absSum = 0;
    for (let i = start; i < end; i++) {
      const v = samples[i];
      energy += v * v;
      absSum += Math.abs(v);
      if (i > start && v * samples[i - 1] < 0) {
        crossings++;
      }
    }
    const len = Math.max(1, end - start);
    energy /= len;
    const feats = new Float64Array(8);
    feats[0] = Math.log(energy + 1e-8);
    feats[1] = crossings / len;
    feats[2] = absSum / len;
    bands.forEach((freq, bi) => {
      // Goertzel band energy
      const k = (2 * Math.PI * freq) / sampleRate;
      const coeff = 2 * Math.cos(k);
      let s0 = 0;
      let s1 = 0;
      let s2 = 0;
      for (let i = start; i < end; i++) {
        s0 = samples[i] + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
      }
      const power = s1 * s1 + s2 * s2 - coeff * s1 * s2;
      feats[3 + bi] = Math.log(power / len + 1e-8);
    });
    feats[7] = f / n; // relative position in the clip
    out.push({ energy, features: feats });
  }
  return out;
}

/** Deterministic signal-derived acoustic encoder: per layer, an expansion of
 * 8 low-level frame descriptors through a seeded random projection and tanh,
 * mimicking the shapes of a 12-layer, 768-dim pretrained encoder. */
export class StubAcousticEncoder implements AcousticEncoder {
  constructor(public modelId: string = "stub-acoustic") {}

  encodeLayer(samples: Float32Array, sampleRate: number, layer: number): AcousticFrames {
    if (layer < 1 || layer > NUM_LAYERS) {
      throw new Error(`layer ${layer} outside 1..${NUM_LAYERS}`);
    }
    const frames = frameFeatures(samples, sampleRate);
    const normal = gaussian(mulberry32(fnv1a(`${this.modelId}/layer${layer}`)));
    const dIn = 8;
    const proj = new Float64Array(EMBEDDING_DIM * dIn);
    const bias = new Float64Array(EMBEDDING_DIM);
    for (let i = 0; i < proj.length; i++) {
      proj[i] = normal() / Math.sqrt(dIn);
    }
    for (let i = 0; i < EMBEDDING_DIM; i++) {
      bias[i] = 0.1 * normal();
    }
    const payload = new Float32Array(frames.length * EMBEDDING_DIM);
    frames.forEach((frame, f) => {
      for (let j = 0; j < EMBEDDING_DIM; j++) {
        let acc = bias[j];
        for (let i = 0; i < dIn; i++) {
          acc += proj[j * dIn + i] * frame.features[i];
        }
        payload[f * EMBEDDING_DIM + j] = Math.tanh(acc);
      }
    });
    return {
      rows: frames.length,
      cols: EMBEDDING_DIM,
      payload,
      durationS: samples.length / sampleRate,
    };
  }
}

// --------------------------------------------------------------- transcriber

const SYLLABLES = ["ba", "do", "ki", "lu", "mer", "na", "po", "ri", "sa", "ta", "ve", "zo"];

/** Energy-gated segmenter standing in for timestamped transcription: each
 * voiced segment becomes one pseudo-word with start/end timestamps. Silence
 * yields an empty transcript. */
export class StubTranscriber implements Transcriber {
  constructor(public modelId: string = "stub-transcriber") {}

  transcribe(samples: Float32Array, sampleRate: number): WordTiming[] {
    const frames = frameFeatures(samples, sampleRate);
    const hopS = FRAME_HOP / 16000;
    const peak = frames.reduce((m, f) => Math.max(m, f.energy), 0);
    if (peak < 1e-6) {
      return [];
    }
    const threshold = peak * 0.05;
    const words: WordTiming[] = [];
    let segStart = -1;
    const flush = (endFrame: number) => {
      if (segStart >= 0 && endFrame - segStart >= 2) {
        const rng = mulberry32(fnv1a(`${this.modelId}/${words.length}/${segStart}`));
        const nSyll = 2 + Math.floor(rng() * 3);
        let word = "";
        for (let s = 0; s < nSyll; s++) {
          word += SYLLABLES[Math.floor(rng() * SYLLABLES.length)];
        }
        words.push({ word, startS: segStart * hopS, endS: endFrame * hopS });
      }
      segStart = -1;
    };
    frames.forEach((f, i) => {
      if (f.energy >= threshold) {
        if (segStart < 0) {
          segStart = i;
        }
      } else {
        flush(i);
      }
    });
    flush(frames.length);
    return words;
  }
}

// --------------------------------------------------------------------- text

/** Deterministic text encoder: token-identity embeddings from a seeded hash
 * plus a sinusoidal positional component; supplying a position plan replaces
 * the ordinal indices (the TA / TA_PAD mechanism), clamped to the maximum
 * trained position. */
export class StubTextEncoder implements TextEncoder {
  constructor(public modelId: string = "stub-text") {}

  tokenize(word: string): string[] {
    if (word.length >= 6) {
      const cut = Math.ceil(word.length / 2);
      return [word.slice(0, cut), word.slice(cut)];
    }
    return [word];
  }

  encode(tokens: string[], positionIndex: number[] | null, warn?: (msg: string) => void): Float32Array {
    if (tokens.length === 0) {
      throw new Error("cannot encode an empty token sequence");
    }
    if (positionIndex && positionIndex.length !== tokens.length) {
      throw new Error(`plan has ${positionIndex.length} indices for ${tokens.length} tokens`);
    }
    const out = new Float32Array(tokens.length * EMBEDDING_DIM);
    tokens.forEach((tok, t) => {
      let pos = positionIndex ? positionIndex[t] : t;
      if (pos > MAX_TEXT_POSITION - 1) {
        warn?.(`position index ${pos} clamped to ${MAX_TEXT_POSITION - 1}`);
        pos = MAX_TEXT_POSITION - 1;
      }
      const normal = gaussian(mulberry32(fnv1a(`${this.modelId}/tok/${tok}`)));
      for (let j = 0; j < EMBEDDING_DIM; j++) {
        const angle = pos / Math.pow(10000, (2 * Math.floor(j / 2)) / EMBEDDING_DIM);
        const positional = j % 2 === 0 ? Math.sin(angle) : Math.cos(angle);
        out[t * EMBEDDING_DIM + j] = normal() + 0.5 * positional;
      }
    });
    return out;
  }
}
