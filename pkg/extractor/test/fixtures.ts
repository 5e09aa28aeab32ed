/** Synthesized sample clips: tone bursts separated by silence, deterministic
 * via the shared PRNG. Enough structure for the energy-gated transcriber to
 * find "words". */

import * as fs from "node:fs";
import * as path from "node:path";

import { mulberry32 } from "../src/rng";
import { writeWavPcm16 } from "../src/wav";

export interface ClipSpec {
  name: string;
  sampleRate: number;
  bursts: Array<{ startS: number; durS: number; freq: number }>;
  totalS: number;
}

export const SAMPLE_CLIPS: ClipSpec[] = [
  {
    name: "clip_a",
    sampleRate: 22050,
    totalS: 2.6,
    bursts: [
      { startS: 0.2, durS: 0.35, freq: 220 },
      { startS: 0.8, durS: 0.3, freq: 330 },
      { startS: 1.4, durS: 0.45, freq: 275 },
      { startS: 2.1, durS: 0.3, freq: 180 },
    ],
  },
  {
    name: "clip_b",
    sampleRate: 16000,
    totalS: 3.0,
    bursts: [
      { startS: 0.5, durS: 0.4, freq: 200 },
      { startS: 1.1, durS: 0.35, freq: 350 },
      { startS: 1.7, durS: 0.3, freq: 260 },
      { startS: 2.3, durS: 0.4, freq: 300 },
    ],
  },
  {
    name: "clip_c",
    sampleRate: 8000,
    totalS: 2.0,
    bursts: [
      { startS: 0.15, durS: 0.4, freq: 240 },
      { startS: 0.9, durS: 0.35, freq: 310 },
      { startS: 1.5, durS: 0.35, freq: 210 },
    ],
  },
];

export function synthesizeClip(spec: ClipSpec): Float32Array {
  const n = Math.round(spec.totalS * spec.sampleRate);
  const samples = new Float32Array(n);
  const rng = mulberry32(1234);
  for (const burst of spec.bursts) {
    const start = Math.round(burst.startS * spec.sampleRate);
    const len = Math.round(burst.durS * spec.sampleRate);
    for (let i = 0; i < len && start + i < n; i++) {
      const t = i / spec.sampleRate;
      const envelope = Math.sin((Math.PI * i) / len);
      const tone =
        0.5 * Math.sin(2 * Math.PI * burst.freq * t) +
        0.25 * Math.sin(2 * Math.PI * burst.freq * 2.7 * t);
      samples[start + i] = envelope * (tone + 0.05 * (rng() * 2 - 1));
    }
  }
  return samples;
}

export function writeSampleClips(dir: string): string[] {
  fs.mkdirSync(dir, { recursive: true });
  return SAMPLE_CLIPS.map((spec) => {
    const p = path.join(dir, `${spec.name}.wav`);
    fs.writeFileSync(p, writeWavPcm16(synthesizeClip(spec), spec.sampleRate));
    return p;
  });
}

export function writeSilenceClip(dir: string): string {
  fs.mkdirSync(dir, { recursive: true });
  const p = path.join(dir, "silence.wav");
  fs.writeFileSync(p, writeWavPcm16(new Float32Array(16000), 16000));
  return p;
}
