/** Extraction job orchestration: audio file -> per-layer acoustic containers,
 * timing file, text container, and a manifest entry. */

import * as fs from "node:fs";
import * as path from "node:path";

import { AcousticEncoder, NUM_LAYERS, TextEncoder, Transcriber } from "./backends";
import { writeContainer } from "./container";
import { Label, ManifestEntry, Sex, formatManifest } from "./manifest";
import { PAD_TOKEN, Variant, taPadPositionPlan, taPositionPlan } from "./positionPlan";
import { WordTiming, formatTimingFile } from "./timing";
import { readWav, resample } from "./wav";

export interface RecordingMeta {
  recordingId: string;
  label: Label;
  sex: Sex;
  age: number;
  corpusId: string;
}

export interface ExtractionJob {
  audioPath: string;
  layers: number[];
  variant: Variant;
  meta: RecordingMeta;
}

export interface Backends {
  acoustic: AcousticEncoder;
  transcriber: Transcriber;
  text: TextEncoder;
}

export interface ExtractionResult {
  entry: ManifestEntry;
  words: WordTiming[];
  tokensPerWord: string[][];
  padCount: number;
  warnings: string[];
}

export function extractRecording(job: ExtractionJob, backends: Backends, outDir: string): ExtractionResult {
  for (const layer of job.layers) {
    if (layer < 1 || layer > NUM_LAYERS) {
      throw new Error(`requested layer ${layer} outside 1..${NUM_LAYERS}`);
    }
  }
  const warnings: string[] = [];
  const warn = (msg: string) => warnings.push(msg);
  const clip = resample(readWav(fs.readFileSync(job.audioPath)));
  const rid = job.meta.recordingId;
  fs.mkdirSync(path.join(outDir, "containers"), { recursive: true });
  fs.mkdirSync(path.join(outDir, "timings"), { recursive: true });

  const acousticPaths = new Map<number, string>();
  for (const layer of job.layers) {
    const frames = backends.acoustic.encodeLayer(clip.samples, clip.sampleRate, layer);
    const rel = `containers/${rid}.l${String(layer).padStart(2, "0")}.aemb`;
    fs.writeFileSync(
      path.join(outDir, rel),
      writeContainer({
        kind: "acoustic",
        rows: frames.rows,
        cols: frames.cols,
        layerIndex: layer,
        durationS: frames.durationS,
        payload: frames.payload,
      }),
    );
    acousticPaths.set(layer, rel);
  }

  const words = backends.transcriber.transcribe(clip.samples, clip.sampleRate);
  const tokensPerWord = words.map((w) => backends.text.tokenize(w.word));
  const timingRel = `timings/${rid}.tsv`;
  fs.writeFileSync(path.join(outDir, timingRel), formatTimingFile(words, tokensPerWord));

  const textRel = `containers/${rid}.temb`;
  let padCount = 0;
  if (words.length > 0) {
    let tokens: string[];
    let positions: number[] | null;
    if (job.variant === "base") {
      tokens = tokensPerWord.flat();
      positions = null;
    } else {
      const plan =
        job.variant === "TA"
          ? taPositionPlan(words, tokensPerWord)
          : taPadPositionPlan(words, tokensPerWord);
      tokens = plan.tokens;
      positions = plan.positionIndex;
      padCount = plan.isPad.filter(Boolean).length;
    }
    const payload = backends.text.encode(tokens, positions, warn);
    fs.writeFileSync(
      path.join(outDir, textRel),
      writeContainer({
        kind: "text",
        rows: tokens.length,
        cols: payload.length / tokens.length,
        layerIndex: null,
        durationS: null,
        payload,
      }),
    );
  } else {
    // All-silence clip: a single neutral token row keeps the container valid;
    // the empty timing file marks the recording as silence downstream.
    const payload = backends.text.encode([PAD_TOKEN], [0], warn);
    fs.writeFileSync(
      path.join(outDir, textRel),
      writeContainer({
        kind: "text",
        rows: 1,
        cols: payload.length,
        layerIndex: null,
        durationS: null,
        payload,
      }),
    );
  }

  return {
    entry: {
      recordingId: rid,
      label: job.meta.label,
      sex: job.meta.sex,
      age: job.meta.age,
      corpusId: job.meta.corpusId,
      acousticPaths,
      textPath: textRel,
      timingPath: timingRel,
    },
    words,
    tokensPerWord,
    padCount,
    warnings,
  };
}

export function extractCorpus(jobs: ExtractionJob[], backends: Backends, outDir: string): string {
  const entries: ManifestEntry[] = [];
  for (const job of jobs) {
    const result = extractRecording(job, backends, outDir);
    entries.push(result.entry);
    for (const w of result.warnings) {
      console.warn(`${job.meta.recordingId}: ${w}`);
    }
  }
  const manifestPath = path.join(outDir, "manifest.tsv");
  fs.writeFileSync(manifestPath, formatManifest(entries));
  return manifestPath;
}
