/** Extraction CLI.
 *
 * Usage:
 *   node dist/src/cli.js extract --out DIR --audio a.wav [b.wav ...]
 *       [--layers 1-12] [--variant base|TA|TA_PAD] [--meta meta.json]
 *
 * --meta points at a JSON array of {recordingId,label,sex,age,corpusId}
 * aligned with the audio list; entries default to CN/F/70/corpusA with ids
 * derived from file names.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { StubAcousticEncoder, StubTextEncoder, StubTranscriber } from "./backends";
import { Backends, ExtractionJob, RecordingMeta, extractCorpus } from "./extract";
import { Variant } from "./positionPlan";

function parseLayers(text: string): number[] {
  const out: number[] = [];
  for (const part of text.split(",")) {
    if (part.includes("-")) {
      const [lo, hi] = part.split("-").map(Number);
      for (let l = lo; l <= hi; l++) out.push(l);
    } else if (part.trim()) {
      out.push(Number(part));
    }
  }
  return out;
}

function usage(): never {
  console.error("usage: cli.js extract --out DIR --audio FILE... [--layers 1-12] [--variant base] [--meta FILE]");
  process.exit(2);
}

export function main(argv: string[]): number {
  if (argv[0] !== "extract") {
    usage();
  }
  const audio: string[] = [];
  let out = "";
  let layers = parseLayers("1-12");
  let variant: Variant = "base";
  let metaPath = "";
  for (let i = 1; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--audio") {
      while (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
        audio.push(argv[++i]);
      }
    } else if (arg === "--out") {
      out = argv[++i];
    } else if (arg === "--layers") {
      layers = parseLayers(argv[++i]);
    } else if (arg === "--variant") {
      const v = argv[++i];
      if (v !== "base" && v !== "TA" && v !== "TA_PAD") {
        usage();
      }
      variant = v;
    } else if (arg === "--meta") {
      metaPath = argv[++i];
    } else {
      usage();
    }
  }
  if (!out || audio.length === 0) {
    usage();
  }

  let metas: RecordingMeta[];
  if (metaPath) {
    metas = JSON.parse(fs.readFileSync(metaPath, "utf-8"));
    if (metas.length !== audio.length) {
      console.error(`meta file has ${metas.length} entries for ${audio.length} audio files`);
      return 1;
    }
  } else {
    metas = audio.map((p, i) => ({
      recordingId: path.basename(p).replace(/\.[^.]+$/, "") || `rec${i}`,
      label: "CN",
      sex: "F",
      age: 70,
      corpusId: "corpusA",
    }));
  }

  const backends: Backends = {
    acoustic: new StubAcousticEncoder(),
    transcriber: new StubTranscriber(),
    text: new StubTextEncoder(),
  };
  const jobs: ExtractionJob[] = audio.map((audioPath, i) => ({
    audioPath,
    layers,
    variant,
    meta: metas[i],
  }));
  try {
    const manifest = extractCorpus(jobs, backends, out);
    console.log(manifest);
    return 0;
  } catch (err) {
    console.error(`extract: error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
