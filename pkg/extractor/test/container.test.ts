import assert from "node:assert/strict";
import { test } from "node:test";

import { HEADER_SIZE, readContainer, writeContainer } from "../src/container";
import { taPadPositionPlan, taPositionPlan } from "../src/positionPlan";
import { formatTimingFile } from "../src/timing";
import { readWav, resample, writeWavPcm16 } from "../src/wav";
import { mulberry32 } from "../src/rng";

test("container round trip is bit exact", () => {
  const rng = mulberry32(7);
  const payload = new Float32Array(6 * 4);
  for (let i = 0; i < payload.length; i++) {
    payload[i] = Math.fround(rng() * 4 - 2);
  }
  const c = { kind: "acoustic" as const, rows: 6, cols: 4, layerIndex: 3, durationS: 0.12, payload };
  const bytes = writeContainer(c);
  assert.equal(bytes.length, HEADER_SIZE + 4 * 24);
  const back = readContainer(bytes);
  assert.equal(back.kind, "acoustic");
  assert.equal(back.layerIndex, 3);
  assert.equal(back.rows, 6);
  assert.equal(back.cols, 4);
  assert.deepEqual([...back.payload], [...payload]);
  assert.deepEqual(writeContainer(back), bytes);
});

test("container rejects bad shapes and values", () => {
  const payload = new Float32Array(4);
  assert.throws(() => writeContainer({ kind: "acoustic", rows: 2, cols: 3, layerIndex: 1, durationS: 1, payload }));
  assert.throws(() => writeContainer({ kind: "acoustic", rows: 2, cols: 2, layerIndex: 1, durationS: null, payload }));
  payload[1] = Number.NaN;
  assert.throws(() => writeContainer({ kind: "text", rows: 2, cols: 2, layerIndex: null, durationS: null, payload }));
});

test("wav round trip and resampling", () => {
  const samples = new Float32Array(2205);
  for (let i = 0; i < samples.length; i++) {
    samples[i] = Math.sin((2 * Math.PI * 220 * i) / 22050);
  }
  const clip = readWav(readWavBuf(samples, 22050));
  assert.equal(clip.sampleRate, 22050);
  assert.equal(clip.samples.length, 2205);
  const re = resample(clip);
  assert.equal(re.sampleRate, 16000);
  assert.ok(Math.abs(re.samples.length - 1600) <= 2);

  function readWavBuf(s: Float32Array, rate: number) {
    return writeWavPcm16(s, rate);
  }
});

test("TA plan maps token starts to the 20 ms scale", () => {
  const words = [
    { word: "a", startS: 1.0, endS: 1.2 },
    { word: "b", startS: 2.0, endS: 2.3 },
  ];
  const plan = taPositionPlan(words, [["a"], ["b"]]);
  assert.deepEqual(plan.positionIndex, [50, 100]);
  assert.deepEqual(plan.isPad, [false, false]);

  const split = taPositionPlan([{ word: "xxyy", startS: 1.0, endS: 1.4 }], [["xx", "yy"]]);
  assert.deepEqual(split.positionIndex, [50, 60]);
});

test("TA_PAD inserts one pad per inter-word gap at silence onset", () => {
  const words = [
    { word: "a", startS: 1.0, endS: 1.2 },
    { word: "b", startS: 2.0, endS: 2.3 },
  ];
  const plan = taPadPositionPlan(words, [["a"], ["b"]]);
  assert.deepEqual(plan.tokens[1], "[PAD]");
  assert.deepEqual(plan.positionIndex, [50, 60, 100]);

  const contiguous = taPadPositionPlan(
    [
      { word: "a", startS: 1.0, endS: 1.2 },
      { word: "b", startS: 1.2, endS: 1.5 },
    ],
    [["a"], ["b"]],
  );
  assert.deepEqual(contiguous.isPad, [false, false]);
});

test("timing file format carries pieces and tolerates empty transcripts", () => {
  const text = formatTimingFile(
    [{ word: "merilu", startS: 0.1, endS: 0.6 }],
    [["mer", "ilu"]],
  );
  const lines = text.trimEnd().split("\n");
  assert.equal(lines[0], "# mmfuse-timing v1");
  assert.equal(lines[1], "merilu\t0.1\t0.6\tmer|ilu");
  assert.equal(formatTimingFile([], []), "# mmfuse-timing v1\n");
});
