/** Time-aware positional-index plans for the linguistic encoder.
 *
 * TA: every token's positional index is its start time mapped onto the 20 ms
 * frame scale, with token start times subdividing the word interval
 * proportionally to character lengths. TA_PAD additionally inserts one [PAD]
 * token per inter-word silence of at least one frame, indexed at the silence
 * onset (the previous word's end frame). Indices are non-decreasing.
 */

import { WordTiming } from "./timing";

export const FRAME_SCALE_S = 0.02;
export const PAD_TOKEN = "[PAD]";

export type Variant = "base" | "TA" | "TA_PAD";

export interface PositionPlan {
  tokens: string[];
  positionIndex: number[];
  isPad: boolean[];
}

const REL_EPS = 1e-9;

function floorDiv(x: number, res: number): number {
  const q = x / res;
  return Math.floor(q + REL_EPS * Math.max(1, Math.abs(q)));
}

function tokenStartIndices(w: WordTiming, tokens: string[], res: number): number[] {
  if (tokens.length === 0) {
    throw new Error(`word ${w.word} has an empty token list`);
  }
  const chars = tokens.map((t) => Math.max(1, t.length));
  const total = chars.reduce((a, b) => a + b, 0);
  const dur = w.endS - w.startS;
  const out: number[] = [];
  let cum = 0;
  for (const c of chars) {
    out.push(floorDiv(w.startS + (dur * cum) / total, res));
    cum += c;
  }
  return out;
}

export function taPositionPlan(
  timings: WordTiming[],
  wordTokens: string[][],
  res: number = FRAME_SCALE_S,
): PositionPlan {
  return buildPlan(timings, wordTokens, res, false);
}

export function taPadPositionPlan(
  timings: WordTiming[],
  wordTokens: string[][],
  res: number = FRAME_SCALE_S,
): PositionPlan {
  return buildPlan(timings, wordTokens, res, true);
}

function buildPlan(timings: WordTiming[], wordTokens: string[][], res: number, withPads: boolean): PositionPlan {
  if (timings.length !== wordTokens.length) {
    throw new Error(`${timings.length} timings but ${wordTokens.length} token lists`);
  }
  const plan: PositionPlan = { tokens: [], positionIndex: [], isPad: [] };
  let prev = 0;
  timings.forEach((w, wi) => {
    const starts = tokenStartIndices(w, wordTokens[wi], res);
    if (withPads && wi > 0) {
      const padIdx = floorDiv(timings[wi - 1].endS, res);
      if (starts[0] > padIdx) {
        const idx = Math.max(padIdx, prev);
        plan.tokens.push(PAD_TOKEN);
        plan.positionIndex.push(idx);
        plan.isPad.push(true);
        prev = idx;
      }
    }
    wordTokens[wi].forEach((tok, ti) => {
      const idx = Math.max(starts[ti], prev);
      plan.tokens.push(tok);
      plan.positionIndex.push(idx);
      plan.isPad.push(false);
      prev = idx;
    });
  });
  return plan;
}
