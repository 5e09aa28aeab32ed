/** Timing file writer (mmfuse-timing v1): one word per line with start/end
 * seconds and an optional fourth column listing subword pieces joined by "|".
 * An empty transcription produces a header-only file, which the consumer
 * treats as an all-silence recording. */

export const TIMING_HEADER = "# mmfuse-timing v1";

export interface WordTiming {
  word: string;
  startS: number;
  endS: number;
}

export function checkTimings(timings: WordTiming[]): void {
  for (const w of timings) {
    if (!(0 <= w.startS && w.startS < w.endS)) {
      throw new Error(`word ${w.word}: need 0 <= start < end, got [${w.startS}, ${w.endS})`);
    }
  }
  for (let i = 1; i < timings.length; i++) {
    if (timings[i].startS < timings[i - 1].startS) {
      throw new Error("word timings must be ordered by start time");
    }
  }
}

export function formatTimingFile(timings: WordTiming[], pieces?: string[][]): string {
  checkTimings(timings);
  const lines = [TIMING_HEADER];
  timings.forEach((w, i) => {
    const fields = [w.word, String(w.startS), String(w.endS)];
    if (pieces && pieces[i].length > 1) {
      fields.push(pieces[i].join("|"));
    }
    lines.push(fields.join("\t"));
  });
  return lines.join("\n") + "\n";
}
