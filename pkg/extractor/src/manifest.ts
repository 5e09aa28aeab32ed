/** Corpus manifest writer (mmfuse-manifest v1): tab-separated, eight fields
 * per entry, acoustic paths as comma-joined layer=path pairs relative to the
 * manifest directory. */

export const MANIFEST_HEADER = "# mmfuse-manifest v1";

export type Label = "CN" | "MCI" | "ADRD";
export type Sex = "M" | "F";

export interface ManifestEntry {
  recordingId: string;
  label: Label;
  sex: Sex;
  age: number;
  corpusId: string;
  acousticPaths: Map<number, string>;
  textPath: string;
  timingPath: string;
}

export function formatManifest(entries: ManifestEntry[]): string {
  const lines = [MANIFEST_HEADER];
  for (const e of entries) {
    const layers = [...e.acousticPaths.keys()].sort((a, b) => a - b);
    for (const layer of layers) {
      if (layer < 1 || layer > 12) {
        throw new Error(`${e.recordingId}: layer ${layer} outside 1..12`);
      }
    }
    const acoustic = layers.map((l) => `${l}=${e.acousticPaths.get(l)}`).join(",");
    lines.push(
      [e.recordingId, e.label, e.sex, String(e.age), e.corpusId, acoustic, e.textPath, e.timingPath].join("\t"),
    );
  }
  return lines.join("\n") + "\n";
}
