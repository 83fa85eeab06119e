/**
 * Annotation document model for human VIP evaluation.
 *
 * Pure functions over an immutable draft: load a session bundle, segment the
 * translation into semantic fragments, judge each fragment, and export an
 * annotation set byte-compatible with the evaluation toolkit's format.
 * No DOM, no network; the UI layer in app.ts is a thin shell over this file.
 */

export type Tokenization = "whitespace" | "per_character";

export interface SourceToken {
  text: string;
  start_s: number;
  end_s: number;
}

export interface Bundle {
  session_id: string;
  source_tokens: SourceToken[];
  final_translation: string;
  suggested_breaks: number[];
  tokenization: Tokenization;
}

export type FailureKind = "correctness" | "expressiveness";

export type Judgment =
  | { valid: true }
  | { valid: false; failure_kind: FailureKind }
  | null;

export interface AnnotationDraft {
  bundle: Bundle;
  tokens: string[]; // tokenized final translation
  /** Interior fragment boundaries: strictly increasing token indices. */
  boundaries: number[];
  /** One judgment per fragment (boundaries.length + 1 entries). */
  judgments: Judgment[];
  dirty: boolean;
}

export interface FragmentAnnotationOut {
  fragment_text: string;
  valid: boolean;
  failure_kind?: FailureKind;
}

export interface AnnotationSetOut {
  session_id: string;
  annotator_id: string;
  fragments: FragmentAnnotationOut[];
}

/** Recommended upper bound on fragment length; a warning, never a block. */
export const WORD_LIMIT = 50;

/** Must mirror the evaluation toolkit's target tokenizer exactly. */
export function tokenizeTarget(text: string, tok: Tokenization): string[] {
  if (tok === "whitespace") {
    return text.split(/\s+/).filter((w) => w.length > 0);
  }
  return Array.from(text).filter((ch) => !/\s/.test(ch));
}

function joiner(tok: Tokenization): string {
  return tok === "per_character" ? "" : " ";
}

export function parseBundle(raw: unknown): Bundle {
  if (typeof raw !== "object" || raw === null) {
    throw new Error("bundle must be a JSON object");
  }
  const b = raw as Record<string, unknown>;
  if (typeof b.session_id !== "string" || b.session_id.length === 0) {
    throw new Error("bundle is missing session_id");
  }
  if (typeof b.final_translation !== "string" || b.final_translation.length === 0) {
    throw new Error("bundle has no translation to annotate");
  }
  if (!Array.isArray(b.source_tokens)) {
    throw new Error("bundle is missing source_tokens");
  }
  const tokenization: Tokenization =
    b.tokenization === "per_character" ? "per_character" : "whitespace";
  const breaks = Array.isArray(b.suggested_breaks)
    ? b.suggested_breaks.filter((x): x is number => Number.isInteger(x))
    : [];
  return {
    session_id: b.session_id,
    source_tokens: b.source_tokens as SourceToken[],
    final_translation: b.final_translation,
    suggested_breaks: breaks,
    tokenization,
  };
}

export function loadBundle(raw: unknown, useSuggestedBreaks: boolean): AnnotationDraft {
  const bundle = parseBundle(raw);
  const tokens = tokenizeTarget(bundle.final_translation, bundle.tokenization);
  if (tokens.length === 0) {
    throw new Error("bundle translation tokenizes to nothing");
  }
  let boundaries: number[] = [];
  if (useSuggestedBreaks) {
    boundaries = bundle.suggested_breaks
      .filter((i) => i > 0 && i < tokens.length)
      .sort((a, b) => a - b)
      .filter((x, i, arr) => i === 0 || x !== arr[i - 1]);
  }
  return {
    bundle,
    tokens,
    boundaries,
    judgments: new Array(boundaries.length + 1).fill(null),
    dirty: false,
  };
}

/** Fragment texts induced by the current boundaries. */
export function fragmentTexts(draft: AnnotationDraft): string[] {
  const sep = joiner(draft.bundle.tokenization);
  const edges = [0, ...draft.boundaries, draft.tokens.length];
  const out: string[] = [];
  for (let i = 0; i + 1 < edges.length; i++) {
    out.push(draft.tokens.slice(edges[i], edges[i + 1]).join(sep));
  }
  return out;
}

/** Word counts per fragment (token counts under the bundle's tokenization). */
export function fragmentWordCounts(draft: AnnotationDraft): number[] {
  const edges = [0, ...draft.boundaries, draft.tokens.length];
  const counts: number[] = [];
  for (let i = 0; i + 1 < edges.length; i++) {
    counts.push(edges[i + 1] - edges[i]);
  }
  return counts;
}

export function overLimitFlags(draft: AnnotationDraft): boolean[] {
  return fragmentWordCounts(draft).map((n) => n > WORD_LIMIT);
}

function fragmentIndexOfToken(draft: AnnotationDraft, tokenIndex: number): number {
  let idx = 0;
  for (const b of draft.boundaries) {
    if (tokenIndex < b) break;
    idx++;
  }
  return idx;
}

/**
 * Split the fragment containing tokenIndex so a new fragment starts there.
 * Splitting at an existing boundary (or at the ends) is a no-op. Both halves
 * come back unjudged: their content changed, so prior judgments do not carry.
 */
export function splitFragment(draft: AnnotationDraft, tokenIndex: number): AnnotationDraft {
  if (tokenIndex <= 0 || tokenIndex >= draft.tokens.length) return draft;
  if (draft.boundaries.includes(tokenIndex)) return draft;
  const frag = fragmentIndexOfToken(draft, tokenIndex);
  const boundaries = [...draft.boundaries, tokenIndex].sort((a, b) => a - b);
  const judgments = [...draft.judgments];
  judgments.splice(frag, 1, null, null);
  return { ...draft, boundaries, judgments, dirty: true };
}

/**
 * Remove boundary number boundaryIndex, merging its two fragments. The merged
 * fragment keeps the judgment only when both sides agreed on it.
 */
export function mergeFragments(draft: AnnotationDraft, boundaryIndex: number): AnnotationDraft {
  if (boundaryIndex < 0 || boundaryIndex >= draft.boundaries.length) return draft;
  const boundaries = draft.boundaries.filter((_, i) => i !== boundaryIndex);
  const left = draft.judgments[boundaryIndex];
  const right = draft.judgments[boundaryIndex + 1];
  const merged: Judgment =
    left !== null && right !== null && JSON.stringify(left) === JSON.stringify(right)
      ? left
      : null;
  const judgments = [...draft.judgments];
  judgments.splice(boundaryIndex, 2, merged);
  return { ...draft, boundaries, judgments, dirty: true };
}

/**
 * Judge one fragment. Marking a fragment invalid requires naming what failed
 * (correctness or expressiveness); the UI blocks the action otherwise.
 */
export function setValidity(
  draft: AnnotationDraft,
  fragmentIndex: number,
  valid: boolean,
  failureKind?: FailureKind,
): AnnotationDraft {
  if (fragmentIndex < 0 || fragmentIndex >= draft.judgments.length) {
    throw new Error(`no fragment ${fragmentIndex}`);
  }
  if (!valid && failureKind !== "correctness" && failureKind !== "expressiveness") {
    throw new Error("marking a fragment invalid requires a failure kind");
  }
  const judgments = [...draft.judgments];
  judgments[fragmentIndex] = valid ? { valid: true } : { valid: false, failure_kind: failureKind! };
  return { ...draft, judgments, dirty: true };
}

/** Live VIP readout: percent of fragments currently judged valid. */
export function liveVip(draft: AnnotationDraft): number {
  const total = draft.judgments.length;
  const valid = draft.judgments.filter((j) => j !== null && j.valid).length;
  return (100 * valid) / total;
}

export function unjudgedFragments(draft: AnnotationDraft): number[] {
  return draft.judgments
    .map((j, i) => (j === null ? i : -1))
    .filter((i) => i >= 0);
}

function strippedConcatenation(texts: string[]): string {
  return texts.join("").replace(/\s+/g, "");
}

/**
 * Produce the annotation set consumed by `eval-vip`. Refuses to export while
 * any fragment is unjudged, and re-checks that the fragments reassemble the
 * bundle's translation exactly.
 */
export function exportAnnotations(draft: AnnotationDraft, annotatorId: string): AnnotationSetOut {
  const missing = unjudgedFragments(draft);
  if (missing.length > 0) {
    throw new Error(
      `cannot export: fragment${missing.length > 1 ? "s" : ""} ` +
        missing.map((i) => i + 1).join(", ") + " unjudged",
    );
  }
  const texts = fragmentTexts(draft);
  const expected = draft.bundle.final_translation.replace(/\s+/g, "");
  if (strippedConcatenation(texts) !== expected) {
    throw new Error("fragments no longer reassemble the session translation");
  }
  const fragments: FragmentAnnotationOut[] = texts.map((text, i) => {
    const j = draft.judgments[i]!;
    return j.valid
      ? { fragment_text: text, valid: true }
      : { fragment_text: text, valid: false, failure_kind: j.failure_kind };
  });
  return {
    session_id: draft.bundle.session_id,
    annotator_id: annotatorId,
    fragments,
  };
}

/**
 * Rebuild a draft from a previously exported annotation set, recovering the
 * boundaries from the fragment texts. Import of an export round-trips to an
 * identical draft state.
 */
export function draftFromAnnotations(raw: unknown, ann: AnnotationSetOut): AnnotationDraft {
  let draft = loadBundle(raw, false);
  if (ann.session_id !== draft.bundle.session_id) {
    throw new Error(
      `annotation set is for ${ann.session_id}, bundle is ${draft.bundle.session_id}`,
    );
  }
  const boundaries: number[] = [];
  let cursor = 0;
  for (const frag of ann.fragments.slice(0, -1)) {
    cursor += tokenizeTarget(frag.fragment_text, draft.bundle.tokenization).length;
    boundaries.push(cursor);
  }
  draft = { ...draft, boundaries, judgments: new Array(ann.fragments.length).fill(null) };
  if (JSON.stringify(fragmentTexts(draft)) !== JSON.stringify(ann.fragments.map((f) => f.fragment_text))) {
    throw new Error("annotation fragments do not align with the bundle translation");
  }
  const judgments: Judgment[] = ann.fragments.map((f) =>
    f.valid ? { valid: true } : { valid: false, failure_kind: f.failure_kind! },
  );
  return { ...draft, judgments, dirty: false };
}

/** Stable masked label for blinded review, hiding which system produced it. */
export function blindLabel(sessionId: string): string {
  let h = 2166136261;
  for (const ch of sessionId) {
    h = (h ^ ch.charCodeAt(0)) >>> 0;
    h = Math.imul(h, 16777619) >>> 0;
  }
  return `session-${(h % 10000).toString().padStart(4, "0")}`;
}
