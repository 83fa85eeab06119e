/**
 * Browser shell for the annotation model: file-based exchange only.
 * Load a session bundle, click between words to split fragments, click a
 * boundary pill to merge, judge each fragment, export the annotation set.
 */

import {
  AnnotationDraft,
  FailureKind,
  blindLabel,
  draftFromAnnotations,
  exportAnnotations,
  fragmentTexts,
  fragmentWordCounts,
  liveVip,
  loadBundle,
  mergeFragments,
  overLimitFlags,
  setValidity,
  splitFragment,
  unjudgedFragments,
} from "./model.js";

let draft: AnnotationDraft | null = null;
let blinded = false;

const $ = (id: string) => document.getElementById(id)!;

function showError(message: string): void {
  const banner = $("error-banner");
  banner.textContent = message;
  banner.classList.remove("hidden");
}

function clearError(): void {
  $("error-banner").classList.add("hidden");
}

function renderSource(): void {
  if (!draft) return;
  const holder = $("source-tokens");
  holder.innerHTML = "";
  for (const tok of draft.bundle.source_tokens) {
    const span = document.createElement("span");
    span.className = "source-token";
    span.textContent = tok.text;
    span.title = `${tok.start_s.toFixed(2)}s - ${tok.end_s.toFixed(2)}s`;
    holder.appendChild(span);
    holder.appendChild(document.createTextNode(" "));
  }
}

function render(): void {
  if (!draft) return;
  $("session-label").textContent = blinded
    ? blindLabel(draft.bundle.session_id)
    : draft.bundle.session_id;
  const judged = draft.judgments.length - unjudgedFragments(draft).length;
  $("vip-readout").textContent =
    `VIP ${liveVip(draft).toFixed(1)}%  (${judged}/${draft.judgments.length} judged)`;

  const texts = fragmentTexts(draft);
  const counts = fragmentWordCounts(draft);
  const warnings = overLimitFlags(draft);
  const list = $("fragments");
  list.innerHTML = "";
  let tokenOffset = 0;
  texts.forEach((text, fi) => {
    const row = document.createElement("div");
    row.className = "fragment";
    const judgment = draft!.judgments[fi];
    if (judgment) row.classList.add(judgment.valid ? "valid" : "invalid");

    const words = document.createElement("div");
    words.className = "fragment-text";
    const tokens = text.length === 0 ? [] : draft!.tokens.slice(
      tokenOffset, tokenOffset + counts[fi]);
    tokens.forEach((tok, ti) => {
      const globalIndex = tokenOffset + ti;
      if (ti > 0) {
        const gap = document.createElement("span");
        gap.className = "split-gap";
        gap.title = "split here";
        gap.textContent = " ";
        gap.onclick = () => {
          draft = splitFragment(draft!, globalIndex);
          render();
        };
        words.appendChild(gap);
      }
      const span = document.createElement("span");
      span.className = "target-token";
      span.textContent = tok;
      words.appendChild(span);
    });
    row.appendChild(words);

    const meta = document.createElement("div");
    meta.className = "fragment-meta";
    meta.textContent = `fragment ${fi + 1} · ${counts[fi]} words`;
    if (warnings[fi]) {
      const badge = document.createElement("span");
      badge.className = "warning-badge";
      badge.textContent = ` over ${50} words`;
      meta.appendChild(badge);
    }
    row.appendChild(meta);

    const controls = document.createElement("div");
    controls.className = "fragment-controls";
    const validBtn = document.createElement("button");
    validBtn.textContent = "valid";
    validBtn.onclick = () => {
      draft = setValidity(draft!, fi, true);
      render();
    };
    controls.appendChild(validBtn);
    for (const kind of ["correctness", "expressiveness"] as FailureKind[]) {
      const btn = document.createElement("button");
      btn.textContent = `invalid: ${kind}`;
      btn.onclick = () => {
        draft = setValidity(draft!, fi, false, kind);
        render();
      };
      controls.appendChild(btn);
    }
    if (fi < draft!.boundaries.length) {
      const mergeBtn = document.createElement("button");
      mergeBtn.textContent = "merge with next";
      mergeBtn.onclick = () => {
        draft = mergeFragments(draft!, fi);
        render();
      };
      controls.appendChild(mergeBtn);
    }
    row.appendChild(controls);
    list.appendChild(row);
    tokenOffset += counts[fi];
  });
}

async function readFileInput(input: HTMLInputElement): Promise<unknown> {
  const file = input.files?.[0];
  if (!file) throw new Error("choose a file first");
  return JSON.parse(await file.text());
}

function wire(): void {
  $("load-button").onclick = async () => {
    clearError();
    try {
      const raw = await readFileInput($("bundle-file") as HTMLInputElement);
      const useSuggested = ($("use-suggested") as HTMLInputElement).checked;
      draft = loadBundle(raw, useSuggested);
      renderSource();
      render();
    } catch (e) {
      draft = null;
      showError(`could not load bundle: ${(e as Error).message}`);
    }
  };

  $("import-button").onclick = async () => {
    clearError();
    try {
      const bundleRaw = await readFileInput($("bundle-file") as HTMLInputElement);
      const annRaw = await readFileInput($("annotation-file") as HTMLInputElement);
      draft = draftFromAnnotations(bundleRaw, annRaw as never);
      renderSource();
      render();
    } catch (e) {
      showError(`could not import annotations: ${(e as Error).message}`);
    }
  };

  $("blind-toggle").onclick = () => {
    blinded = !blinded;
    render();
  };

  $("export-button").onclick = () => {
    clearError();
    if (!draft) {
      showError("nothing loaded");
      return;
    }
    try {
      const annotator = ($("annotator-id") as HTMLInputElement).value || "anonymous";
      const out = exportAnnotations(draft, annotator);
      const blob = new Blob([JSON.stringify(out, null, 1)], { type: "application/json" });
      const link = document.createElement("a");
      link.href = URL.createObjectURL(blob);
      link.download = `${out.session_id}.annotations.json`;
      link.click();
      URL.revokeObjectURL(link.href);
    } catch (e) {
      showError((e as Error).message);
    }
  };
}

wire();
