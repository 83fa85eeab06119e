"""Command-line entry point.

Subcommands: gen-data, simulate, retriever {train,eval,topk}, eval-latency,
eval-vip, corr, export-annotation. Exit codes: 0 success, 1 usage error,
2 data/validation error, 3 backend/transport error. Outputs are written
atomically (temp file, then rename) so interrupted runs never leave
truncated files. Setting precedence: flags > config file > environment
variables (SISTREAM_*) > built-in defaults.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from . import agent, backends, core, datagen, metrics, retriever as retr
from .core import LanguageTokenization, PER_CHARACTER, WHITESPACE, ValidationError

__version__ = "0.1.0"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

ENV_PREFIX = "SISTREAM_"

TOKENIZATION_CHOICES = {"ws": WHITESPACE, "char": PER_CHARACTER}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


@dataclass
class GlobalConfig:
    """Resolved settings shared across subcommands."""

    seed: int = 0
    step_s: float = 1.0
    tokenization: str = WHITESPACE
    endpoint_url: str | None = None
    timeout_s: float = 10.0
    max_retries: int = 3
    jobs: int | None = None


def _setting(args, name: str, file_cfg: dict, default, cast=None):
    """flags > config file > env var > default."""
    val = getattr(args, name.replace("-", "_"), None)
    if val is not None:
        return val
    if name in file_cfg:
        return file_cfg[name]
    env = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if env is not None:
        return cast(env) if cast else env
    return default


def atomic_write(path: str, lines: list[str]) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_file_cfg(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _tokenization(name: str) -> LanguageTokenization:
    if name in TOKENIZATION_CHOICES:
        return LanguageTokenization(TOKENIZATION_CHOICES[name])
    return LanguageTokenization(name)


# ---------------------------------------------------------------------------
# Subcommand implementations.


def cmd_gen_data(args) -> int:
    file_cfg = _load_file_cfg(args.config)
    seed = int(_setting(args, "seed", file_cfg, 0, int))
    rules = datagen.SegmentationRules.from_dict(_load_file_cfg(args.rules))
    samples = core.load_samples(args.in_path)
    lines: list[str] = []
    for sample in samples:
        if not sample.chunks:
            # un-segmented transcript: derive chunks from the rules first
            sample = datagen.sample_from_segmentation(sample.id, sample.source, rules)
        violations = core.validate_sample(sample)
        if violations:
            raise ValidationError(f"sample {sample.id!r}: {violations[0]}")
        pairs = datagen.make_prefix_pairs(
            sample,
            n=args.pairs_per_sample,
            seed=seed,
            complete_rule=args.complete_rule,
        )
        lines.extend(datagen.dump_prefix_pairs(sample.id, pairs))
    atomic_write(args.out, lines)
    print(f"wrote {len(lines)} pairs to {args.out}")
    return EXIT_OK


def _make_backend(args, gcfg: GlobalConfig, sample: core.StreamingSample,
                  cfg: agent.SessionConfig):
    if args.backend == "oracle":
        return backends.OracleBackend(sample.chunks, joiner=cfg.target_tok.joiner)
    if args.backend == "pause":
        lexicon = {}
        if args.lexicon:
            with open(args.lexicon, encoding="utf-8") as fh:
                for line in fh:
                    line = line.rstrip("\n")
                    if line and "\t" in line:
                        word, gloss = line.split("\t", 1)
                        lexicon[word] = gloss
        return backends.PauseBackend(lexicon, gap_threshold_s=args.gap_threshold)
    if args.backend == "llm":
        if not gcfg.endpoint_url:
            raise UsageError("--endpoint is required with --backend llm")
        return backends.LlmBackend(
            backends.EndpointConfig(
                url=gcfg.endpoint_url,
                timeout_s=gcfg.timeout_s,
                max_retries=gcfg.max_retries,
            )
        )
    raise UsageError(f"unknown backend {args.backend!r}")


def _resolve_global(args, file_cfg: dict) -> GlobalConfig:
    return GlobalConfig(
        seed=int(_setting(args, "seed", file_cfg, 0, int)),
        step_s=float(_setting(args, "step", file_cfg, 1.0, float)),
        tokenization=_setting(args, "tokenization", file_cfg, "ws"),
        endpoint_url=_setting(args, "endpoint", file_cfg, None),
        timeout_s=float(_setting(args, "timeout", file_cfg, 10.0, float)),
        max_retries=int(_setting(args, "max_retries", file_cfg, 3, int)),
        jobs=getattr(args, "jobs", None),
    )


def cmd_simulate(args) -> int:
    file_cfg = _load_file_cfg(args.config)
    gcfg = _resolve_global(args, file_cfg)
    tok = _tokenization(gcfg.tokenization)
    session_cfg = agent.SessionConfig(
        step_s=gcfg.step_s,
        cot_transcription=bool(file_cfg.get("cot_transcription", False)),
        streaming=bool(file_cfg.get("streaming", True)),
        use_context=bool(file_cfg.get("use_context", True)),
        use_retrieval=bool(file_cfg.get("use_retrieval", False)),
        retriever_k=int(file_cfg.get("retriever_k", 5)),
        seed=gcfg.seed,
        target_tok=tok,
        processing_latency_s=float(file_cfg.get("processing_latency_s", 0.0)),
    )
    samples = core.load_samples(args.samples)
    os.makedirs(args.out, exist_ok=True)

    terminology = None
    if session_cfg.use_retrieval:
        if not (args.kb and args.params):
            raise UsageError("use_retrieval needs --kb and --params")
        terminology = retr.TerminologyRetriever(
            params=retr.FusionParams.from_json(open(args.params, encoding="utf-8").read()),
            kb=retr.KnowledgeBase.from_tsv(args.kb),
        )

    def run_one(sample: core.StreamingSample) -> str:
        backend = _make_backend(args, gcfg, sample, session_cfg)
        result = agent.run_session(
            sample, backend, retriever=terminology, cfg=session_cfg
        )
        atomic_write(os.path.join(args.out, f"{sample.id}.json"), [result.to_json()])
        atomic_write(
            os.path.join(args.out, f"{sample.id}.emissions.jsonl"),
            result.emission_log.to_jsonl(),
        )
        return sample.id

    jobs = gcfg.jobs or os.cpu_count() or 1
    if jobs == 1 or len(samples) <= 1:
        for s in samples:
            run_one(s)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run_one, samples))
    print(f"wrote {len(samples)} session results to {args.out}")
    return EXIT_OK


def cmd_retriever(args) -> int:
    if args.action == "train":
        samples = core.load_samples(args.samples)
        examples = _training_examples(samples, negatives=args.negatives, seed=args.seed)
        cfg = retr.FeatureConfig(dim=args.dim, heads=args.heads, projection_seed=args.seed)
        result = retr.train(
            retr.init_params(cfg, seed=args.seed),
            examples,
            retr.TrainHyper(lr=args.lr, epochs=args.epochs, batch=args.batch, seed=args.seed),
        )
        atomic_write(args.params, [result.params.to_json()])
        print(f"final mean loss {result.final_loss:.4f}; params -> {args.params}")
        return EXIT_OK
    params = retr.FusionParams.from_json(open(args.params, encoding="utf-8").read())
    kb = retr.KnowledgeBase.from_tsv(args.kb)
    if args.action == "topk":
        window_tokens = args.text.split()
        items = retr.TerminologyRetriever(params, kb).retrieve(window_tokens, args.k)
        for item in items:
            print(f"{item.key}\t{item.value}")
        return EXIT_OK
    if args.action == "eval":
        samples = core.load_samples(args.samples)
        labeled = []
        for s in samples:
            tokens = [t.text for t in s.source.tokens]
            present = [it.key for it in kb.items if it.key in tokens]
            if present:
                labeled.append((tokens, present))
        if not labeled:
            raise ValidationError("no sample contains any knowledge key")
        recall = retr.eval_recall(params, labeled, kb, args.k)
        print(f"recall@{args.k} = {recall:.4f} over {len(labeled)} windows")
        return EXIT_OK
    raise UsageError(f"unknown retriever action {args.action!r}")


def _training_examples(samples, negatives: int, seed: int) -> list[retr.TrainExample]:
    """Positives pair a window with one of its own words; negatives pair it
    with words drawn from other samples."""
    rng = np.random.default_rng(seed)
    vocab_by_sample = []
    for s in samples:
        tokens = [t.text for t in s.source.tokens]
        if tokens:
            vocab_by_sample.append((s.id, tokens))
    examples: list[retr.TrainExample] = []
    for i, (_, tokens) in enumerate(vocab_by_sample):
        key = tokens[int(rng.integers(0, len(tokens)))]
        examples.append(retr.TrainExample(tokens, key, 1))
        others = [j for j in range(len(vocab_by_sample)) if j != i]
        for _ in range(negatives):
            if not others:
                break
            j = others[int(rng.integers(0, len(others)))]
            other_tokens = vocab_by_sample[j][1]
            neg = other_tokens[int(rng.integers(0, len(other_tokens)))]
            if neg in tokens:
                continue
            examples.append(retr.TrainExample(tokens, neg, 0))
    return examples


def cmd_eval_latency(args) -> int:
    tok = _tokenization(args.tokenization)
    log = metrics.load_emission_log(args.log, tok)
    samples = core.load_samples(args.sample)
    if len(samples) != 1:
        raise ValidationError(f"expected exactly one sample, found {len(samples)}")
    sample = samples[0]
    report = metrics.latency_report(
        log, T=sample.source.duration_s, reference_translation=sample.reference_translation
    )
    print(json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True))
    return EXIT_OK


def cmd_eval_vip(args) -> int:
    with open(args.ann, encoding="utf-8") as fh:
        ann = metrics.AnnotationSet.from_dict(json.load(fh))
    if args.result:
        with open(args.result, encoding="utf-8") as fh:
            final = json.load(fh)["final_translation"]
        problems = metrics.check_annotation_coverage(ann, final)
        if problems:
            raise ValidationError(problems[0])
    value = metrics.vip(ann)
    print(f"{value:.1f}")
    return EXIT_OK


def _read_score_tsv(path: str) -> dict[str, float]:
    scores: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected session_id<TAB>score")
            try:
                scores[parts[0]] = float(parts[1])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: score {parts[1]!r} is not a number")
    return scores


def cmd_corr(args) -> int:
    xs_by_id = _read_score_tsv(args.x)
    ys_by_id = _read_score_tsv(args.y)
    common = sorted(set(xs_by_id) & set(ys_by_id))
    if len(common) < 2:
        raise ValidationError(
            f"need at least 2 shared session ids, found {len(common)}"
        )
    tau = metrics.kendall_tau_b(
        [xs_by_id[i] for i in common], [ys_by_id[i] for i in common]
    )
    print(f"kendall_tau_b={tau:.6f} n={len(common)}")
    return EXIT_OK


def export_annotation_bundle(
    result: agent.SessionResult, sample: core.StreamingSample
) -> dict:
    """Bundle a finished session for the human annotation UI."""
    if not result.final_translation:
        raise ValidationError("nothing to annotate: final translation is empty")
    breaks: list[int] = []
    count = 0
    for rec in result.memory.records[:-1]:
        count += len(core.tokenize_target(rec.translation, result.emission_log.tok))
        breaks.append(count)
    return {
        "session_id": sample.id,
        "source_tokens": [t.to_dict() for t in sample.source.tokens],
        "final_translation": result.final_translation,
        "suggested_breaks": breaks,
        "tokenization": result.emission_log.tok.mode,
    }


def cmd_export_annotation(args) -> int:
    with open(args.result, encoding="utf-8") as fh:
        data = json.load(fh)
    samples = core.load_samples(args.sample)
    if len(samples) != 1:
        raise ValidationError(f"expected exactly one sample, found {len(samples)}")
    sample = samples[0]
    tok = LanguageTokenization(data["emission_log"]["tokenization"])
    memory = agent.Memory(
        records=[
            agent.RoundRecord(
                round_index=r["round_index"],
                translation=r["translation"],
                cutoff_s=r["cutoff_s"],
                transcription=r.get("transcription"),
                retrieved=r.get("retrieved", ()),
            )
            for r in data["rounds"]
        ]
    )
    result = agent.SessionResult(
        final_translation=data["final_translation"],
        emission_log=metrics.EmissionLog(
            events=[metrics.EmissionEvent.from_dict(e) for e in data["emission_log"]["events"]],
            tok=tok,
        ),
        memory=memory,
        rounds_run=data["rounds_run"],
    )
    bundle = export_annotation_bundle(result, sample)
    atomic_write(args.out, [json.dumps(bundle, ensure_ascii=False)])
    print(f"wrote annotation bundle to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument wiring.


FILE_FORMATS = """\
file formats:
  samples          JSONL: id, lang, duration_s, tokens[{text,start_s,end_s}],
                   chunks[{start_s,end_s,source_text,target_text}],
                   reference_translation, domain_tag
  prefix pairs     JSONL: {sample_id, prefix_end_s, expected_outputs[],
                   expected_cutoff_s}
  emission logs    JSONL: {time_s, kind, text, rewrite_index?}
  knowledge base   TSV: key<TAB>value
  fusion params    JSON: cfg echo + row-major W_q/W_k/W_v, w, b
  annotations      JSON: {session_id, annotator_id,
                   fragments:[{fragment_text, valid, failure_kind?}]}
  score tables     TSV: session_id<TAB>score
  wire protocol    HTTP POST JSON; reply {transcription?, translation,
                   cutoff_ms} (empty translation waits; $CLASI_LLM_TOKEN auth)
"""


def build_parser() -> _Parser:
    parser = _Parser(
        prog="sistream",
        description=__doc__,
        epilog=FILE_FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--json-errors",
        action="store_true",
        help="report errors as one JSON object on stderr",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-data", help="generate random-prefix training pairs")
    p.add_argument("--in", dest="in_path", required=True, help="samples JSONL")
    p.add_argument("--rules", help="segmentation rules JSON")
    p.add_argument("--pairs-per-sample", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="config file (JSON)")
    p.add_argument(
        "--complete-rule",
        choices=[datagen.COMPLETE_BY_END, datagen.COMPLETE_BY_START],
        default=datagen.COMPLETE_BY_END,
        help="when a chunk counts as complete at the sampled prefix time",
    )
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("simulate", help="run interpretation sessions over samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--backend", choices=["oracle", "pause", "llm"], required=True)
    p.add_argument("--config", help="session config file (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--step", type=float, help="window growth per round (seconds)")
    p.add_argument("--tokenization", choices=list(TOKENIZATION_CHOICES))
    p.add_argument("--jobs", type=int, help="concurrent sessions (default: cores)")
    p.add_argument("--lexicon", help="TSV lexicon for the pause backend")
    p.add_argument("--gap-threshold", type=float, default=0.5)
    p.add_argument("--endpoint", help="LLM service URL")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--kb", help="knowledge base TSV (retrieval)")
    p.add_argument("--params", help="fusion params JSON (retrieval)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("retriever", help="train or query the terminology retriever")
    p.add_argument("action", choices=["train", "eval", "topk"])
    p.add_argument("--samples", help="samples JSONL (train/eval)")
    p.add_argument("--kb", help="knowledge base TSV")
    p.add_argument("--params", required=True, help="fusion params JSON path")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--text", help="window text for topk")
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=1)
    p.set_defaults(func=cmd_retriever)

    p = sub.add_parser("eval-latency", help="AL/LAAL/FLAL from an emission log")
    p.add_argument("--log", required=True, help="emission log JSONL")
    p.add_argument("--sample", required=True, help="JSONL with the one source sample")
    p.add_argument("--tokenization", choices=list(TOKENIZATION_CHOICES), default="ws")
    p.set_defaults(func=cmd_eval_latency)

    p = sub.add_parser("eval-vip", help="valid information proportion from annotations")
    p.add_argument("--ann", required=True, help="annotation set JSON")
    p.add_argument("--result", help="session result JSON for the coverage check")
    p.set_defaults(func=cmd_eval_vip)

    p = sub.add_parser("corr", help="Kendall tau-b between two score tables")
    p.add_argument("--x", required=True, help="TSV: session_id<TAB>score")
    p.add_argument("--y", required=True, help="TSV: session_id<TAB>score")
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("export-annotation", help="bundle a session for the annotation UI")
    p.add_argument("--result", required=True, help="session result JSON")
    p.add_argument("--sample", required=True, help="JSONL with the one source sample")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_annotation)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    json_errors = "--json-errors" in argv

    def fail(code: int, kind: str, message: str) -> int:
        if json_errors:
            print(json.dumps({"error": message, "kind": kind, "exit_code": code}),
                  file=sys.stderr)
        else:
            print(f"sistream: {kind}: {message}", file=sys.stderr)
        return code

    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        return fail(EXIT_USAGE, "usage", str(e))
    except SystemExit as e:  # --version / --help
        return int(e.code or 0)
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        return fail(EXIT_USAGE, "usage", str(e))
    except (backends.BackendError, backends.ProtocolError, agent.SessionError) as e:
        return fail(EXIT_BACKEND, "backend", str(e))
    except (ValidationError, metrics.MalformedLogError, ValueError, KeyError) as e:
        return fail(EXIT_DATA, "data", str(e))
    except OSError as e:
        return fail(EXIT_DATA, "io", str(e))


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
