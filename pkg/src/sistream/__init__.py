"""Round-based simultaneous speech translation engine and evaluation workbench."""

from .core import (
    KnowledgeItem,
    LanguageTokenization,
    SemanticChunk,
    StreamingSample,
    TimedToken,
    TimedTranscript,
    tokenize_target,
    validate_sample,
)
from .stream import StreamCursor, StreamWindow, advance, open_stream, set_cutoff
from .datagen import PrefixPair, SegmentationRules, align_chunks, make_prefix_pairs, segment_transcript
from .backends import (
    BackendRequest,
    BackendResponse,
    EndpointConfig,
    LlmBackend,
    OracleBackend,
    PauseBackend,
    build_prompt,
)
from .agent import Memory, RoundRecord, SessionConfig, SessionResult, run_session
from .retriever import (
    FeatureConfig,
    FusionParams,
    KnowledgeBase,
    TerminologyRetriever,
    TrainExample,
    featurize,
    top_k,
    train,
)
from .metrics import (
    AnnotationSet,
    EmissionEvent,
    EmissionLog,
    FragmentAnnotation,
    average_lagging,
    commit_times,
    flal,
    kendall_tau_b,
    laal,
    latency_report,
    vip,
)

__version__ = "0.1.0"
