"""ragatlas: label, synthesize, critique, and benchmark RAG Q&A datasets."""

from .records import (
    ContextRecord,
    CorpusError,
    CritiqueResult,
    DatasetManifest,
    LabelClass,
    QARecord,
    ingest_contexts,
    ingest_qas,
    label_composition,
    write_contexts,
    write_qas,
)
from .adapters import AdaptReport, adapt_public_dataset, sample_subset
from .gateway import (
    Completion,
    EmbeddingVector,
    GatewayConfig,
    GatewayError,
    HttpBackend,
    LlmGateway,
    ScriptedBackend,
    extract_structured_payload,
    stub_responder,
)
from .labelling import (
    AgreementReport,
    ConfusionMatrix,
    DISCARDED,
    LabelJudgement,
    agreement_report,
    classify_pair,
    confusion_matrix,
    fleiss_kappa,
    label_dataset,
    majority_vote,
    render_label_prompt,
)
from .generation import (
    GenerationError,
    StatementSet,
    Theme,
    build_statement_set,
    export_finetune_dataset,
    generate_labeled_qa,
    generate_simple_qa,
    parse_bullets,
)
from .critique import (
    Criterion,
    CritiqueError,
    FilterPolicy,
    critique,
    critique_suite,
    filter_records,
    rescale,
)
from .retrieval import (
    BenchmarkRow,
    DenseIndex,
    HybridParams,
    LexicalIndex,
    benchmark_by_label,
    best_strategy,
    bm25_scores,
    build_dense_index,
    build_lexical_index,
    hybrid_search,
    recall_at_n,
    rerank_stage,
    scan_weights,
    tokenize,
)

__version__ = "0.1.0"
