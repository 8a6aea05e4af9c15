"""Human-style keyword search plus retrieval-augmented answering.

Keywords are extracted in two languages, turned into a ladder of OR queries
against a Boolean engine, the pooled hits are re-ranked by embedding cosine,
and the best five documents feed a structured (title, introduction, body) answer.
"""

from .config import PipelineConfig, load_config
from .documents import Corpus, Document, dedup_key, ingest, is_complete
from .engine import And, Not, Or, Term, build_index, evaluate_boolean, parse_query, search_topk, tokenize
from .evaluation import EvalQuery, evidence_coverage, qsr, run_and_sweep
from .generation import StructuredAnswer, assemble_prompt, parse_structured
from .keywords import Keyword, KeywordSet, extract_keywords, rank_and_truncate, split_compounds
from .pipeline import QueryRecord, collect_documents, run
from .query_builder import generate_and_variant, generate_or_ladder, serialize
from .rerank import HashingProvider, cosine, rerank_topk

__version__ = "0.1.0"
