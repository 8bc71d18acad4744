"""LoRA fine-tuning and batch generation for ragatlas-format corpora."""

from .data import ANSWER_SEPARATOR, DataFormatError, QUESTION_TYPE_FLAGS, read_examples
from .lora import LoRALinear, inject_lora, trainable_fraction
from .model import PAPER_PRESET, TINY_BASE_ID, build_tokenizer, separator_token_id
from .training import DivergenceError, TrainedAdapter, TrainSpec, train
from .generate import generate_records, parse_generation, read_context_lines, write_records

__version__ = "0.1.0"
