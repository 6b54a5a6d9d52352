"""Low-rank adapter fine-tuning on instruction records, plus a serving shim.

Consumes the extraction toolkit's line-delimited {instruction, input, output}
dataset file unchanged and exposes trained checkpoints behind the same
chat-completions wire contract the toolkit's gateway speaks.
"""

from .adapters import (
    AdapterConfig,
    LoraLinear,
    attach_adapters,
    merge_check,
    trainable_parameter_counts,
)
from .data import load_records
from .model import ModelConfig, TinyCausalLM, Vocab, build_model
from .serve import AdapterServer, CheckpointRunner
from .train import TrainConfig, TrainResult, load_checkpoint, train

__version__ = "0.1.0"
