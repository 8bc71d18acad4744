"""LoRA training over the exported line format.

``train`` validates the files, builds or loads the base model, injects the
adapters, runs the optimizer, and saves everything needed to generate
later: the LoRA weights, the adapter config, the metrics, and (for the
self-contained tiny base) the base weights and tokenizer alongside.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .data import Example, read_examples
from .lora import (
    DEFAULT_TARGET_SUFFIXES,
    inject_lora,
    load_lora_state_dict,
    lora_parameters,
    lora_state_dict,
    trainable_fraction,
)
from .model import (
    TINY_BASE_ID,
    load_base,
    load_saved_base,
    save_base,
    separator_token_id,
)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainSpec:
    train_file: Path
    validation_file: Path | None = None
    output_dir: Path = Path("adapter_out")
    base_model: str = TINY_BASE_ID
    rank: int = 8
    alpha: float = 32.0
    learning_rate: float = 1e-2
    epochs: int = 1
    batch_size: int = 8
    max_input_tokens: int = 256
    max_output_tokens: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        self.train_file = Path(self.train_file)
        self.validation_file = Path(self.validation_file) if self.validation_file else None
        self.output_dir = Path(self.output_dir)


@dataclass
class TrainedAdapter:
    adapter_dir: Path
    base_model_id: str
    rank: int
    alpha: float
    trainable_fraction: float
    metrics: dict = field(default_factory=dict)

    def save_metadata(self) -> None:
        config = {
            "base_model": self.base_model_id,
            "rank": self.rank,
            "alpha": self.alpha,
            "target_suffixes": list(DEFAULT_TARGET_SUFFIXES),
            "trainable_fraction": self.trainable_fraction,
        }
        (self.adapter_dir / "adapter_config.json").write_text(
            json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (self.adapter_dir / "metrics.json").write_text(
            json.dumps(self.metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, adapter_dir: str | Path) -> "TrainedAdapter":
        adapter_dir = Path(adapter_dir)
        config = json.loads((adapter_dir / "adapter_config.json").read_text())
        metrics = json.loads((adapter_dir / "metrics.json").read_text())
        return cls(
            adapter_dir=adapter_dir,
            base_model_id=config["base_model"],
            rank=int(config["rank"]),
            alpha=float(config["alpha"]),
            trainable_fraction=float(config["trainable_fraction"]),
            metrics=metrics,
        )

    def load_model(self):
        """Rebuild the adapted model against the declared base."""
        if self.base_model_id == TINY_BASE_ID:
            model, tokenizer = load_saved_base(self.adapter_dir / "base")
        else:
            model, tokenizer = load_base(self.base_model_id, train_texts=[])
        inject_lora(model, rank=self.rank, alpha=self.alpha)
        state = torch.load(self.adapter_dir / "lora_state.pt", weights_only=True)
        load_lora_state_dict(model, state)
        model.eval()
        return model, tokenizer


def _batches(examples: list[Example], batch_size: int):
    for start in range(0, len(examples), batch_size):
        yield examples[start : start + batch_size]


def _encode(batch, tokenizer, spec: TrainSpec, device):
    enc = tokenizer([e.input_text for e in batch], return_tensors="pt",
                    padding=True, truncation=True, max_length=spec.max_input_tokens)
    out = tokenizer([e.output_text for e in batch], return_tensors="pt",
                    padding=True, truncation=True, max_length=spec.max_output_tokens)
    labels = out["input_ids"].clone()
    labels[labels == tokenizer.pad_token_id] = -100
    return (enc["input_ids"].to(device), enc["attention_mask"].to(device),
            labels.to(device))


@torch.no_grad()
def _dataset_loss(model, tokenizer, examples, spec: TrainSpec, device) -> float:
    model.eval()
    total, count = 0.0, 0
    for batch in _batches(examples, spec.batch_size):
        ids, mask, labels = _encode(batch, tokenizer, spec, device)
        loss = model(input_ids=ids, attention_mask=mask, labels=labels).loss
        total += float(loss.detach()) * len(batch)
        count += len(batch)
    return total / count


def train(spec: TrainSpec) -> TrainedAdapter:
    """Fine-tune LoRA adapters on the exported dataset and save them."""
    examples = read_examples(spec.train_file)
    val_examples = read_examples(spec.validation_file) if spec.validation_file else []

    device = torch.device("cpu")
    train_texts = [e.input_text for e in examples] + [e.output_text for e in examples]
    model, tokenizer = load_base(spec.base_model, train_texts, seed=spec.seed)
    separator_token_id(tokenizer)  # wire-format invariant: single id
    model.to(device)

    spec.output_dir.mkdir(parents=True, exist_ok=True)
    if spec.base_model == TINY_BASE_ID:
        # the tiny base is generated, not downloadable: bundle it (pre-LoRA)
        save_base(model, tokenizer, spec.output_dir / "base")

    torch.manual_seed(spec.seed)
    inject_lora(model, rank=spec.rank, alpha=spec.alpha)
    fraction = trainable_fraction(model)
    optimizer = torch.optim.AdamW(lora_parameters(model), lr=spec.learning_rate)

    initial_loss = _dataset_loss(model, tokenizer, examples, spec, device)
    loss_curve: list[float] = []
    for _ in range(spec.epochs):
        model.train()
        for batch in _batches(examples, spec.batch_size):
            ids, mask, labels = _encode(batch, tokenizer, spec, device)
            loss = model(input_ids=ids, attention_mask=mask, labels=labels).loss
            value = float(loss.detach())
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite training loss {value}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_curve.append(value)
    final_loss = _dataset_loss(model, tokenizer, examples, spec, device)

    metrics = {
        "initial_train_loss": initial_loss,
        "final_train_loss": final_loss,
        "loss_curve": loss_curve,
        "epochs": spec.epochs,
        "examples": len(examples),
    }
    if val_examples:
        metrics["validation_loss"] = _dataset_loss(model, tokenizer, val_examples,
                                                   spec, device)

    torch.save(lora_state_dict(model), spec.output_dir / "lora_state.pt")

    adapter = TrainedAdapter(
        adapter_dir=spec.output_dir,
        base_model_id=spec.base_model,
        rank=spec.rank,
        alpha=spec.alpha,
        trainable_fraction=fraction,
        metrics=metrics,
    )
    adapter.save_metadata()
    return adapter
