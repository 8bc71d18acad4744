"""Minimal LoRA: low-rank adapters injected into selected Linear layers.

The base weight is frozen; the adapter adds ``B @ A @ x`` scaled by
``alpha / rank``. ``B`` starts at zero, so an untrained adapter leaves the
base model's behaviour untouched.
"""

from __future__ import annotations

import math

import torch
from torch import nn

DEFAULT_TARGET_SUFFIXES = (".q", ".v")


class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: float):
        super().__init__()
        if rank < 1:
            raise ValueError("rank must be >= 1")
        self.base = base
        self.rank = rank
        self.alpha = alpha
        self.scaling = alpha / rank
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))
        self.base.weight.requires_grad_(False)
        if self.base.bias is not None:
            self.base.bias.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + (x @ self.lora_a.T @ self.lora_b.T) * self.scaling


def inject_lora(
    model: nn.Module,
    rank: int,
    alpha: float,
    target_suffixes: tuple[str, ...] = DEFAULT_TARGET_SUFFIXES,
) -> int:
    """Replace matching Linear layers in place; returns how many."""
    for param in model.parameters():
        param.requires_grad_(False)
    replaced = 0
    for name, module in list(model.named_modules()):
        for child_name, child in list(module.named_children()):
            full = f".{name}.{child_name}" if name else f".{child_name}"
            if isinstance(child, nn.Linear) and full.endswith(target_suffixes):
                setattr(module, child_name, LoRALinear(child, rank=rank, alpha=alpha))
                replaced += 1
    if replaced == 0:
        raise ValueError(f"no Linear layers matched suffixes {target_suffixes}")
    return replaced


def lora_parameters(model: nn.Module):
    return [p for p in model.parameters() if p.requires_grad]


def lora_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: tensor
        for name, tensor in model.state_dict().items()
        if "lora_a" in name or "lora_b" in name
    }


def load_lora_state_dict(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    missing = [k for k in state if k not in dict(model.named_parameters())]
    if missing:
        raise ValueError(f"adapter does not fit this model; unknown keys {missing[:3]}")
    model.load_state_dict(state, strict=False)


def trainable_fraction(model: nn.Module) -> float:
    total = sum(p.numel() for p in model.parameters())
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    return trainable / total if total else 0.0
