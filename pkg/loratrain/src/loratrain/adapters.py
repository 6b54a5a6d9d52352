"""Low-rank adapters over frozen linear layers.

The frozen weight ``W0`` (d_out x d_in) is augmented by a rank-``r`` update
``delta_W = B @ A`` with ``B: d_out x r`` and ``A: r x d_in``, scaled by
``alpha / r``. ``B`` starts at zero, so an adapted model computes exactly
what the frozen model computed until training moves ``B``. Trainable
parameters per adapted matrix: ``r * (d_out + d_in)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F


class LoraLinear(nn.Module):
    def __init__(self, base: nn.Linear, r: int, alpha: float):
        super().__init__()
        d_out, d_in = base.weight.shape
        if not 0 < r < min(d_out, d_in):
            raise ValueError(f"rank must satisfy 0 < r < min({d_out}, {d_in}), got {r}")
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.r = r
        self.alpha = alpha
        self.lora_a = nn.Parameter(torch.empty(r, d_in))
        self.lora_b = nn.Parameter(torch.zeros(d_out, r))
        nn.init.normal_(self.lora_a, std=0.02)

    @property
    def scaling(self) -> float:
        return self.alpha / self.r

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scaling * F.linear(F.linear(x, self.lora_a), self.lora_b)

    def delta_weight(self) -> torch.Tensor:
        return self.scaling * (self.lora_b @ self.lora_a)

    def merged_weight(self) -> torch.Tensor:
        return self.base.weight + self.delta_weight()


@dataclass(frozen=True)
class AdapterConfig:
    r: int = 8
    alpha: float = 16.0
    target_modules: tuple[str, ...] = ("q_proj", "v_proj")


def attach_adapters(model: nn.Module, config: AdapterConfig) -> dict[str, LoraLinear]:
    """Freeze the model and wrap every targeted linear layer in place.

    Targets are matched by the final component of the module name
    (``"q_proj"`` matches ``blocks.0.attn.q_proj``). Returns the adapters
    keyed by full module name; a target that matches nothing is an error.
    """
    for p in model.parameters():
        p.requires_grad_(False)

    adapters: dict[str, LoraLinear] = {}
    matched: set[str] = set()
    for name, module in list(model.named_modules()):
        leaf = name.rsplit(".", 1)[-1]
        if leaf in config.target_modules and isinstance(module, nn.Linear):
            parent = model.get_submodule(name.rsplit(".", 1)[0]) if "." in name else model
            wrapped = LoraLinear(module, config.r, config.alpha)
            setattr(parent, leaf, wrapped)
            adapters[name] = wrapped
            matched.add(leaf)
    missing = set(config.target_modules) - matched
    if missing:
        raise ValueError(f"target modules not found in model: {sorted(missing)}")
    return adapters


def trainable_parameter_counts(model: nn.Module) -> tuple[int, int]:
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    total = sum(p.numel() for p in model.parameters())
    return trainable, total


@torch.no_grad()
def merge_check(adapter: LoraLinear, *, n_probes: int = 100, seed: int = 0) -> dict:
    """Compare the merged-weight path against the factored low-rank path.

    For random probes x, ``x @ (W0 + s B A)^T`` must agree with
    ``x @ W0^T + s ((x A^T) B^T)`` to numerical tolerance, and the update's
    rank can never exceed r.
    """
    d_out, d_in = adapter.base.weight.shape
    generator = torch.Generator().manual_seed(seed)
    x = torch.randn(n_probes, d_in, generator=generator)
    merged = F.linear(x, adapter.merged_weight(), adapter.base.bias)
    factored = adapter.base(x) + adapter.scaling * F.linear(
        F.linear(x, adapter.lora_a), adapter.lora_b
    )
    max_abs_deviation = float((merged - factored).abs().max())
    delta_rank = int(torch.linalg.matrix_rank(adapter.delta_weight()))
    return {
        "max_abs_deviation": max_abs_deviation,
        "delta_rank": delta_rank,
        "rank_bound": adapter.r,
        "rank_bound_holds": delta_rank <= adapter.r,
        "shapes": {"w0": [d_out, d_in], "a": list(adapter.lora_a.shape), "b": list(adapter.lora_b.shape)},
    }
