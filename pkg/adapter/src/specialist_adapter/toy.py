"""A deterministic toy text classifier: hashed character trigrams through a
seeded random linear head. No training; useful for exercising the export
contract without GPUs or checkpoints."""

from __future__ import annotations

import hashlib

import torch

FEATURE_DIM = 256


def _trigram_features(texts: list[str]) -> torch.Tensor:
    out = torch.zeros((len(texts), FEATURE_DIM), dtype=torch.float32)
    for row, text in enumerate(texts):
        padded = f"  {text.lower()}  "
        for i in range(len(padded) - 2):
            trigram = padded[i:i + 3].encode("utf-8")
            bucket = int.from_bytes(hashlib.blake2b(trigram, digest_size=4).digest(), "big")
            out[row, bucket % FEATURE_DIM] += 1.0
        norm = out[row].norm()
        if norm > 0:
            out[row] /= norm
    return out


class ToyTextClassifier(torch.nn.Module):
    def __init__(self, num_classes: int, seed: int = 0):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.linear = torch.nn.Linear(FEATURE_DIM, num_classes)
        with torch.no_grad():
            self.linear.weight.copy_(
                torch.randn((num_classes, FEATURE_DIM), generator=generator) * 0.8)
            self.linear.bias.copy_(torch.randn(num_classes, generator=generator) * 0.1)
        self.eval()

    @torch.no_grad()
    def forward(self, texts: list[str]) -> torch.Tensor:
        return self.linear(_trigram_features(texts))


def parse_toy_spec(model: str) -> int | None:
    """``toy`` or ``toy:<seed>`` -> seed; anything else -> None."""
    if model == "toy":
        return 0
    if model.startswith("toy:"):
        return int(model.split(":", 1)[1])
    return None
