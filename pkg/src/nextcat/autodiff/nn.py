"""Parameter containers shared by the neural models."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import checkpoint
from .tensor import Tensor, add, matmul, transpose


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` stored (out, in)."""
    y = matmul(x, transpose(weight))
    return y if bias is None else add(y, bias)


class Module:
    """Holds named parameters in ``self.params`` (insertion-ordered)."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def trainable(self) -> list[Tensor]:
        return [p for p in self.params.values() if p.requires_grad]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise KeyError(f"checkpoint mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, arr in state.items():
            if arr.shape != self.params[k].shape:
                raise ValueError(f"{k}: checkpoint shape {arr.shape} != {self.params[k].shape}")
            self.params[k].data[...] = arr

    def save(self, path: str | Path, meta: dict | None = None) -> Path:
        return checkpoint.save(path, self.params, meta)

    def n_parameters(self, trainable_only: bool = False) -> int:
        ps = self.trainable() if trainable_only else self.parameters()
        return int(sum(p.size for p in ps))
