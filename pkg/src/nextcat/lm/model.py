"""Tiny decoder-only transformer with optional low-rank weight updates.

Pre-norm blocks: ``x + attn(ln1(x))`` then ``x + mlp(ln2(x))``. Output logits
reuse the token embedding matrix unless ``tie_embeddings`` is off. Dense
weights are stored (out, in).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .. import autodiff as ad
from ..autodiff import checkpoint, init
from ..autodiff.nn import Module, linear
from .tokenizer import PAD_ID

NEG_INF = -1e9
EMBED_STD = 0.1


def sinusoid(n: int, d: int) -> np.ndarray:
    """Fixed sine/cosine table; the starting point of the learned position embedding.

    Distinct positions are separable from step one, which lets attention
    learn fixed-offset lookups far faster than from a random start.
    """
    ang = np.arange(n)[:, None] / 10000.0 ** (np.arange(0, d, 2)[None, :] / d)
    table = np.zeros((n, d))
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang[:, :d // 2])
    return table


@dataclass(frozen=True)
class LmConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 256
    tie_embeddings: bool = True

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")


def attention_names(n_layers: int) -> list[str]:
    return [f"blocks.{i}.attn.{w}" for i in range(n_layers) for w in ("q", "k", "v", "o")]


def mlp_names(n_layers: int) -> list[str]:
    return [f"blocks.{i}.mlp.{w}" for i in range(n_layers) for w in ("in", "out")]


class BaseLm(Module):
    def __init__(self, config: LmConfig, seed: int = 0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        d, V = config.d_model, config.vocab_size
        p = self.params
        p["tok_emb"] = init.normal(rng, (V, d), EMBED_STD)
        p["pos_emb"] = ad.Tensor(EMBED_STD * sinusoid(config.max_len, d), requires_grad=True)
        for i in range(config.n_layers):
            b = f"blocks.{i}"
            p[f"{b}.ln1.g"], p[f"{b}.ln1.b"] = init.ones(d), init.zeros(d)
            for w in ("q", "k", "v", "o"):
                p[f"{b}.attn.{w}"] = init.xavier_uniform(rng, (d, d))
                p[f"{b}.attn.{w}.b"] = init.zeros(d)
            p[f"{b}.ln2.g"], p[f"{b}.ln2.b"] = init.ones(d), init.zeros(d)
            p[f"{b}.mlp.in"] = init.xavier_uniform(rng, (config.d_ff, d))
            p[f"{b}.mlp.in.b"] = init.zeros(config.d_ff)
            p[f"{b}.mlp.out"] = init.xavier_uniform(rng, (d, config.d_ff))
            p[f"{b}.mlp.out.b"] = init.zeros(d)
        p["ln_f.g"], p["ln_f.b"] = init.ones(d), init.zeros(d)
        if not config.tie_embeddings:
            p["head"] = init.xavier_uniform(rng, (V, d))

    def freeze(self, frozen: bool = True) -> None:
        for t in self.params.values():
            t.requires_grad = not frozen
            t.grad = None

    def _dense(self, x, name: str, lora) -> ad.Tensor:
        y = linear(x, self.params[name], self.params[name + ".b"])
        if lora is not None and name in lora.targets:
            a, b = lora.params[name + ".lora_A"], lora.params[name + ".lora_B"]
            y = ad.add(y, ad.scale(linear(linear(x, a), b), lora.scaling))
        return y

    def forward(self, ids, positions=None, lora=None, start: int = 0) -> ad.Tensor:
        """Logits (B, T, V) for token ids (B, T) occupying positions ``start..start+T-1``.

        PAD tokens are never attended to. ``positions`` = (rows, cols) index
        arrays restricts the output head to those cells and returns (M, V).
        """
        cfg, p = self.config, self.params
        ids = np.asarray(ids, dtype=np.int64)
        B, T = ids.shape
        if start < 0 or start + T > cfg.max_len:
            raise ValueError(f"positions {start}..{start + T - 1} exceed max_len {cfg.max_len}")
        H, dh = cfg.n_heads, cfg.d_model // cfg.n_heads
        x = ad.add(ad.embedding_lookup(p["tok_emb"], ids), p["pos_emb"][start:start + T])
        mask = np.triu(np.full((T, T), NEG_INF), k=1)[None, None]
        if (ids == PAD_ID).any():
            # PAD keys are hidden, except from themselves, so no row is fully masked.
            pad = (ids == PAD_ID)[:, None, :] & ~np.eye(T, dtype=bool)[None]
            mask = mask + np.where(pad, NEG_INF, 0.0)[:, None]
        for i in range(cfg.n_layers):
            b = f"blocks.{i}"
            h = ad.layer_norm(x, p[f"{b}.ln1.g"], p[f"{b}.ln1.b"])

            def heads(name):
                t = ad.reshape(self._dense(h, f"{b}.attn.{name}", lora), (B, T, H, dh))
                return ad.transpose(t, (0, 2, 1, 3))

            q, k, v = heads("q"), heads("k"), heads("v")
            scores = ad.add(ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh)), mask)
            ctx = ad.matmul(ad.softmax(scores), v)
            ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (B, T, cfg.d_model))
            x = ad.add(x, self._dense(ctx, f"{b}.attn.o", lora))
            h = ad.layer_norm(x, p[f"{b}.ln2.g"], p[f"{b}.ln2.b"])
            h = ad.relu(self._dense(h, f"{b}.mlp.in", lora))
            x = ad.add(x, self._dense(h, f"{b}.mlp.out", lora))
        x = ad.layer_norm(x, p["ln_f.g"], p["ln_f.b"])
        if positions is not None:
            x = x[tuple(np.asarray(a, dtype=np.int64) for a in positions)]
        head = p["tok_emb"] if cfg.tie_embeddings else p["head"]
        return ad.matmul(x, ad.transpose(head))

    def save(self, path: str | Path, meta: dict | None = None) -> Path:
        return checkpoint.save(path, self.params, {"config": asdict(self.config), **(meta or {})})

    @classmethod
    def load(cls, path: str | Path) -> "BaseLm":
        tensors, meta = checkpoint.load(path)
        model = cls(LmConfig(**meta["config"]))
        model.load_state_dict(tensors)
        return model


class LoraAdapter(Module):
    """Rank-``r`` updates ``(alpha / r) * B @ A`` for the named base weights."""

    def __init__(self, shapes: Mapping[str, tuple[int, int]], r: int = 4, alpha: float = 8.0,
                 seed: int = 0):
        super().__init__()
        if r < 1:
            raise ValueError(f"LoRA rank must be >= 1, got {r}")
        self.r, self.alpha = int(r), float(alpha)
        self.targets = tuple(sorted(shapes))
        rng = np.random.default_rng(seed)
        for name in self.targets:
            d_out, d_in = shapes[name]
            bound = 1.0 / np.sqrt(d_in)
            self.params[name + ".lora_A"] = ad.Tensor(rng.uniform(-bound, bound, (r, d_in)), requires_grad=True)
            self.params[name + ".lora_B"] = init.zeros((d_out, r))

    @property
    def scaling(self) -> float:
        return self.alpha / self.r

    def delta(self, name: str) -> np.ndarray:
        return self.scaling * self.params[name + ".lora_B"].data @ self.params[name + ".lora_A"].data

    def save(self, path: str | Path, meta: dict | None = None) -> Path:
        return checkpoint.save(path, self.params, {"r": self.r, "alpha": self.alpha,
                                                   "targets": list(self.targets), **(meta or {})})

    @classmethod
    def load(cls, path: str | Path) -> "LoraAdapter":
        tensors, meta = checkpoint.load(path)
        shapes = {t: (tensors[t + ".lora_B"].shape[0], tensors[t + ".lora_A"].shape[1]) for t in meta["targets"]}
        adapter = cls(shapes, meta["r"], meta["alpha"])
        adapter.load_state_dict(tensors)
        return adapter


class LoraLm:
    """A frozen base plus an adapter; the base is shared, never copied."""

    def __init__(self, base: BaseLm, adapter: LoraAdapter):
        self.base = base
        self.adapter = adapter

    @property
    def config(self) -> LmConfig:
        return self.base.config

    def forward(self, ids, positions=None, start: int = 0) -> ad.Tensor:
        return self.base.forward(ids, positions, lora=self.adapter, start=start)

    def trainable(self) -> list[ad.Tensor]:
        return self.adapter.trainable()


# Output projections only: the update is a linear remap of what attention has
# already retrieved, so it cannot switch the retrieval itself off.
DEFAULT_TARGETS = ("attn.o",)


def resolve_targets(base: BaseLm, targets) -> list[str]:
    """Expand targets to full weight names.

    Accepts full names (``blocks.0.attn.q``), per-block suffixes applied to
    every block (``attn.v``, ``mlp.in``) and the groups ``attention``/``mlp``.
    """
    n = base.config.n_layers
    known = attention_names(n) + mlp_names(n)
    out: list[str] = []
    for t in ([targets] if isinstance(targets, str) else targets):
        if t == "attention":
            out += attention_names(n)
        elif t == "mlp":
            out += mlp_names(n)
        elif t in known:
            out.append(t)
        elif any(k.endswith("." + t) for k in known):
            out += [k for k in known if k.endswith("." + t)]
        else:
            raise KeyError(f"unknown LoRA target {t!r}")
    if not out:
        raise ValueError("no LoRA targets given")
    return sorted(set(out))


def attach_lora(base: BaseLm, targets=DEFAULT_TARGETS, r: int = 4, alpha: float = 8.0,
                seed: int = 0) -> LoraLm:
    names = resolve_targets(base, targets)
    adapter = LoraAdapter({n: base.params[n].shape for n in names}, r, alpha, seed)
    base.freeze()
    return LoraLm(base, adapter)


def merge(base: BaseLm, adapter: LoraAdapter) -> BaseLm:
    """A new base whose weights include the adapter's updates."""
    merged = BaseLm(base.config)
    state = base.state_dict()
    for name in adapter.targets:
        state[name] = state[name] + adapter.delta(name)
    merged.load_state_dict(state)
    return merged
