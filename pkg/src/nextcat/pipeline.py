"""Pipeline stages: train on Bank A, test on Bank B.

Each stage reads its inputs from, and writes its outputs under, one output
directory, so stages can run one at a time from the command line or all in
sequence. A stage whose inputs are missing names the command that makes them.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from . import baseline as bl
from . import evaluation as ev
from . import instructions as ins
from . import preprocess as pp
from . import seqmodels as sm
from . import synthgen as sg
from .autodiff import checkpoint
from .categories import LABEL_SENTENCES
from .config import RunConfig
from .data import Dataset, export_csv, import_csv
from .lm import train as lmt
from .lm.corpus import pretraining_items
from .lm.model import BaseLm, LmConfig, LoraAdapter, LoraLm, attach_lora
from .lm.tokenizer import Tokenizer

log = logging.getLogger(__name__)

TRAIN_BANK, TEST_BANK = "bank_a", "bank_b"
NAMES = {"baseline": bl.AveragingBaseline.name, "lstm": "LSTM", "cnn": "CNN",
         "raw": "Tiny LM (Raw Model)", "lm": "Tiny LM + LoRA"}


class MissingArtifactError(FileNotFoundError):
    def __init__(self, path: Path, command: str):
        super().__init__(f"missing {path}; run `{command}` first")
        self.path = path
        self.command = command


class ProtocolViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class Layout:
    root: Path

    def raw(self, bank: str) -> Path:
        return self.root / "data" / bank

    def clean(self, bank: str) -> Path:
        return self.root / "clean" / bank

    def corpus(self, bank: str, k: int) -> Path:
        return self.root / "instructions" / f"{bank}_k{k}.jsonl"

    @property
    def models(self) -> Path:
        return self.root / "models"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.json"


def _need(path: Path, command: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(path, command)
    return path


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- configs -------------------------------------------------------------------------

def generator_configs(cfg: RunConfig) -> tuple[sg.GeneratorConfig, sg.GeneratorConfig]:
    a = sg.default_bank_a(cfg.bank_a.n_customers, seed=cfg.seed, strength=cfg.bank_a.strength)
    a = replace(a, plant_incomplete=cfg.bank_a.plant_incomplete,
                plant_low_activity=cfg.bank_a.plant_low_activity)
    b = sg.default_bank_b(a, n_customers=cfg.bank_b.n_customers, epsilon=cfg.bank_b.epsilon)
    b = replace(b, plant_incomplete=cfg.bank_b.plant_incomplete,
                plant_low_activity=cfg.bank_b.plant_low_activity)
    return a, b


# -- data stages ---------------------------------------------------------------------

def gen_data(cfg: RunConfig, out: Path) -> dict:
    lay = Layout(out)
    summary = {}
    for gen in generator_configs(cfg):
        ds = sg.generate(gen)
        export_csv(ds, lay.raw(gen.name))
        _write_json(lay.raw(gen.name) / "planted.json",
                    {k: sorted(v) for k, v in ds.planted.items()})
        summary[gen.name] = {"customers": len(ds.profiles), "transactions": len(ds.transactions)}
    return summary


def preprocess(cfg: RunConfig, out: Path) -> dict:
    lay = Layout(out)
    reports = {}
    for bank in (TRAIN_BANK, TEST_BANK):
        ds = import_csv(_need(lay.raw(bank), "gen-data"), name=bank)
        clean, report = pp.run_pipeline(ds, cfg.preprocess.min_tx, cfg.preprocess.min_distinct)
        export_csv(clean, lay.clean(bank))
        reports[bank] = json.loads(report.to_json())
    _write_json(out / "clean" / "preprocess_report.json", reports)
    return reports


def load_clean(out: Path, bank: str) -> Dataset:
    ds = import_csv(_need(Layout(out).clean(bank), "preprocess"), name=bank)
    # Income groups are derived data and are not stored in the CSV files.
    return pp.derive_income_group(ds)


def make_instructions(cfg: RunConfig, out: Path) -> dict:
    lay = Layout(out)
    counts = {}
    plan = [(TRAIN_BANK, cfg.windows.train_len)] + [(TEST_BANK, k) for k in sorted(set(cfg.windows.test_lengths))]
    cache = {}
    for bank, k in plan:
        if bank not in cache:
            cache[bank] = load_clean(out, bank)
        samples = ins.build_corpus(cache[bank], k)
        ins.export_jsonl(samples, lay.corpus(bank, k))
        counts[f"{bank}_k{k}"] = len(samples)
    return counts


# -- training ------------------------------------------------------------------------

def training_windows(cfg: RunConfig, out: Path, k: int | None = None) -> list[ins.Window]:
    """Bank A windows for training, after checking that no Bank B customer is among them."""
    train = load_clean(out, TRAIN_BANK)
    test_ids = {p.customer_id for p in load_clean(out, TEST_BANK).profiles}
    windows, _ = ins.make_windows(train, k or cfg.windows.train_len)
    guard_training(windows, test_ids)
    return windows


def guard_training(windows: Sequence[ins.Window], test_ids: set[int]) -> None:
    leaked = {w.customer_id for w in windows} & test_ids
    if leaked:
        raise ProtocolViolation(f"{len(leaked)} held-out customers in a training set, e.g. {min(leaked)}")


def train_baseline(cfg: RunConfig, out: Path) -> dict:
    windows = training_windows(cfg, out)
    tie = bl.tie_order_from_frequencies(w.transactions for w in windows)
    model = bl.fit({w.customer_id: w.transactions for w in windows}, cfg.baseline.period, tie)
    path = Layout(out).models / "baseline.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    return {"tie_order": [c.value for c in tie], "customers": len(windows)}


def _seq_model(cfg: RunConfig, kind: str):
    if kind == "lstm":
        return sm.LstmClassifier(cfg.lstm.hidden, seed=cfg.seed)
    return sm.CnnClassifier(tuple(cfg.cnn.filters), tuple(tuple(k) for k in cfg.cnn.kernels),
                            cfg.cnn.pool, seed=cfg.seed)


def train_sequence_model(cfg: RunConfig, out: Path, kind: str) -> dict:
    windows = training_windows(cfg, out)
    x = sm.encode_batch([w.categories for w in windows])
    y = np.array([w.label.index for w in windows])
    hp = cfg.lstm if kind == "lstm" else cfg.cnn
    model = _seq_model(cfg, kind)
    curve = sm.train(model, x, y, epochs=hp.epochs, lr=hp.lr, batch_size=hp.batch_size, seed=cfg.seed)
    model.save(Layout(out).models / f"{kind}.ckpt", {"kind": kind, "loss_curve": curve})
    return {"final_loss": curve[-1] if curve else None, "samples": len(y)}


def load_sequence_model(cfg: RunConfig, out: Path, kind: str):
    tensors, _ = checkpoint.load(_need(Layout(out).models / f"{kind}.ckpt", f"train {kind}"))
    model = _seq_model(cfg, kind)
    model.load_state_dict(tensors)
    return model


def pretrain_lm(cfg: RunConfig, out: Path) -> dict:
    lay = Layout(out)
    train = load_clean(out, TRAIN_BANK)
    test_ids = {p.customer_id for p in load_clean(out, TEST_BANK).profiles}
    for k in cfg.lm.pretrain_lengths:
        guard_training(ins.make_windows(train, k)[0], test_ids)
    items = pretraining_items(train, cfg.lm.pretrain_lengths, cfg.lm.filler)
    # Label sentences and the output prefix must never map to UNK.
    required = [ins.OUTPUT_PREFIX] + list(LABEL_SENTENCES)
    tok = Tokenizer.build([f"{t} {f}" for t, f in items], cfg.lm.min_freq, cfg.lm.max_len,
                          required=required, max_size=cfg.lm.vocab_size)
    lm_cfg = LmConfig(len(tok), cfg.lm.d_model, cfg.lm.n_layers, cfg.lm.n_heads, cfg.lm.d_ff, cfg.lm.max_len)
    model, curve, held = lmt.pretrain_base(tok, items, lm_cfg, epochs=cfg.lm.epochs, lr=cfg.lm.lr,
                                           batch_size=cfg.lm.batch_size, seed=cfg.seed)
    if not held < math.log(len(tok)):
        raise lmt.TrainingError(f"held-out loss {held:.3f} is not below ln V = {math.log(len(tok)):.3f}")
    tok.save(lay.models / "tokenizer.json")
    model.save(lay.models / "lm_base.ckpt")
    info = {"vocab_size": len(tok), "loss_curve": curve, "held_out_loss": held,
            "uniform_bound": math.log(len(tok)), "items": len(items)}
    _write_json(lay.models / "lm_pretrain.json", info)
    return info


def load_base(out: Path) -> tuple[BaseLm, Tokenizer]:
    lay = Layout(out)
    tok = Tokenizer.load(_need(lay.models / "tokenizer.json", "pretrain-lm"))
    return BaseLm.load(_need(lay.models / "lm_base.ckpt", "pretrain-lm")), tok


def finetune_lora(cfg: RunConfig, out: Path) -> dict:
    lay = Layout(out)
    base, tok = load_base(out)
    corpus = ins.import_jsonl(_need(lay.corpus(TRAIN_BANK, cfg.windows.train_len), "make-instructions"))
    test_ids = {p.customer_id for p in load_clean(out, TEST_BANK).profiles}
    if {s.customer_id for s in corpus} & test_ids:
        raise ProtocolViolation("held-out customers in the fine-tuning corpus")
    pairs = [lmt.make_pair(tok, s.instruction_input, s.instruction_output) for s in corpus]
    model = attach_lora(base, cfg.lora.targets, cfg.lora.r, cfg.lora.alpha, seed=cfg.seed)
    before = checkpoint.to_bytes(base.params)
    init_loss = lmt.mean_masked_loss(model, pairs)
    curve = lmt.finetune(model, pairs, epochs=cfg.lora.epochs, lr=cfg.lora.lr,
                         batch_size=cfg.lora.batch_size, seed=cfg.seed)
    if checkpoint.to_bytes(base.params) != before:
        raise ProtocolViolation("base weights changed during fine-tuning")
    model.adapter.save(lay.models / "lora_adapter.ckpt")
    info = {"initial_masked_loss": init_loss, "loss_curve": curve, "pairs": len(pairs),
            "trainable_parameters": model.adapter.n_parameters()}
    _write_json(lay.models / "lora_train.json", info)
    return info


# -- evaluation ----------------------------------------------------------------------

class LmPredictor:
    def __init__(self, name: str, model, tokenizer: Tokenizer, normalize: bool = True):
        self.name = name
        self.model = model
        self.tokenizer = tokenizer
        self.normalize = normalize

    def predict_windows(self, windows) -> list:
        texts = [ins.serialize(w.profile, w.transactions, w.label).instruction_input for w in windows]
        return [s.category for s in lmt.score_labels(self.model, self.tokenizer, texts, self.normalize)]


def build_entries(cfg: RunConfig, out: Path) -> list[ev.ModelEntry]:
    lay = Layout(out)
    lengths = tuple(cfg.windows.test_lengths)
    base_model = bl.FrequencyModel.from_json(_need(lay.models / "baseline.json", "train baseline").read_text())
    lstm = load_sequence_model(cfg, out, "lstm")
    cnn = load_sequence_model(cfg, out, "cnn")
    base, tok = load_base(out)
    adapter = LoraAdapter.load(_need(lay.models / "lora_adapter.ckpt", "finetune-lora"))
    base.freeze()
    norm = cfg.lora.normalize_scores
    return [
        ev.ModelEntry(LmPredictor(NAMES["raw"], base, tok, norm), (cfg.windows.train_len,)),
        ev.ModelEntry(bl.AveragingBaseline(base_model.tie_order, base_model.period), lengths),
        ev.ModelEntry(sm.SequenceModelAdapter(NAMES["cnn"], cnn), lengths),
        ev.ModelEntry(sm.SequenceModelAdapter(NAMES["lstm"], lstm), lengths),
        ev.ModelEntry(LmPredictor(NAMES["lm"], LoraLm(base, adapter), tok, norm), lengths),
    ]


def evaluate(cfg: RunConfig, out: Path) -> list[ev.MetricsReport]:
    entries = build_entries(cfg, out)
    reports = ev.run_protocol(entries, load_clean(out, TEST_BANK), cfg.windows.test_lengths)
    ev.render_report(reports, Layout(out).reports, formats=("json",))
    return reports


def report(cfg: RunConfig, out: Path) -> list[ev.MetricsReport]:
    reports = ev.load_reports(_need(Layout(out).reports / "report.json", "evaluate"))
    ev.render_report(reports, Layout(out).reports)
    return reports


def checks(cfg: RunConfig, reports) -> list[ev.OrderingCheck]:
    return ev.ordering_checks(reports, cfg.windows.train_len, names=NAMES | {"sequence_models": ("LSTM", "CNN")})


STAGES = {
    "gen-data": gen_data,
    "preprocess": preprocess,
    "make-instructions": make_instructions,
    "train baseline": train_baseline,
    "train lstm": lambda cfg, out: train_sequence_model(cfg, out, "lstm"),
    "train cnn": lambda cfg, out: train_sequence_model(cfg, out, "cnn"),
    "pretrain-lm": pretrain_lm,
    "finetune-lora": finetune_lora,
    "evaluate": evaluate,
    "report": report,
}


def run_all(cfg: RunConfig, out: Path) -> list[ev.MetricsReport]:
    result = None
    for name, stage in STAGES.items():
        log.info("stage %s", name)
        result = stage(cfg, out)
    return result


# -- manifest ------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: RunConfig, out: Path) -> Path:
    """Config digest, versions, and a content hash for every file under ``out``."""
    lay = Layout(out)
    files = {p.relative_to(out).as_posix(): _sha256(p)
             for p in sorted(out.rglob("*")) if p.is_file() and p != lay.manifest}
    return _write_json(lay.manifest, {
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "versions": {"nextcat": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "pyyaml": yaml.__version__},
        "files": files,
    })
