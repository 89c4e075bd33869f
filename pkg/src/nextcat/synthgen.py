"""Synthetic "Bank A" / "Bank B" transaction generator.

Each customer belongs to a demographic segment (income group x education
bucket by default). A segment owns a 4x4 first-order Markov chain over
merchant categories, so the best achievable next-category accuracy can be
computed in closed form (:func:`bayes_accuracy`).

Before sampling, every segment matrix is rebalanced with Sinkhorn scaling of
its joint ``diag(target) @ P`` so that the target marginals are its
stationary distribution. Chains started from the target marginals then have
the target marginals at every position. All demographic and amount defaults
are fabricated.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .categories import (
    CATEGORIES,
    EDUCATION_BUCKET,
    EDUCATION_BUCKETS,
    EDUCATIONS,
    GENDERS,
    INCOME_GROUPS,
    JOBS,
    MARITAL_STATUSES,
    N_CLASSES,
    OTHER_RAW_CATEGORIES,
    Category,
)
from .data import DEMOGRAPHIC_FIELDS, CENT, CustomerProfile, Dataset, Transaction

# Grocery, Clothing, GasStations, Other as reported for Bank A. The reported
# shares total 99.9%, so the default target is their normalized version.
REPORTED_MARGINALS = (0.313, 0.112, 0.119, 0.455)
TARGET_MARGINALS = tuple(x / sum(REPORTED_MARGINALS) for x in REPORTED_MARGINALS)

INCOME_RANGES = {"low": (15_000, 40_000), "middle": (40_000, 80_000), "high": (80_000, 200_000)}


class ConfigError(ValueError):
    """Invalid generator configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Segment:
    """One behavioral segment. ``None`` demographic constraints mean "any"."""

    name: str
    transitions: tuple[tuple[float, ...], ...]
    weight: float = 1.0
    income_group: str | None = None
    education_bucket: str | None = None
    initial: tuple[float, ...] | None = None


@dataclass(frozen=True)
class GeneratorConfig:
    name: str = "bank_a"
    n_customers: int = 2000
    start: date = date(2014, 7, 1)
    end: date = date(2015, 7, 31)
    segments: tuple[Segment, ...] = ()
    target_marginals: tuple[float, ...] = TARGET_MARGINALS
    # (log-mean, log-sigma) of the dollar amount, per category value.
    amount_params: dict = field(default_factory=lambda: {
        "Grocery": (3.5, 0.6), "Clothing": (4.0, 0.7),
        "GasStations": (3.7, 0.4), "Other": (3.9, 0.9),
    })
    tx_count_range: tuple[int, int] = (10, 60)
    missing_demographics_rate: float = 0.0
    plant_incomplete: int = 0
    plant_low_activity: int = 0
    raw_other_categories: tuple[str, ...] = OTHER_RAW_CATEGORIES
    calibrate: bool = True
    id_offset: int = 1_000_000
    seed: int = 42


def validate(config: GeneratorConfig) -> None:
    if config.n_customers < 0:
        raise ConfigError("n_customers", "must be >= 0")
    if config.end < config.start:
        raise ConfigError("date_window", f"empty window {config.start}..{config.end}")
    target = np.asarray(config.target_marginals, dtype=float)
    if target.shape != (N_CLASSES,) or (target < 0).any() or abs(target.sum() - 1.0) > 1e-9:
        raise ConfigError("target_marginals", "must be 4 non-negative values summing to 1")
    if not config.segments:
        raise ConfigError("segments", "at least one segment is required")
    for i, seg in enumerate(config.segments):
        where = f"segments[{i}]"
        P = np.asarray(seg.transitions, dtype=float)
        if P.shape != (N_CLASSES, N_CLASSES):
            raise ConfigError(f"{where}.transitions", f"expected 4x4, got {P.shape}")
        if (P < 0).any() or np.abs(P.sum(axis=1) - 1.0).max() > 1e-9:
            raise ConfigError(f"{where}.transitions", "rows must be non-negative and sum to 1")
        if seg.weight <= 0:
            raise ConfigError(f"{where}.weight", "must be positive")
        if seg.initial is not None:
            p0 = np.asarray(seg.initial, dtype=float)
            if p0.shape != (N_CLASSES,) or (p0 < 0).any() or abs(p0.sum() - 1.0) > 1e-9:
                raise ConfigError(f"{where}.initial", "must be 4 non-negative values summing to 1")
        if seg.income_group is not None and seg.income_group not in INCOME_GROUPS:
            raise ConfigError(f"{where}.income_group", f"unknown group {seg.income_group!r}")
        if seg.education_bucket is not None and seg.education_bucket not in EDUCATION_BUCKETS:
            raise ConfigError(f"{where}.education_bucket", f"unknown bucket {seg.education_bucket!r}")
    lo, hi = config.tx_count_range
    if lo < 1 or hi < lo:
        raise ConfigError("tx_count_range", f"invalid range {config.tx_count_range}")
    for c in CATEGORIES:
        if c.value not in config.amount_params:
            raise ConfigError("amount_params", f"missing entry for {c.value}")
        if config.amount_params[c.value][1] < 0:
            raise ConfigError("amount_params", f"negative sigma for {c.value}")
    if not 0.0 <= config.missing_demographics_rate <= 1.0:
        raise ConfigError("missing_demographics_rate", "must lie in [0, 1]")
    if config.plant_incomplete + config.plant_low_activity > config.n_customers:
        raise ConfigError("plant_incomplete", "more planted customers than customers")


def calibrate_transitions(P: np.ndarray, target: np.ndarray,
                          tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Closest-in-odds-ratio stochastic matrix whose stationary law is ``target``."""
    joint = target[:, None] * P
    for _ in range(max_iter):
        col = joint.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            joint = joint * np.where(col > 0, target / col, 0.0)[None, :]
            row = joint.sum(axis=1)
            joint = joint * np.where(row > 0, target / row, 0.0)[:, None]
        if np.abs(joint.sum(axis=0) - target).max() < tol:
            break
    else:
        raise ConfigError("segments", "transition pattern cannot reach the target marginals")
    out = np.zeros_like(P)
    nz = target > 0
    out[nz] = joint[nz] / target[nz, None]
    # Categories with zero target mass keep their original rows.
    out[~nz] = P[~nz]
    return out / out.sum(axis=1, keepdims=True)


def effective_transitions(config: GeneratorConfig) -> list[np.ndarray]:
    target = np.asarray(config.target_marginals, dtype=float)
    mats = []
    for seg in config.segments:
        P = np.asarray(seg.transitions, dtype=float)
        mats.append(calibrate_transitions(P, target) if config.calibrate else P)
    return mats


def _initial(config: GeneratorConfig, seg: Segment) -> np.ndarray:
    src = seg.initial if seg.initial is not None else config.target_marginals
    return np.asarray(src, dtype=float)


def segment_weights(config: GeneratorConfig) -> np.ndarray:
    w = np.array([s.weight for s in config.segments], dtype=float)
    return w / w.sum()


def bayes_accuracy(config: GeneratorConfig, seq_len: int) -> float:
    """Best achievable accuracy for predicting category ``seq_len + 1``.

    The optimal predictor knows the customer's segment and the last observed
    category; it picks the largest entry of that transition row.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be positive")
    validate(config)
    total = 0.0
    for w, seg, P in zip(segment_weights(config), config.segments, effective_transitions(config)):
        dist = _initial(config, seg) @ np.linalg.matrix_power(P, seq_len - 1)
        total += w * float(dist @ P.max(axis=1))
    return total


def _sample_profile(rng: np.random.Generator, customer_id: int, seg: Segment) -> CustomerProfile:
    group = seg.income_group or INCOME_GROUPS[rng.integers(len(INCOME_GROUPS))]
    if seg.education_bucket is None:
        choices = EDUCATIONS
    else:
        choices = tuple(e for e in EDUCATIONS if EDUCATION_BUCKET[e] == seg.education_bucket)
    lo, hi = INCOME_RANGES[group]
    return CustomerProfile(
        customer_id=customer_id,
        age=int(rng.integers(18, 91)),
        gender=GENDERS[rng.integers(len(GENDERS))],
        marital_status=MARITAL_STATUSES[rng.integers(len(MARITAL_STATUSES))],
        education=choices[rng.integers(len(choices))],
        job=JOBS[rng.integers(len(JOBS))],
        income=int(rng.integers(lo, hi)),
    )


def _sample_chain(rng: np.random.Generator, p0: np.ndarray, P: np.ndarray, n: int) -> list[int]:
    cum = np.cumsum(P, axis=1)
    u = rng.random(n)
    state = min(int(np.searchsorted(np.cumsum(p0), u[0], side="right")), N_CLASSES - 1)
    states = [state]
    for x in u[1:]:
        state = min(int(np.searchsorted(cum[state], x, side="right")), N_CLASSES - 1)
        states.append(state)
    return states


def _amount(rng: np.random.Generator, mu: float, sigma: float) -> Decimal:
    value = Decimal(repr(float(rng.lognormal(mu, sigma)))).quantize(CENT, rounding=ROUND_HALF_UP)
    return max(value, CENT)


def _customer(config: GeneratorConfig, index: int, mats: list[np.ndarray], weights: np.ndarray,
              plant: str | None):
    # Counter-derived stream: customer i's draws do not depend on other customers.
    rng = np.random.default_rng([config.seed, index])
    k = int(rng.choice(len(config.segments), p=weights))
    seg = config.segments[k]
    cid = config.id_offset + index
    profile = _sample_profile(rng, cid, seg)

    lo, hi = config.tx_count_range
    n = int(rng.integers(lo, hi + 1))
    if plant == "few":
        n = int(rng.integers(max(1, lo // 2), lo)) if lo > 1 else 1
    states = _sample_chain(rng, _initial(config, seg), mats[k], n)
    if plant == "single":
        n = max(n, lo)
        states = [Category.GAS_STATIONS.index] * n

    span = (config.end - config.start).days
    offsets = np.sort(rng.integers(0, span + 1, size=n))
    txs = []
    for s, off in zip(states, offsets):
        cat = CATEGORIES[s]
        label = cat.value
        if cat is Category.OTHER and config.raw_other_categories:
            label = config.raw_other_categories[rng.integers(len(config.raw_other_categories))]
        mu, sigma = config.amount_params[cat.value]
        txs.append(Transaction(cid, config.start + timedelta(days=int(off)), _amount(rng, mu, sigma), label))

    drop = plant == "incomplete" or (
        config.missing_demographics_rate > 0 and rng.random() < config.missing_demographics_rate)
    if drop:
        missing = DEMOGRAPHIC_FIELDS[rng.integers(len(DEMOGRAPHIC_FIELDS))]
        profile = replace(profile, **{missing: None})
    return profile, txs, seg.name


def generate(config: GeneratorConfig) -> Dataset:
    """Sample a dataset; identical configs give identical datasets."""
    validate(config)
    mats = effective_transitions(config)
    weights = segment_weights(config)

    plan: dict[int, str] = {}
    if config.plant_incomplete or config.plant_low_activity:
        picker = np.random.default_rng([config.seed, 2**32 - 1])
        chosen = picker.choice(config.n_customers,
                               size=config.plant_incomplete + config.plant_low_activity, replace=False)
        for j, idx in enumerate(chosen.tolist()):
            if j < config.plant_incomplete:
                plan[idx] = "incomplete"
            else:
                plan[idx] = "few" if (j - config.plant_incomplete) % 2 == 0 else "single"

    profiles, transactions, segments = [], [], {}
    for i in range(config.n_customers):
        profile, txs, seg_name = _customer(config, i, mats, weights, plan.get(i))
        profiles.append(profile)
        transactions.extend(txs)
        segments[profile.customer_id] = seg_name

    planted = {
        "incomplete": frozenset(config.id_offset + i for i, p in plan.items() if p == "incomplete"),
        "low_activity": frozenset(config.id_offset + i for i, p in plan.items() if p in ("few", "single")),
    }
    return Dataset(config.name, tuple(profiles), tuple(transactions), planted=planted, segments=segments)


# --- stock configurations -------------------------------------------------

G, C, S, O = (c.index for c in CATEGORIES)

# Preferred successor of each category (Grocery, Clothing, GasStations, Other)
# per (income group, education bucket). Fabricated behaviour patterns.
_SUCCESSORS = {
    ("low", "school"): (G, O, G, S),
    ("low", "higher"): (O, G, S, G),
    ("middle", "school"): (S, C, O, G),
    ("middle", "higher"): (C, O, G, O),
    ("high", "school"): (O, S, C, G),
    ("high", "higher"): (C, C, O, C),
}


def planted_matrix(successors: tuple[int, ...], strength: float,
                   background: tuple[float, ...] = TARGET_MARGINALS) -> tuple[tuple[float, ...], ...]:
    rows = []
    for i in range(N_CLASSES):
        row = [(1.0 - strength) * b for b in background]
        row[successors[i]] += strength
        rows.append(tuple(row))
    return tuple(rows)


def default_segments(strength: float = 0.6) -> tuple[Segment, ...]:
    share = {"school": 0.6, "higher": 0.4}
    return tuple(
        Segment(name=f"{g}/{b}", transitions=planted_matrix(_SUCCESSORS[(g, b)], strength),
                weight=share[b] / 3.0, income_group=g, education_bucket=b)
        for g in INCOME_GROUPS for b in EDUCATION_BUCKETS
    )


def default_bank_a(n_customers: int = 2000, seed: int = 42, strength: float = 0.6) -> GeneratorConfig:
    return GeneratorConfig(name="bank_a", n_customers=n_customers,
                           segments=default_segments(strength), seed=seed)


def perturb(config: GeneratorConfig, epsilon: float = 0.05, *, seed: int | None = None,
            **overrides) -> GeneratorConfig:
    """Copy of ``config`` whose transition rows get ``epsilon``-scale noise, re-normalized."""
    rng = np.random.default_rng([config.seed if seed is None else seed, 0xB])
    segments = []
    for seg in config.segments:
        P = np.asarray(seg.transitions, dtype=float) + epsilon * rng.random((N_CLASSES, N_CLASSES))
        P /= P.sum(axis=1, keepdims=True)
        segments.append(replace(seg, transitions=tuple(map(tuple, P.tolist()))))
    return replace(config, segments=tuple(segments), **overrides)


def default_bank_b(bank_a: GeneratorConfig | None = None, n_customers: int = 500,
                   epsilon: float = 0.05, seed: int | None = None) -> GeneratorConfig:
    bank_a = bank_a or default_bank_a()
    seed = bank_a.seed + 1 if seed is None else seed
    return perturb(bank_a, epsilon, seed=seed, name="bank_b", n_customers=n_customers,
                   start=date(2013, 1, 1), end=date(2013, 3, 31), id_offset=5_000_000)


def strong_signal_config(n_customers: int = 2000, seed: int = 11, dominant: float = 0.8) -> GeneratorConfig:
    """Two segments, sticky vs. cyclic, each with a dominant transition >= 0.7."""
    rest = (1.0 - dominant) / (N_CLASSES - 1)
    sticky = tuple(tuple(dominant if j == i else rest for j in range(N_CLASSES)) for i in range(N_CLASSES))
    cyclic = tuple(tuple(dominant if j == (i + 1) % N_CLASSES else rest for j in range(N_CLASSES))
                   for i in range(N_CLASSES))
    return GeneratorConfig(
        name="strong", n_customers=n_customers, seed=seed,
        segments=(Segment("sticky", sticky, 0.5), Segment("cyclic", cyclic, 0.5)),
        target_marginals=(0.25, 0.25, 0.25, 0.25),
    )
