"""Merchant categories and the shared narrative lexicon.

The generator, the serializer and every model agree on these tables, so the
surface strings live in exactly one place.
"""
from __future__ import annotations

from enum import Enum


class Category(str, Enum):
    GROCERY = "Grocery"
    CLOTHING = "Clothing"
    GAS_STATIONS = "GasStations"
    OTHER = "Other"

    @property
    def index(self) -> int:
        return CATEGORIES.index(self)

    @property
    def text(self) -> str:
        """Surface form used inside narratives ("Gas stations")."""
        return CATEGORY_TEXT[self]

    @property
    def sentence(self) -> str:
        """Instruction-output sentence ("Gas stations.")."""
        return CATEGORY_TEXT[self] + "."

    @classmethod
    def from_index(cls, i: int) -> "Category":
        return CATEGORIES[i]


# Vector order used by every probability vector, confusion matrix and logit.
CATEGORIES: tuple[Category, ...] = (
    Category.GROCERY,
    Category.CLOTHING,
    Category.GAS_STATIONS,
    Category.OTHER,
)
N_CLASSES = len(CATEGORIES)
KEPT_CATEGORIES = frozenset({"Grocery", "Clothing", "GasStations"})

CATEGORY_TEXT = {
    Category.GROCERY: "Grocery",
    Category.CLOTHING: "Clothing",
    Category.GAS_STATIONS: "Gas stations",
    Category.OTHER: "Other",
}
LABEL_SENTENCES = tuple(c.sentence for c in CATEGORIES)

# Column headers for class-wise report tables.
CATEGORY_HEADERS = {
    Category.GROCERY: "Grocery",
    Category.CLOTHING: "Clothing",
    Category.GAS_STATIONS: "Gas Stations",
    Category.OTHER: "Other",
}

# Raw merchant categories that consolidate into Other. Synthetic stand-ins.
OTHER_RAW_CATEGORIES = (
    "Restaurants", "Insurance", "Pharmacy", "Electronics", "Travel",
    "Utilities", "Entertainment", "Home Improvement", "Books", "Telecom",
)

# Demographic surface strings. All values are fabricated for the synthetic banks.
GENDERS = ("male", "female")
MARITAL_STATUSES = ("married", "single", "divorced", "widowed")
EDUCATIONS = ("primary school", "secondary school", "high school", "college", "university")
EDUCATION_BUCKET = {
    "primary school": "school",
    "secondary school": "school",
    "high school": "school",
    "college": "higher",
    "university": "higher",
}
EDUCATION_BUCKETS = ("school", "higher")
JOBS = (
    "private employee", "public employee", "teacher", "nurse", "shop owner",
    "driver", "technician", "farmer", "sales clerk", "manager",
)
INCOME_GROUPS = ("low", "middle", "high")


def parse_category(name: str) -> Category:
    """Canonical category from its enum value or narrative text."""
    for c in CATEGORIES:
        if name == c.value or name == c.text:
            return c
    raise ValueError(f"not one of the four merchant categories: {name!r}")
