import random
import string

import pytest

from tabrag.tables import Table

# Substrings that the flat format cannot carry inside a cell.
FORBIDDEN = ("[TITLE]", "[HEADER]", "[ROW", "｜")

_ALPHABET = string.ascii_letters + string.digits + " |.,-_()[]{}:;'\"/\né中"


def random_text(rng: random.Random, max_len: int = 12) -> str:
    while True:
        s = "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(0, max_len)))
        if not any(tok in s for tok in FORBIDDEN):
            return s


def random_table(rng: random.Random, table_id: str = "t") -> Table:
    n_cols = rng.randint(1, 5)
    n_rows = rng.randint(0, 6)
    return Table(
        id=table_id,
        title=random_text(rng, 20),
        headers=tuple(random_text(rng) for _ in range(n_cols)),
        rows=tuple(
            tuple(random_text(rng) for _ in range(n_cols)) for _ in range(n_rows)
        ),
        source_kind="wiki",
    )


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


CAR_MAKERS = Table(
    id="car_1__car_makers",
    title="car_1 - car_makers",
    headers=("Id", "Maker", "FullName", "Country"),
    rows=(
        ("1", "amc", "American Motor Company", "1"),
        ("2", "volkswagen", "Volkswagen", "2"),
        ("3", "bmw", "BMW", "2"),
    ),
    source_kind="relational_db",
)

CAR_MAKERS_SERIALIZED = (
    "[TITLE] car_1 - car_makers"
    " [HEADER] Id | Maker | FullName | Country"
    " [ROW 1] 1 | amc | American Motor Company | 1"
    " [ROW 2] 2 | volkswagen | Volkswagen | 2"
    " [ROW 3] 3 | bmw | BMW | 2"
)


@pytest.fixture
def car_makers():
    return CAR_MAKERS
