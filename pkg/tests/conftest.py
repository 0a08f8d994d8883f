import sys
from pathlib import Path

import numpy as np
import pytest

# Make imports work no matter where pytest is started from
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

# imported after fixing sys.path
import database
from services.barcode_service import EmbeddingMatrix, LabelVector


@pytest.fixture(autouse=True)
def sandbox_db(tmp_path, monkeypatch):
    """
    For every test point the run ledger at a throwaway sqlite file and build the table.
    """
    db_file = tmp_path / "sqlite_test.db"
    monkeypatch.setattr(database, "DATABASE", str(db_file), raising=False)
    database.init_database()

    # sanity check to check tests are using the temp DB
    assert str(database.DATABASE).endswith("sqlite_test.db")

    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1472)


@pytest.fixture
def separable_1d():
    """
    One feature, class 0 at values in [-0.8, -0.3], class 1 in [0.3, 0.8]; 20 of each.
    Any cut-point in (-0.3, 0.3] separates them perfectly.
    """
    gen = np.random.default_rng(5)
    low = gen.uniform(-0.8, -0.3, size=20)
    high = gen.uniform(0.3, 0.8, size=20)
    values = np.concatenate([low, high])[:, None]
    labels = np.array([0] * 20 + [1] * 20)
    return EmbeddingMatrix(values), LabelVector(labels)
