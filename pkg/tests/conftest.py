import numpy as np
import pytest

from dpsynth.data import ColumnSpec, Dataset, Provenance, TableSchema


@pytest.fixture
def schema_448():
    """Two categoricals of size 4 and one numerical with 8 bins."""
    return TableSchema(name="mini", columns=(
        ColumnSpec.categorical("color", ("red", "green", "blue", "black")),
        ColumnSpec.categorical("shape", ("circle", "square", "triangle", "hex")),
        ColumnSpec.numerical("width", 0.0, 10.0, 8),
    ))


@pytest.fixture
def binary_schema():
    return TableSchema(name="pair", columns=(
        ColumnSpec.categorical("a", ("0", "1")),
        ColumnSpec.categorical("b", ("0", "1")),
    ))


def random_records(schema, n, rng):
    """Uniform random valid records for a schema."""
    rows = []
    for _ in range(n):
        cells = []
        for col in schema.columns:
            if col.is_categorical:
                cells.append(int(rng.integers(0, col.size)))
            else:
                cells.append(float(rng.uniform(col.min, col.max)))
        rows.append(tuple(cells))
    return rows


def random_dataset(schema, n, rng, provenance=Provenance.PRIVATE):
    return Dataset(schema, random_records(schema, n, rng), provenance)


@pytest.fixture
def rng():
    return np.random.default_rng(20240117)
