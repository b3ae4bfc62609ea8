import os
from pathlib import Path

import pytest

from msfnet.core import AngularGrid, MsfConfig, PhysicalParams, SeededRng
from msfnet.datagen import FilterCriteria, finalize_dataset, generate_dataset, load_dataset, save_dataset


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def grid():
    return AngularGrid()


@pytest.fixture
def rng():
    return SeededRng(1234)


def random_configs(n, seed=0, n_rows=12, n_cols=12, n_states=8):
    base = SeededRng(seed, (99,))
    return [MsfConfig.random(base.child(k), n_rows, n_cols, n_states) for k in range(n)]


CACHE_DIR = Path(os.environ.get("MSFNET_TEST_CACHE", Path(__file__).parent / ".cache"))


def cached_corpus(count, seed=42):
    """Generated corpus of ``count`` samples, reusing any cached larger corpus of the same seed.

    Records depend only on (seed, index), so a prefix of a larger corpus is
    identical to a freshly generated smaller one; normalization is recomputed
    from the prefix.
    """
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    found = sorted((int(p.stem.split("_n")[-1]), p) for p in CACHE_DIR.glob(f"corpus_s{seed}_n*.jsonl"))
    for n, path in found:
        if n >= count:
            ds = load_dataset(path)
            recs = ds.records[:count]
            return finalize_dataset(recs, seed, ds.params, ds.grid, FilterCriteria(), "tag_only", 12, 12, 8)
    ds = generate_dataset(count, seed, PhysicalParams(), AngularGrid())
    tmp = CACHE_DIR / f"corpus_s{seed}_n{count}.jsonl.tmp"
    save_dataset(ds, tmp)
    tmp.replace(CACHE_DIR / f"corpus_s{seed}_n{count}.jsonl")
    return ds


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
