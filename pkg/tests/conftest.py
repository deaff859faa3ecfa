import numpy as np
import pytest

from cmbert.encoder import ModelConfig, init_params
from cmbert.synthetic import clinical_sentences, clinical_tokens
from cmbert.tokenizer import Tokenizer, augment_tokenizer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config():
    return ModelConfig(d_model=8, n_heads=2, n_layers=2, d_ff=12, vocab_size=50, max_seq_len=32,
                       attention_block_size=3)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=0)


@pytest.fixture(scope="session")
def clinical_tokenizer():
    tok = Tokenizer.train(clinical_sentences(3000, seed=1), 2048)
    tok, _ = augment_tokenizer(tok, clinical_tokens())
    return tok


_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, ok, detail)``."""
    def record(number, ok, detail=""):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
