import json

import numpy as np
import pytest

from botforecast import synth
from botforecast.errors import SchemaError
from botforecast.events import FULL_ALPHABET, collapse
from botforecast.evaluation import train_chain
from botforecast.model_io import atomic_write, load_model, model_to_dict, save_model
from botforecast.predictor import Predictor
from botforecast.semi_markov import estimate_smc

from .conftest import random_spec


@pytest.fixture
def corpus():
    spec = random_spec(np.random.default_rng(0), n_hosts=6, events_per_host=300, seed=1, self_loops=True)
    return [collapse(t) for t in synth.generate(spec)]


@pytest.mark.parametrize("order, backoff", [(1, False), (3, False), (3, True)])
def test_round_trip_predictions(tmp_path, corpus, alphabet, order, backoff):
    chain = train_chain(corpus[:3], alphabet, order, backoff)
    smc = estimate_smc(corpus[:3], alphabet)
    path = tmp_path / "model.json"
    save_model(path, chain, smc)
    chain2, smc2 = load_model(path)
    assert chain2.order == order and chain2.alphabet == alphabet
    a, b = Predictor(chain, smc), Predictor(chain2, smc2)
    for tr in corpus[3:]:
        assert a.replay(tr) == b.replay(tr)
    assert np.array_equal(smc2.counts_q, smc.counts_q)


def test_markov_file_contents(tmp_path, corpus, alphabet):
    chain = train_chain(corpus, alphabet, 1)
    path = tmp_path / "m.json"
    save_model(path, chain, None)
    d = json.loads(path.read_text())
    assert d["schema_version"] == "1.0" and d["kind"] == "markov" and d["smc"] is None
    assert d["include_self"] is False
    assert {"irreducible", "aperiodic", "stationary", "reversibility"} <= set(d["diagnostics"])
    chain2, smc2 = load_model(path)
    assert smc2 is None and np.array_equal(chain2.counts, chain.counts)


def test_higher_order_rows_keyed_by_names(corpus, alphabet):
    d = model_to_dict(train_chain(corpus, alphabet, 2))
    row = d["tables"][0]["rows"][0]
    assert len(row["context"]) == 2 and all(s in alphabet.states for s in row["context"])


def test_custom_alphabet_survives(tmp_path):
    spec = synth.GeneratorSpec(
        np.full((8, 8), 1 / 7) - np.eye(8) / 7,
        synth.interval_masses(np.full((8, 8), 1 / 7) - np.eye(8) / 7, [1] * 8),
        FULL_ALPHABET, n_hosts=2, events_per_host=200,
    )
    traces = [collapse(t) for t in synth.generate(spec)]
    path = tmp_path / "m.json"
    save_model(path, train_chain(traces, FULL_ALPHABET, 1), None)
    chain, _ = load_model(path)
    assert chain.alphabet == FULL_ALPHABET


def test_rejects_unknown_major_version(tmp_path, corpus, alphabet):
    d = model_to_dict(train_chain(corpus, alphabet, 1))
    d["schema_version"] = "2.0"
    path = tmp_path / "m.json"
    path.write_text(json.dumps(d))
    with pytest.raises(SchemaError):
        load_model(path)


def test_atomic_write_keeps_old_file_on_error(tmp_path):
    path = tmp_path / "out.txt"
    path.write_text("old")
    with pytest.raises(RuntimeError):
        with atomic_write(path) as fh:
            fh.write("partial")
            raise RuntimeError("boom")
    assert path.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
