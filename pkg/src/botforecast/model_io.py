"""Versioned JSON model files for trained chains and semi-Markov models."""
from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .errors import SchemaError, ValidationError
from .events import StateAlphabet
from .higher_order import ContextMatrix
from .markov import TransitionMatrix, diagnostics
from .semi_markov import IntervalSet, SemiMarkovModel

SCHEMA_VERSION = "1.0"


@contextmanager
def atomic_write(path: str | Path, mode: str = "w"):
    """Write to a temp file beside ``path`` and rename over it on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def check_version(data: dict, what: str = "model") -> None:
    version = str(data.get("schema_version", ""))
    if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise SchemaError(f"unsupported {what} schema version {version!r}")


def _rows_to_json(cm: ContextMatrix) -> list[dict]:
    a = cm.alphabet
    return [
        {
            "context": [a.name(s) for s in ctx],
            "counts": counts.tolist(),
            "probs": (counts / counts.sum()).tolist(),
        }
        for ctx, counts in sorted(cm.rows.items())
    ]


def smc_to_dict(smc: SemiMarkovModel) -> dict:
    return {
        "intervals": list(smc.intervals.boundaries),
        "counts_q": smc.counts_q.tolist(),
        "q": smc.q.tolist(),
    }


def model_to_dict(chain: TransitionMatrix | ContextMatrix, smc: SemiMarkovModel | None = None) -> dict:
    a = chain.alphabet
    out: dict = {"schema_version": SCHEMA_VERSION, "alphabet": a.to_dict(), "order": chain.order}
    if isinstance(chain, TransitionMatrix):
        out.update(
            kind="markov",
            include_self=chain.include_self,
            alpha=chain.alpha,
            counts=chain.counts.tolist(),
            probs=chain.probs.tolist(),
            empty_rows=[a.name(i) for i in chain.empty_rows],
            diagnostics=diagnostics(chain),
        )
    else:
        tables = []
        cm = chain
        while cm is not None:
            tables.append({"order": cm.order, "rows": _rows_to_json(cm)})
            cm = cm.lower
        out.update(kind="higher_order", backoff=chain.lower is not None, tables=tables)
    out["smc"] = smc_to_dict(smc) if smc is not None else None
    return out


def model_from_dict(data: dict) -> tuple[TransitionMatrix | ContextMatrix, SemiMarkovModel | None]:
    check_version(data)
    alphabet = StateAlphabet.from_dict(data["alphabet"])
    kind = data.get("kind")
    if kind == "markov":
        chain: TransitionMatrix | ContextMatrix = TransitionMatrix(
            alphabet,
            np.asarray(data["counts"], dtype=np.int64),
            np.asarray(data["probs"], dtype=float),
            bool(data["include_self"]),
            float(data.get("alpha", 0.0)),
            [alphabet.index(s) for s in data.get("empty_rows", [])],
        )
    elif kind == "higher_order":
        chain = None
        for table in reversed(data["tables"]):
            rows = {
                tuple(alphabet.index(s) for s in r["context"]): np.asarray(r["counts"], dtype=np.int64)
                for r in table["rows"]
            }
            chain = ContextMatrix(int(table["order"]), alphabet, rows, chain if data.get("backoff") else None)
    else:
        raise ValidationError(f"unknown model kind {kind!r}")

    smc = None
    if data.get("smc"):
        s = data["smc"]
        smc = SemiMarkovModel.from_counts(alphabet, IntervalSet(tuple(s["intervals"])), s["counts_q"])
    return chain, smc


def save_model(path: str | Path, chain, smc: SemiMarkovModel | None = None) -> None:
    with atomic_write(path) as fh:
        json.dump(model_to_dict(chain, smc), fh, indent=1)
        fh.write("\n")


def load_model(path: str | Path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
