#!/usr/bin/env python3
"""Smoke test for the redual Python extension.

Build the module first:

    cargo build -p redual-py --release --features extension-module

then run this script from the repository root:

    python3 python/smoke_test.py
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_redual():
    """Copy the built cdylib next to a temp dir as redual.so and import it."""
    candidates = [
        REPO / "target" / "release" / "libredual.so",
        REPO / "target" / "debug" / "libredual.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit(
            "libredual.so not found; run "
            "`cargo build -p redual-py --release --features extension-module` first"
        )
    stage = Path(tempfile.mkdtemp(prefix="redual_py_"))
    shutil.copy2(built, stage / "redual.so")
    sys.path.insert(0, str(stage))
    import redual  # noqa: E402

    return redual


def main():
    redual = import_redual()
    tmp = Path(tempfile.mkdtemp(prefix="redual_smoke_"))

    # corpus + schema
    paths = redual.write_cue_corpus(str(tmp), n_train=32, n_dev=12, n_test=12, seed=3)
    schema = redual.Schema.load(paths["schema"])
    assert schema.predicates[0] == "NULL"
    assert len(schema.predicates) == 4
    assert "Chemical" in schema.entity_types

    # tokenizer and template filling
    assert redual.tokenize("Tamoxifen treats cancer.") == [
        "tamoxifen",
        "treats",
        "cancer",
        ".",
    ]
    filled = schema.fill("TREATS", "tamoxifen", "breast cancer", "Chemical", "Disease")
    assert "tamoxifen" in filled and "breast cancer" in filled
    assert "@subject@" not in filled and "@object@" not in filled

    # dataset access
    train_set = redual.Dataset.load(paths["train"], schema)
    assert len(train_set) == 32
    assert train_set.n_relations >= 32

    # vocabulary
    vocab = redual.Vocab.build(train_set, schema, min_freq=1)
    assert len(vocab) > 10
    assert vocab.token(0) == "[PAD]"
    vocab.save(str(tmp / "vocab.txt"))
    assert redual.Vocab.load(str(tmp / "vocab.txt")).id_of("the") == vocab.id_of("the")

    # cosine helper
    assert math.isclose(redual.cosine([1.0, 2.0], [2.0, 1.0]), 0.8, abs_tol=1e-12)
    assert redual.cosine([0.0, 0.0], [1.0, 0.0]) == 0.0

    # a short training run
    model, log = redual.train(
        paths["train"],
        paths["dev"],
        paths["schema"],
        epochs=3,
        seed=11,
        n_layers=1,
        n_heads=2,
        d_model=16,
        d_ff=32,
        max_len=64,
        d=16,
    )
    assert len(log) == 3
    for record in log:
        for key in ("epoch", "mean_l_ce", "mean_l_ct", "mean_l_u", "dev_p", "dev_r", "dev_f1"):
            assert key in record, f"missing {key} in log record"
    assert log[0]["mean_l_u"] >= log[-1]["mean_l_u"], "loss should not rise over this run"

    # save / load round trip, then evaluate and predict
    model.save(str(tmp / "checkpoint"))
    reloaded = redual.Model.load(str(tmp / "checkpoint"))
    report = reloaded.evaluate(paths["test"])
    assert 0.0 <= report["micro_f1"] <= 1.0
    assert len(report["per_predicate"]) == 4

    predictions = reloaded.predict(paths["test"])
    test_set = redual.Dataset.load(paths["test"], schema)
    assert len(predictions) == test_set.pair_count(schema)
    for record in predictions:
        assert len(record["similarities"]) == 4
        best = max(range(4), key=lambda i: record["similarities"][i])
        assert record["predicted"] == schema.predicates[best]

    # determinism: identical seeds give identical logs
    _, log_again = redual.train(
        paths["train"],
        paths["dev"],
        paths["schema"],
        epochs=3,
        seed=11,
        n_layers=1,
        n_heads=2,
        d_model=16,
        d_ff=32,
        max_len=64,
        d=16,
    )
    assert json.dumps(log) == json.dumps(log_again)

    # gradient check
    checks = redual.gradcheck(seed=5)
    assert all(err < 1e-4 for _, err in checks["primitives"])
    assert all(err < 1e-3 for _, err in checks["model"])

    print("smoke test passed:")
    print(f"  corpus at {tmp}")
    print(f"  best dev F1 over 3 epochs: {max(r['dev_f1'] for r in log):.3f}")
    print(f"  test micro-F1: {report['micro_f1']:.3f}")


if __name__ == "__main__":
    main()
