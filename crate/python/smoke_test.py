"""Smoke test for the expertscope_py extension.

Build and run from the repository root:

    python3 python/build_ext.py
    PYTHONPATH=python python3 python/smoke_test.py
"""

import json
import math

import expertscope_py as es


def main():
    cfg = es.ModelConfig.preset("olmoe-toy")
    assert cfg.n_experts == 64 and cfg.n_active == 8
    assert cfg.routing_sparsity() == 0.125

    tok = es.Tokenizer.shipped()
    ids = tok.encode("The river ran past 42 mills")
    assert tok.decode(ids) == "The river ran past 42 mills"

    small = es.ModelConfig.preset("small-moe")
    model = es.Model.random(small)
    logits = model.logits(ids)
    assert len(logits) == len(ids) and len(logits[0]) == small.vocab_size

    routing = model.routing(ids, 0)
    assert all(len(r) == small.n_active for r in routing)
    assert all(abs(sum(g for _, g in r) - 1.0) < 1e-5 for r in routing)

    target = ids[-1]
    report = model.dla(ids, target)
    total = sum(c["dla"] for c in report["components"] if c["component"]["kind"] != "expert")
    assert abs(total - report["logit"]) < 1e-5, (total, report["logit"])

    assert es.jsd([1.0, 0.0], [0.0, 1.0]) == 1.0
    one_hot_vs_uniform = 1.5 - 0.75 * math.log2(3)
    assert abs(es.jsd([0.5, 0.5], [1.0, 0.0]) - one_hot_vs_uniform) < 1e-12
    # a single token always lands in one of two equally likely clusters
    mean, stderr = es.random_baseline([0.5, 0.5], 1, 2000, 7)
    assert abs(mean - one_hot_vs_uniform) < 1e-12 and stderr < 1e-12

    plants = json.dumps([{
        "layer": 1, "expert": 6, "neuron": 2,
        "trigger_tokens": [810, 770, 669, 648, 707],
        "concept_tokens": None, "promoted_token": 810,
    }])
    planted = es.Model.plant(small.with_seed(3), plants)
    records = es.autointerp_mock(planted, layers=[1])
    labeled = [r for r in records if r["status"] == "labeled"]
    assert labeled and all(r["f1"] == 1.0 for r in labeled)

    rep = es.specialize(model, 0, 8, kind="routing", budget=2000, mc_samples=10)
    assert len(rep["experts"]) == small.n_experts

    try:
        es.ModelConfig.preset("huge")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")

    print(f"expertscope_py {es.__version__}: ok ({len(labeled)} experts labelled)")


if __name__ == "__main__":
    main()
