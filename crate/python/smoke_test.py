"""Smoke test for the pybnnuq extension.

Build and install first:
    cd crates/python && maturin develop --release
"""

import json
import math
import random
import tempfile

import pybnnuq as bq


def check_bounds():
    s = bq.summarize([0.2, 0.4, 0.6, 0.8])
    assert abs(s.mean - 0.5) < 1e-12
    assert abs(s.variance - 0.05) < 1e-12
    lo, hi = bq.loss_bounds(s.variance)
    for y in (0, 1):
        assert lo - 1e-9 <= s.bce(y) <= hi + 1e-9
    lo0, hi0 = bq.loss_bounds(0.0)
    assert lo0 == 0.0 and math.isinf(hi0)
    try:
        bq.loss_bounds(0.3)
    except bq.BnnuqError:
        pass
    else:
        raise AssertionError("variance above 1/4 accepted")


def check_metrics():
    assert bq.auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    rng = random.Random(0)
    losses = [rng.random() for _ in range(50)]
    unc = [rng.random() for _ in range(50)]
    cov, cum = bq.risk_coverage(losses, unc)
    assert cov[-1] == 1.0 and abs(cum[-1] - sum(losses)) < 1e-12
    u, z, p, effect = bq.mann_whitney([3.0, 4.0, 5.0], [1.0, 2.0, 3.0])
    assert 0.0 < p <= 1.0 and effect > 0.5


def check_network():
    train, test, ood = bq.generate_synthetic(seed=3, n_train=1500, n_test=500, n_ood=100)
    assert len(train) == 1500 and len(ood) == 100
    cols = list(zip(*train.features))
    mu = [sum(c) / len(c) for c in cols]
    sd = [math.sqrt(sum((v - m) ** 2 for v in c) / len(c)) or 1.0 for c, m in zip(cols, mu)]
    scale = lambda rows: [[(v - m) / s for v, m, s in zip(r, mu, sd)] for r in rows]

    net = bq.Bnn(len(mu), hidden=[32, 32], seed=1)
    elbo = net.fit(scale(train.features), train.labels, epochs=15, batch_size=128, learning_rate=3e-3)
    assert elbo[-1] < elbo[0]
    preds = net.predict(scale(test.features), samples=30, seed=2)
    assert all(0.0 <= p.variance <= 0.25 for p in preds)
    auc = bq.auroc([p.mean for p in preds], test.labels)
    assert auc > 0.75, auc
    report = json.loads(bq.verify_bounds(preds, test.labels))
    assert report["violation_count"] == 0

    again = bq.Bnn.from_json(net.to_json())
    assert [p.mean for p in again.predict(scale(test.features[:5]), samples=30, seed=2)] == [
        p.mean for p in preds[:5]
    ]
    return auc


def check_pipeline():
    with tempfile.TemporaryDirectory() as out:
        cfg = f"{out}/tiny.toml"
        with open(cfg, "w") as f:
            f.write(
                "[data]\nsource = \"synthetic\"\nn_features = 10\nn_train = 800\nn_test = 400\nn_ood = 100\n"
                "[network]\nhidden = [16, 16]\n[train]\nepochs = 5\nbatch_size = 64\n"
            )
        result = json.loads(bq.run_experiment(cfg, output_dir=out, seed=5))
        assert result["bounds"]["violation_count"] == 0
        assert set(result) == {"output_dir", "training", "bounds", "evaluation", "ood"}


if __name__ == "__main__":
    check_bounds()
    check_metrics()
    auc = check_network()
    check_pipeline()
    print(f"pybnnuq {bq.__version__}: smoke test passed (test AUROC {auc:.3f})")
