"""Smoke test for the pyfloodloss extension module.

Build and install first:  pip install --no-build-isolation ./crates/py
"""

import json
import math

import pyfloodloss as fl


def main():
    truth = fl.Dist.burr(2.0, 3.0, 1.0)
    x = truth.sample(5000, 11)
    fitted, info = fl.fit(x)
    assert fitted.family == "burr" and not info["fallback"], (fitted, info)
    assert all(abs(a - b) / b < 0.2 for a, b in zip(fitted.params, truth.params)), fitted
    assert abs(truth.cdf(truth.quantile(0.3)) - 0.3) < 1e-12

    p, q = fl.Dist.weibull(1.0, 1.0), fl.Dist.weibull(1.0, 2.0)
    assert abs(fl.kl_divergence(p, q) - (math.log(2) - 0.5)) < 1e-6
    assert abs(fl.dist_r2(truth, truth) - 1.0) < 1e-8

    w = fl.Dist.weibull(2.0, 4000.0)
    preds = w.sample(4000, 3)
    mapped = fl.quantile_map(w, fl.Dist.burr(1.2, 4.0, 1e4), preds)
    d, _ = fl.ks_one_sample(mapped, fl.Dist.burr(1.2, 4.0, 1e4))
    assert d < 0.03, d
    _, pval = fl.ks_two_sample(x[:2500], x[2500:])
    assert 0.0 <= pval <= 1.0

    rows = [[i / 50.0, (i * 7 % 13) / 13.0] for i in range(200)]
    y = [math.sin(3 * r[0]) + r[1] for r in rows]
    model = fl.Gbt.train(rows, y, learning_rate=0.3, max_depth=4, rounds=60)
    err = max(abs(a - b) for a, b in zip(model.predict(rows), y))
    assert model.n_trees > 0 and err < 0.5, err
    assert model.to_text().startswith("floodloss-gbt")

    mean, cov = fl.em_gaussian([[1.0, 2.0], [2.0, None], [3.0, 4.1], [None, 5.0], [5.0, 6.2]])
    assert len(mean) == 2 and len(cov) == 2

    plan = fl.window_plan(2000, 10, "shifting", 2020)
    assert plan[0] == (2000, 2009, 2010) and plan[-1] == (2010, 2019, 2020)
    try:
        fl.window_plan(2000, 10, "sliding", 2020)
        raise AssertionError("unknown mode accepted")
    except ValueError:
        pass

    cfg = "last_test_year = 2011\ncycles = 2\nrounds = 30\nsynthetic_rows_per_year = 60\nsynthetic_last_year = 2011\n"
    reports = json.loads(fl.backtest_synthetic(cfg))
    assert [r["window"]["k"] for r in reports] == [0, 1]
    assert reports[0]["n_test"] == 60
    print(f"pyfloodloss {fl.__version__}: smoke test passed ({len(reports)} windows)")


if __name__ == "__main__":
    main()
