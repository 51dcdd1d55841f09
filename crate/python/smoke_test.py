"""Smoke test for the riaft Python bindings.

Build and install first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/riaft-*.whl
"""

import math
import os
import tempfile

import riaft


def main():
    ds, truth = riaft.simulate(clusters=4, cluster_size=40, seed=1)
    assert ds.n_rows == 160 and ds.n_arms == 3 and ds.n_clusters == 4
    assert len(ds.covariate_names) == 7
    assert set(truth["iste"]) == {"1,2", "1,3", "2,3"}
    assert all(abs(sum(g) - 1.0) < 1e-12 for g in truth["gps"])
    assert abs(truth["censored_fraction"] - 0.5) <= 0.02
    print(ds, "censored", round(truth["censored_fraction"], 3))

    post = riaft.fit(ds, draws=400, burn_in=150, trees=20, seed=2, keep_forests=True)
    assert post.n_draws == 250
    f = post.mean_f()
    assert len(f) == ds.n_rows and all(math.isfinite(v) for v in f)
    vip = post.vip()
    assert abs(sum(vip.values()) - 1.0) < 1e-9
    print(post, "mu_aft", round(post.mu_aft, 3))

    mean, lo, hi = post.ate(1, 2)
    assert lo <= mean <= hi
    zero = post.ate(2, 2)
    assert zero == (0.0, 0.0, 0.0)
    means, lows, highs = post.iste(1, 3)
    assert len(means) == ds.n_rows
    print("ATE 1 vs 2:", round(mean, 3), (round(lo, 3), round(hi, 3)))
    print("PEHE 1 vs 3:", round(riaft.pehe(means, truth["iste"]["1,3"]), 3))

    s = post.survival_prob(0, 1, 1.0)
    assert 0.0 <= s[1] <= s[0] <= s[2] <= 1.0
    r = post.rmst(0, 1, 1.0, integrated=True, seed=3)
    assert 0.0 <= r[0] <= 1.0

    with tempfile.TemporaryDirectory() as tmp:
        data = os.path.join(tmp, "data.csv")
        draws = os.path.join(tmp, "draws.jsonl")
        ds.write_csv(data)
        back = riaft.Dataset.read_csv(data)
        assert back.n_rows == ds.n_rows and back.covariate_names == ds.covariate_names
        post.save(draws)
        again = riaft.Posterior.load(draws, back)
        assert again.mean_b() == post.mean_b()
        pred = again.predict(back)
        assert max(abs(a - b) for a, b in zip(pred, f)) < 1e-9

    report = post.subgroups(ds, 1, 3, trees=30, seed=4)
    print("subgroup covariates:", report["selected"], "rules:", len(report["rules"]))

    vs, vtruth = riaft.simulate(mode="varselect", clusters=4, cluster_size=25, seed=5)
    assert len(vs.covariate_names) == 28
    amp = riaft.ampute(vs, seed=6)
    assert amp.has_missing() and not vs.has_missing()
    assert amp.time == vs.time
    filled = riaft.impute(amp, seed=7)
    assert not filled.has_missing()

    sel = riaft.select_variables(
        amp, permutations=5, bootstrap=2, draws=200, burn_in=50, trees=10,
        null_draws=150, null_burn_in=50, seed=8,
    )
    assert len(sel) == 28 and all(row["boot_count"] is not None for row in sel)
    picked = [int(row["covariate"][1:]) - 1 for row in sel if row["selected"]]
    useful = [int(name[1:]) - 1 for name in vtruth["useful"]]
    m = riaft.selection_metrics(picked, useful, 28)
    print("selected:", [row["covariate"] for row in sel if row["selected"]], "F1", round(m["f1"], 3))

    assert riaft.concordance([0.1, 0.5, 0.9], [1.0, 2.0, 3.0], [True, True, True]) == 1.0
    try:
        riaft.fit(ds, draws=10, burn_in=10)
    except riaft.RiaftError as e:
        print("invalid budget rejected:", e)
    else:
        raise AssertionError("expected RiaftError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
