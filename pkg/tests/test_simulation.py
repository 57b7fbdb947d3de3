import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_rrr.simulation import (
    METHODS,
    PRESETS,
    CvSettings,
    ScenarioFileError,
    SimScenario,
    aggregate,
    apply_contamination,
    draw_noise,
    generate,
    metrics,
    parse_scenario,
    run_replicates,
    scenario_to_text,
    stream,
    uniform_mask,
)

QUICK = CvSettings(k=3, n_lambda=4, tol=1e-4, max_iter=100)


def test_scenario_validation():
    with pytest.raises(ValueError):
        SimScenario(r=8, q=7)
    with pytest.raises(ValueError):
        SimScenario(missing_fraction=1.0)
    with pytest.raises(ValueError):
        SimScenario(contamination=1.0)
    with pytest.raises(ValueError):
        SimScenario(noise="scaled_t", t_df=0.0)
    with pytest.raises(ValueError):
        SimScenario(design="ar1", rho_x=1.0)
    with pytest.raises(ValueError):
        SimScenario(noise="laplace")


def test_zero_noise_gives_exact_responses():
    d = generate(SimScenario(n=30, noise_sd=0.0, n_test=10, seed=3))
    np.testing.assert_array_equal(d.Y, d.X @ d.B0)
    assert d.mask.all()
    np.testing.assert_array_equal(d.Y_test, d.Y_test_clean)


def test_low_rank_truth():
    d = generate(SimScenario(p=12, q=7, r=2, n_test=5, seed=1))
    assert np.linalg.matrix_rank(d.B0) == 2
    assert d.X.shape == (200, 12) and d.Y.shape == (200, 7) and d.X_test.shape == (5, 12)


def test_determinism_bit_identical():
    s = SimScenario(noise="cauchy", missing_fraction=0.1, contamination=0.05, n_test=20, seed=11)
    a, b = generate(s), generate(s)
    for field in ("X", "Y", "mask", "B0", "X_test", "Y_test"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_streams_are_independent_of_toggles():
    base = generate(SimScenario(n_test=10, seed=5))
    masked = generate(SimScenario(missing_fraction=0.2, n_test=10, seed=5))
    np.testing.assert_array_equal(base.X, masked.X)
    np.testing.assert_array_equal(base.B0, masked.B0)
    np.testing.assert_array_equal(base.Y[masked.mask], masked.Y[masked.mask])
    contaminated = generate(SimScenario(contamination=0.1, n_test=10, seed=5))
    assert np.sum(contaminated.Y != base.Y) == 140
    np.testing.assert_array_equal(base.Y_test, contaminated.Y_test)


def test_mask_independent_of_noise_family():
    a = generate(SimScenario(missing_fraction=0.2, n_test=5, seed=2))
    b = generate(SimScenario(missing_fraction=0.2, noise="cauchy", n_test=5, seed=2))
    np.testing.assert_array_equal(a.mask, b.mask)


def test_missing_fraction_exact():
    d = generate(SimScenario(missing_fraction=0.1, n_test=5, seed=4))
    assert (~d.mask).sum() == 140
    assert np.all(d.Y[~d.mask] == 0.0)


def test_ar1_zero_rho_is_iid():
    d = generate(SimScenario(n=5000, design="ar1", rho_x=0.0, n_test=1, seed=0))
    C = np.cov(d.X, rowvar=False)
    assert np.abs(C - np.diag(np.diag(C))).max() < 0.05


def test_ar1_covariance():
    d = generate(SimScenario(n=20000, design="ar1", rho_x=0.5, n_test=1, seed=0))
    C = np.cov(d.X, rowvar=False)
    idx = np.arange(12)
    np.testing.assert_allclose(C, 0.5 ** np.abs(idx[:, None] - idx[None, :]), atol=0.04)


def test_noise_families():
    shape = (1000, 1000)
    g = draw_noise(np.random.default_rng(0), shape, SimScenario())
    t = draw_noise(np.random.default_rng(1), shape, SimScenario(noise="scaled_t", t_df=3.0, t_scale=1.5))
    c = draw_noise(np.random.default_rng(2), shape, SimScenario(noise="cauchy"))
    assert abs(g.mean()) < 0.01 and abs(t.mean()) < 0.01
    assert abs(np.median(c)) < 0.01
    assert t.var() == pytest.approx(6.75, rel=0.05)
    g3 = draw_noise(np.random.default_rng(3), shape, SimScenario(noise_sd=3.0))
    assert g3.std() == pytest.approx(3.0, rel=0.01)


def test_contamination_examples():
    M = np.random.default_rng(0).standard_normal((200, 7))
    np.testing.assert_array_equal(apply_contamination(M, 0.0, rng=1), M)
    out = apply_contamination(M, 0.1, rng=1)
    assert np.sum(out != M) == 140
    with pytest.raises(ValueError):
        apply_contamination(M, 1.0, rng=1)
    rep = apply_contamination(M, 0.1, rng=1, mode="replace")
    assert np.sum(rep != M) == 140


@given(n=st.integers(1, 40), m=st.integers(1, 40), frac=st.floats(0, 0.99), seed=st.integers(0, 2**31))
def test_contamination_count_property(n, m, frac, seed):
    M = np.zeros((n, m))
    out = apply_contamination(M, frac, 10.0, seed)
    # a N(0, 100) draw is exactly zero with probability zero
    assert np.count_nonzero(out) == math.floor(frac * n * m + 0.5)


def test_uniform_mask_rejects_total_deletion():
    with pytest.raises(ValueError):
        uniform_mask(np.random.default_rng(0), (1, 2), 0.9)


def test_metrics_examples():
    s = SimScenario(n_test=5000, seed=7)
    d = generate(s)
    clean = metrics(d.B0, d.B0, d.X_test, d.Y_test_clean)
    assert clean.est_error == 0.0 and clean.mspe_test == 0.0 and clean.rank_hat == 2
    noisy = metrics(d.B0, d.B0, d.X_test, d.Y_test)
    assert 0.98 <= noisy.mspe_test <= 1.02
    zero = metrics(np.zeros_like(d.B0), d.B0, d.X_test, d.Y_test_clean)
    assert zero.mspe_test == pytest.approx(np.sum((d.X_test @ d.B0) ** 2) / (7 * 5000))
    assert zero.est_error == pytest.approx(np.sum(d.B0**2))
    assert zero.rank_hat == 0


def test_metrics_spectral_flag():
    d = generate(SimScenario(n_test=10, seed=1))
    r = metrics(np.zeros_like(d.B0), d.B0, d.X_test, d.Y_test, norm="spectral")
    assert r.est_error == pytest.approx(np.linalg.norm(d.B0, 2) ** 2)


def test_methods_catalogue():
    assert set(METHODS) == {f"{a}_{b}" for a in ("huber", "lsq") for b in ("scad", "mcp", "nucl")}
    assert METHODS["lsq_scad"].taus == (math.inf,)
    assert METHODS["huber_nucl"].family == "nuclear"


def test_run_replicates_single_rep_sd_zero():
    s = SimScenario(n=40, p=5, q=4, r=1, n_test=50, seed=0)
    table = run_replicates(s, ("huber_scad",), 1, QUICK, base_seed=3)
    assert all(row["sd"] == 0 for row in table.summary)
    assert table.rows[0]["seed"] == 3


def test_run_replicates_deterministic_and_seeded():
    s = SimScenario(n=40, p=5, q=4, r=1, n_test=50, missing_fraction=0.1)
    a = run_replicates(s, ("huber_mcp", "lsq_mcp"), 2, QUICK, base_seed=10)
    b = run_replicates(s, ("huber_mcp", "lsq_mcp"), 2, QUICK, base_seed=10, workers=2)
    assert a.rows == b.rows and a.summary == b.summary
    assert [r["seed"] for r in a.rows] == [10, 10, 11, 11]
    assert {r["tau"] for r in a.rows if r["method"] == "lsq_mcp"} == {math.inf}


def test_failures_recorded_not_raised():
    # lambda_min above lambda_max makes the grid degenerate for every replicate
    s = SimScenario(n=30, p=4, q=3, r=1, n_test=10)
    table = run_replicates(s, ("huber_scad",), 2, CvSettings(k=3, n_lambda=3, lambda_min=1e6), base_seed=0)
    assert len(table.failures) == 2
    assert "GridError" in table.rows[0]["error"]
    assert all(math.isnan(row["mean"]) and row["n_ok"] == 0 for row in table.summary)


def test_aggregate_sample_sd():
    rows = [{"method": "m", "error": "", "est_error": v, "mspe_test": 1.0, "rank": 2} for v in (1.0, 2.0, 3.0)]
    summary = {r["metric"]: r for r in aggregate(rows, ["m"])}
    assert summary["est_error"]["mean"] == 2.0 and summary["est_error"]["sd"] == 1.0
    assert summary["rank"]["sd"] == 0.0


def test_presets():
    for name in ("table1-gauss-r2", "table1-cauchy-r5", "table3-outlier-10pct", "table4-missing-20pct"):
        assert name in PRESETS
    assert PRESETS["table1-gauss3-r2"].noise_sd == 3.0
    assert PRESETS["table1-t3x1.5-r2"].t_scale == 1.5
    assert PRESETS["table2-ar1-t3-r5"].rho_x == 0.5 and PRESETS["table2-ar1-t3-r5"].t_scale == 1.0
    assert PRESETS["table3-outlier-20pct"].contamination == 0.2
    assert PRESETS["table4-missing-10pct"].missing_fraction == 0.1
    assert PRESETS["table1-gauss-r5-p120"].p == 120


def test_scenario_file_roundtrip():
    s = PRESETS["table4-missing-10pct-t3x1.5-r5"].with_seed(9)
    assert parse_scenario(scenario_to_text(s)) == s


def test_scenario_file_preset_and_overrides():
    text = "# desk run\npreset = table1-cauchy-r2\n\nn = 100   # smaller\nmissing_fraction = 0.1\n"
    s = parse_scenario(text)
    assert s.noise == "cauchy" and s.n == 100 and s.missing_fraction == 0.1


@pytest.mark.parametrize(
    "text,line",
    [
        ("n = 100\nbogus = 1\n", 2),
        ("n = 100\n\nn = 50\n", 3),
        ("n = 10.5\n", 1),
        ("# c\np = 3\nr = 5\n", 3),
        ("n = 100\npreset = table1-gauss-r2\n", 2),
        ("preset = nope\n", 1),
        ("n 100\n", 1),
        ("noise = laplace\n", 1),
    ],
)
def test_scenario_file_errors_are_line_precise(text, line):
    with pytest.raises(ScenarioFileError) as info:
        parse_scenario(text, "cfg.txt")
    assert info.value.line == line
    assert str(info.value).startswith(f"cfg.txt:{line}:")


def test_stream_names():
    a = stream(1, "noise").standard_normal(3)
    b = stream(1, "mask").standard_normal(3)
    assert not np.array_equal(a, b)
    with pytest.raises(KeyError):
        stream(1, "unknown")
