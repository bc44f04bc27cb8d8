import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from lcpp.core import LcppConfig, run
from lcpp.data_io import (SCHEMA_VERSION, SyntheticSpec, generate, load_csv, load_dataset, load_libsvm, load_solution,
                          load_trace, parse_libsvm, save_csv, save_libsvm, save_solution, save_trace)
from lcpp.exceptions import ConfigurationError, DataFormatError
from lcpp.objective import Dataset, LogisticLoss
from lcpp.penalty import make_penalty


def dense(ds):
    return ds.A.toarray() if sp.issparse(ds.A) else np.asarray(ds.A)


# --------------------------------------------------------------------- libsvm
def test_libsvm_examples():
    ds = parse_libsvm(["+1 1:0.5 3:-2"])
    assert np.array_equal(dense(ds), [[0.5, 0.0, -2.0]])
    assert ds.b.tolist() == [1.0]
    ds = parse_libsvm(["-1", "+1 2:1"])
    assert np.array_equal(dense(ds), [[0.0, 0.0], [0.0, 1.0]])


@pytest.mark.parametrize("bad, line", [
    (["1 2:abc"], 1),
    (["1 1:1", "1 0:2"], 2),
    (["1 1:1", "", "1 2:1 2:3"], 3),
    (["x 1:1"], 1),
    (["1 1:1 5"], 1),
    (["1 1:nan"], 1),
])
def test_libsvm_errors_carry_line_numbers(bad, line):
    with pytest.raises(DataFormatError) as err:
        parse_libsvm(bad)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_libsvm_dim_override():
    assert parse_libsvm(["1 2:1"], dim=5).d == 5
    with pytest.raises(DataFormatError):
        parse_libsvm(["1 7:1"], dim=5)


def test_comments_and_blank_lines():
    ds = parse_libsvm(["# header", "", "1 1:2 # trailing"])
    assert ds.n == 1 and dense(ds)[0, 0] == 2.0


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 8), d=st.integers(1, 8), seed=st.integers(0, 10 ** 6))
def test_libsvm_round_trip_exact(tmp_path_factory, n, d, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, d)) * (rng.random((n, d)) < 0.4)
    A[0, d - 1] = 1.0 / 3.0  # keep d recoverable and exercise repr precision
    b = rng.choice([-1.0, 1.0], size=n)
    path = tmp_path_factory.mktemp("svm") / "a.svm"
    save_libsvm(path, Dataset(sp.csr_matrix(A), b))
    back = load_libsvm(path)
    assert np.array_equal(dense(back), A)
    assert np.array_equal(back.b, b)


def test_csv_round_trip_and_dispatch(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(size=(5, 3)), rng.normal(size=5))
    save_csv(tmp_path / "d.csv", ds)
    back = load_csv(tmp_path / "d.csv")
    assert np.array_equal(dense(back), ds.A) and np.array_equal(back.b, ds.b)
    assert np.array_equal(dense(load_dataset(tmp_path / "d.csv")), ds.A)
    save_libsvm(tmp_path / "d.svm", ds)
    assert np.array_equal(dense(load_dataset(tmp_path / "d.svm")), ds.A)


# ------------------------------------------------------------------ generator
def test_noiseless_regression_is_exact():
    ds, x = generate(SyntheticSpec(n=30, d=10, k_true=3, noise_sigma=0.0, task="regression"))
    assert np.array_equal(ds.b, ds.A @ x)


@pytest.mark.parametrize("design", ["gaussian", "ar"])
def test_generator_deterministic_and_support(design):
    spec = SyntheticSpec(n=50, d=20, k_true=7, design=design, seed=5)
    (a, x1), (b, x2) = generate(spec), generate(spec)
    assert dense(a).tobytes() == dense(b).tobytes() and a.b.tobytes() == b.b.tobytes()
    assert np.array_equal(x1, x2)
    assert np.count_nonzero(x1) == 7
    assert set(np.unique(a.b)) <= {-1.0, 1.0}


def test_generator_zero_support():
    ds, x = generate(SyntheticSpec(n=40, d=5, k_true=0))
    assert not x.any()
    assert set(np.unique(ds.b)) <= {-1.0, 1.0}


def test_ar_design_correlation():
    ds, _ = generate(SyntheticSpec(n=20000, d=3, k_true=1, design="ar", rho=0.6, seed=1))
    c = np.corrcoef(dense(ds), rowvar=False)
    assert c[0, 1] == pytest.approx(0.6, abs=0.03) and c[0, 2] == pytest.approx(0.36, abs=0.03)


def test_generator_validation():
    with pytest.raises(ConfigurationError):
        SyntheticSpec(d=5, k_true=6)
    with pytest.raises(ConfigurationError):
        SyntheticSpec(design="block")


# ------------------------------------------------------------------ solutions
def test_solution_round_trip(tmp_path):
    x = np.random.default_rng(2).normal(size=17) * 1e-7
    save_solution(tmp_path / "s.json", x, {"eta": 0.5})
    y, meta = load_solution(tmp_path / "s.json")
    assert np.array_equal(x, y) and meta == {"eta": 0.5}


def test_solution_errors(tmp_path):
    p = tmp_path / "s.json"
    save_solution(p, np.ones(4))
    text = p.read_text()
    p.write_text(text[: len(text) // 2])
    with pytest.raises(DataFormatError):
        load_solution(p)
    p.write_text(json.dumps({"schema": SCHEMA_VERSION + 1, "x": [1.0]}))
    with pytest.raises(DataFormatError, match="schema"):
        load_solution(p)
    p.write_text(json.dumps({"x": [1.0]}))
    with pytest.raises(DataFormatError, match="schema"):
        load_solution(p)


def test_report_style_solution(tmp_path):
    p = tmp_path / "r.json"
    p.write_text(json.dumps({"schema": SCHEMA_VERSION, "solution": {"x": [1.0, 2.0], "dual": 0.25}}))
    x, meta = load_solution(p)
    assert x.tolist() == [1.0, 2.0] and meta == {"dual": 0.25}


# --------------------------------------------------------------------- traces
def test_trace_rows_match_outer_iterations(tmp_path):
    ds, _ = generate(SyntheticSpec(n=40, d=10, k_true=2))
    res = run(LcppConfig(eta=1.0, outer_iters=7), LogisticLoss(ds), make_penalty("mcp", lam=2.0, theta=0.25))
    save_trace(tmp_path / "t.csv", res.trace)
    rows = load_trace(tmp_path / "t.csv")
    assert len(rows) == 7
    assert [r["k"] for r in rows] == list(range(1, 8))
    assert rows[-1]["psi"] == res.trace[-1].psi


def test_trace_errors(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataFormatError):
        load_trace(p)
    p.write_text("k,eta_k,psi,g,inner_iters,dual_est,stat_resid,cs_resid,elapsed_s\n1,0.1,x,0,1,0,0,0,0\n")
    with pytest.raises(DataFormatError) as err:
        load_trace(p)
    assert err.value.line == 2
