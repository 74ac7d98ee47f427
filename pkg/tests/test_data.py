import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subnn.data import (DataError, LabeledDataset, Standardizer, SynthSpec, SyntheticDistribution,
                        bayes_error, cube_ball_mass_constant, estimate_margin_exponent, load_csv,
                        load_points, load_truth, split, standardize, synth_manifold, truth_path,
                        write_csv)
from subnn.knn import classification_labels, regression_targets


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------- loading

def test_load_small_classification(tmp_path):
    ds = load_csv(write(tmp_path, "f1,f2,cls\n1,2,a\n3,4,b\n5,6,a\n"))
    assert (ds.n, ds.dim, ds.labels.n_classes) == (3, 2, 2)
    assert ds.labels.values.tolist() == [0, 1, 0]
    assert ds.label_names == ("a", "b")
    assert ds.feature_names == ("f1", "f2")


def test_header_only_file(tmp_path):
    with pytest.raises(DataError, match="no data rows"):
        load_csv(write(tmp_path, "a,b,c\n"))
    with pytest.raises(DataError, match="no data rows"):
        load_csv(write(tmp_path, ""))


def test_wine_format_regression(tmp_path):
    g = np.random.default_rng(0)
    cols = ["fixed acidity", "volatile acidity", "citric acid", "residual sugar", "chlorides",
            "free sulfur dioxide", "total sulfur dioxide", "density", "pH", "sulphates", "alcohol",
            "quality"]
    rows = [";".join(f"{v:.3f}" for v in g.random(11)) + f";{g.integers(3, 9)}" for _ in range(40)]
    p = write(tmp_path, ";".join(f'"{c}"' for c in cols) + "\n" + "\n".join(rows) + "\n")
    ds = load_csv(p, label="quality", mode="regression", delimiter=";")
    assert ds.n == 40 and ds.dim == 11
    assert ds.mode == "regression"


@pytest.mark.parametrize("text,pattern", [
    ("1,2,a\n3,a\n", "row 2 has 2 fields"),
    ("1,2,a\n3,x,b\n", "row 2 column 2: non-numeric"),
    ("1,2,a\n3,,b\n", "row 2 column 2 is empty"),
    ("x,y,z\n1,2,a\n1,2,b\n4,5\n", "row 4"),
])
def test_parse_errors_carry_row_numbers(tmp_path, text, pattern):
    with pytest.raises(DataError, match=pattern):
        load_csv(write(tmp_path, text))


def test_unknown_label_column(tmp_path):
    p = write(tmp_path, "a,b,c\n1,2,x\n")
    with pytest.raises(DataError, match="unknown label column"):
        load_csv(p, label="nope")
    with pytest.raises(DataError, match="out of range"):
        load_csv(p, label=7)


def test_label_column_selection(tmp_path):
    ds = load_csv(write(tmp_path, "y,a,b\nq,1,2\nr,3,4\n"), label="y")
    assert ds.points.tolist() == [[1, 2], [3, 4]]
    ds = load_csv(write(tmp_path, "0,1,2\n1,3,4\n"), label=0, mode="regression")
    assert ds.labels.values.tolist() == [0.0, 1.0]


def test_regression_target_must_be_numeric(tmp_path):
    with pytest.raises(DataError, match="row 2"):
        load_csv(write(tmp_path, "1,2,3\n1,2,a\n"), mode="regression")


def test_headerless_string_labels(tmp_path):
    ds = load_csv(write(tmp_path, "1,2,a\n3,4,b\n"))
    assert ds.n == 2 and ds.label_names == ("a", "b")


def test_load_points_and_errors(tmp_path):
    assert load_points(write(tmp_path, "")).size == 0
    assert load_points(write(tmp_path, "a,b\n1,2\n3,4\n")).tolist() == [[1, 2], [3, 4]]
    with pytest.raises(DataError, match="row 3"):
        load_points(write(tmp_path, "1,2\n3,4\n5\n"))


def test_write_and_reload_with_truth(tmp_path):
    ds = synth_manifold(SynthSpec(d=2, D=3, n=50, seed=3, noise_flip=0.1))
    p = tmp_path / "s.csv"
    write_csv(ds, p)
    back = load_csv(p)
    assert np.array_equal(back.points, ds.points)
    # labels are re-mapped by first appearance
    first = ds.labels.values[0]
    assert np.array_equal(back.labels.values == 0, ds.labels.values == first)
    eta, bayes = load_truth(truth_path(p))
    assert np.array_equal(eta, ds.truth)
    assert np.array_equal(bayes, ds.bayes_labels)


def test_write_regression_truth(tmp_path):
    ds = synth_manifold(SynthSpec(d=1, n=20, mode="regression", noise_std=0.1))
    p = tmp_path / "r.csv"
    write_csv(ds, p)
    back = load_csv(p, mode="regression")
    assert np.array_equal(back.labels.values, ds.labels.values)
    mean, none = load_truth(truth_path(p))
    assert none is None and np.array_equal(mean, ds.truth)


# ------------------------------------------------------------ standardize

def _ds(points):
    points = np.asarray(points, dtype=float)
    return LabeledDataset(points, regression_targets(np.zeros(len(points))))


def test_standardize_examples():
    tr, _, st_ = standardize(_ds([[1.0, 5.0], [3.0, 5.0]]))
    assert tr.points[:, 0].tolist() == [-1.0, 1.0]
    assert tr.points[:, 1].tolist() == [0.0, 0.0]
    assert st_.mean.tolist() == [2.0, 5.0] and st_.std.tolist() == [1.0, 0.0]
    tr, _, _ = standardize(_ds([[5.0], [5.0], [5.0]]))
    assert tr.points.ravel().tolist() == [0.0, 0.0, 0.0]


def test_standardize_recomputation(rng):
    x = rng.normal(3, 7, (1000, 10))
    tr, te, stats = standardize(_ds(x), _ds(x[:5] * 2))
    assert np.all(np.abs(tr.points.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(tr.points.std(axis=0) - 1) < 1e-9)
    assert np.allclose(te.points, (x[:5] * 2 - x.mean(axis=0)) / x.std(axis=0))


def test_standardize_dimension_mismatch():
    with pytest.raises(ValueError):
        standardize(_ds(np.zeros((3, 2))), _ds(np.zeros((3, 3))))
    with pytest.raises(ValueError):
        Standardizer.fit(np.empty((0, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 50), st.integers(1, 6), st.integers(0, 2**16))
def test_standardize_idempotent(n, D, seed):
    g = np.random.default_rng(seed)
    x = g.normal(g.normal(size=D) * 10, g.random(D) * 5, (n, D))
    x[:, 0] = 4.0  # one constant column
    once = Standardizer.fit(x).transform(x)
    twice = Standardizer.fit(once).transform(once)
    assert np.allclose(once, twice, atol=1e-9)


# ------------------------------------------------------------------ split

def test_split_sizes_disjoint_deterministic():
    ds = _ds(np.arange(10.0)[:, None])
    a, b = split(ds, 0.7, seed=1)
    assert (a.n, b.n) == (7, 3)
    assert not set(a.points.ravel()) & set(b.points.ravel())
    assert set(a.points.ravel()) | set(b.points.ravel()) == set(range(10))
    a2, _ = split(ds, 0.7, seed=1)
    assert np.array_equal(a.points, a2.points)
    a3, _ = split(ds, 0.7, seed=2)
    assert not np.array_equal(a.points, a3.points)


@pytest.mark.parametrize("f", [0.0, 1.0, 0.05])
def test_split_rejects_empty_side(f):
    with pytest.raises(ValueError):
        split(_ds(np.arange(10.0)[:, None]), f)


# -------------------------------------------------------------- synthetic

def test_constant_eta_gives_zero_bayes_error():
    ds = synth_manifold(SynthSpec(d=2, D=2, rotate=False, offset=2.0, n=500))
    assert np.all(ds.truth == [1.0, 0.0])
    assert np.all(ds.labels.values == 0)
    assert bayes_error(ds) == 0.0


def test_bayes_error_examples():
    pts = np.zeros((3, 1))
    ds = LabeledDataset(pts, classification_labels([0, 1, 0], 2),
                        truth=np.array([[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]]))
    assert bayes_error(ds) == pytest.approx((0.3 + 0.2 + 0.5) / 3)
    half = LabeledDataset(pts, classification_labels([0, 1, 0], 2), truth=np.full((3, 2), 0.5))
    assert bayes_error(half) == 0.5
    with pytest.raises(ValueError):
        bayes_error(LabeledDataset(pts, classification_labels([0, 1, 0], 2)))


def test_bayes_error_grid_sum():
    dist = SyntheticDistribution(SynthSpec(d=1, lam=3, n_classes=3, noise_flip=0.1, rotate=False))
    u = np.linspace(0, 1, 101)[:, None]
    eta = dist.eta(u)
    ds = LabeledDataset(u, classification_labels(np.zeros(101, dtype=int), 3), truth=eta)
    hand = sum(1 - max(row) for row in eta.tolist()) / 101
    assert bayes_error(ds) == pytest.approx(hand, rel=1e-12)


def test_embedding_isometry():
    dist = SyntheticDistribution(SynthSpec(d=1, D=3, seed=4))
    g = np.random.default_rng(0)
    u, v = g.random((1000, 1)), g.random((1000, 1))
    du = np.linalg.norm(u - v, axis=1)
    dx = np.linalg.norm(dist.embed(u) - dist.embed(v), axis=1)
    assert np.max(np.abs(du - dx)) < 1e-9
    assert np.allclose(dist.intrinsic(dist.embed(u)), u, atol=1e-12)


def test_synthetic_bit_reproducible():
    spec = SynthSpec(d=2, D=5, n=300, noise_flip=0.2, seed=9)
    a, b = synth_manifold(spec), synth_manifold(spec)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.labels.values, b.labels.values)
    assert np.array_equal(a.truth, b.truth)
    c = synth_manifold(SynthSpec(d=2, D=5, n=300, noise_flip=0.2, seed=10))
    assert not np.array_equal(a.points, c.points)


def test_truth_is_simplex():
    for spec in (SynthSpec(d=2, n_classes=4, noise_flip=0.3, amplitude=0.8, lam=4),
                 SynthSpec(d=1, boundary="multiscale", lam=5)):
        ds = synth_manifold(spec)
        assert np.allclose(ds.truth.sum(axis=1), 1, atol=1e-12)
        assert (ds.truth >= 0).all()
        assert np.array_equal(ds.bayes_labels, ds.truth.argmax(axis=1))


def test_flip_rate_matches_truth():
    ds = synth_manifold(SynthSpec(d=2, n=20000, noise_flip=0.2, lam=0.5, seed=1))
    # empirical label frequencies match the mean class probability
    assert abs(np.mean(ds.labels.values == 1) - ds.truth[:, 1].mean()) < 0.015


HOLDER_SPECS = [
    SynthSpec(d=2, D=4, lam=2.0),
    SynthSpec(d=3, lam=0.7, alpha=0.5, margin_exponent=0.5),
    SynthSpec(d=2, boundary="radial", lam=4.0, n_classes=3),
    SynthSpec(d=1, boundary="multiscale", lam=5.0),
    SynthSpec(d=2, lam=3.0, alpha=0.6, margin_exponent=2.0, noise_flip=0.2),
    SynthSpec(d=1, lam=8.0, alpha=0.3, margin_exponent=0.3, amplitude=0.5),
]


@pytest.mark.parametrize("spec", HOLDER_SPECS, ids=lambda s: f"{s.boundary}-a{s.alpha}-g{s.margin_exponent}")
def test_holder_condition_on_sampled_pairs(spec):
    dist = SyntheticDistribution(spec)
    g = np.random.default_rng(0)
    u = g.random((10_000, spec.d))
    # half far pairs, half close pairs where small-distance violations would show
    step = g.normal(size=(10_000, spec.d)) * np.where(np.arange(10_000) < 5000, 1.0, 1e-3)[:, None]
    v = np.clip(u + step, 0, 1)
    x, y = dist.embed(u), dist.embed(v)
    lhs = np.abs(dist.eta_at(x) - dist.eta_at(y)).max(axis=1)
    rhs = spec.lam * np.linalg.norm(x - y, axis=1) ** spec.alpha
    assert np.all(lhs <= rhs + 1e-12)


def test_holder_condition_regression_mean():
    spec = SynthSpec(d=2, lam=1.5, alpha=0.7, mode="regression")
    dist = SyntheticDistribution(spec)
    g = np.random.default_rng(1)
    u, v = g.random((10_000, 2)), g.random((10_000, 2))
    lhs = np.abs(dist.mean(u) - dist.mean(v))
    assert np.all(lhs <= spec.lam * np.linalg.norm(u - v, axis=1) ** spec.alpha + 1e-12)


@pytest.mark.parametrize("gamma", [1.0, 2.0])
def test_margin_profile_is_measurable(gamma):
    ds = synth_manifold(SynthSpec(d=1, n=200_000, lam=0.5, margin_exponent=gamma))
    assert estimate_margin_exponent(ds, np.geomspace(0.002, 0.05, 8)) == pytest.approx(1 / gamma, abs=0.1)


def test_ball_mass_lower_bound():
    d = 2
    spec = SynthSpec(d=d, D=4, n=100_000, seed=2)
    dist = SyntheticDistribution(spec)
    x = synth_manifold(spec).points
    c_d = cube_ball_mass_constant(d)
    g = np.random.default_rng(3)
    centres = np.vstack([g.random((40, d)), [[0, 0], [1, 1], [0, 1], [0.5, 0]]])
    for u in centres:
        for r in np.concatenate([g.uniform(0.05, np.sqrt(d), 5), [np.sqrt(d)]]):
            mass = np.mean(np.linalg.norm(x - dist.embed(u), axis=1) <= r)
            assert mass >= 0.9 * c_d * r ** d


def test_ball_mass_constant_is_tight_at_corner():
    # ball of radius sqrt(d) at a corner covers the whole cube: mass 1 = C_d * sqrt(d)^d
    for d in (1, 2, 3, 5):
        assert cube_ball_mass_constant(d) * np.sqrt(d) ** d == pytest.approx(1.0)


@pytest.mark.parametrize("kw", [dict(d=3, D=2), dict(alpha=1.2), dict(lam=0), dict(noise_flip=0.5),
                                dict(n_classes=1), dict(alpha=0.8, margin_exponent=0.5),
                                dict(boundary="wiggly")])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        SynthSpec(**kw)


def test_spec_parse():
    s = SynthSpec.parse("d=2,D=5,n=1000,alpha=1,lambda=3,flip=0.1,boundary=radial,rotate=false")
    assert (s.d, s.D, s.n, s.alpha, s.lam, s.noise_flip, s.boundary, s.rotate) == \
        (2, 5, 1000, 1.0, 3.0, 0.1, "radial", False)
    with pytest.raises(ValueError):
        SynthSpec.parse("d=2,bogus=1")
