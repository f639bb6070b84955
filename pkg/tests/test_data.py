import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdpgan import data
from rdpgan import evaluation as ev
from rdpgan.errors import IngestionError
from rdpgan.rng import SeedPath

SCHEMA = data.adult_like_schema()
SPEC = data.adult_like_spec()


def small_schema():
    return data.TabularSchema(
        (data.Attribute.categorical("colour", ["red", "green", "blue"]),
         data.Attribute.binned("size", 0, 10, 4),
         data.Attribute.categorical("y", ["no", "yes"])),
        label="y",
    )


# ---- ring -------------------------------------------------------------------

def test_single_centered_mode_mean_within_clt_bound():
    std, count = 1.5, 20_000
    pts = data.gen_gaussian_ring(1, 0.0, std, count, seed=3)
    assert np.all(np.abs(pts.mean(axis=0)) <= 3 * std / math.sqrt(count))


def test_ring_zero_std_hits_mode_centres():
    pts = data.gen_gaussian_ring(8, 2.0, 0.0, 500, seed=1)
    angles = 2 * np.pi * np.arange(8) / 8
    centres = 2.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    d = np.min(np.linalg.norm(pts[:, None, :] - centres[None], axis=2), axis=1)
    assert np.all(d == 0)


def test_ring_is_seeded():
    a = data.gen_gaussian_ring(8, 2.0, 0.2, 100, seed=5)
    assert np.array_equal(a, data.gen_gaussian_ring(8, 2.0, 0.2, 100, seed=5))
    assert not np.array_equal(a, data.gen_gaussian_ring(8, 2.0, 0.2, 100, seed=6))
    with pytest.raises(ValueError):
        data.gen_gaussian_ring(0, 1.0, 0.1, 10, seed=0)


# ---- schema and encoding -----------------------------------------------------

def test_schema_validation():
    cat = data.Attribute.categorical
    with pytest.raises(ValueError):
        data.TabularSchema((), label="y")
    with pytest.raises(ValueError):
        data.TabularSchema((cat("a", ["x", "y"]),), label="missing")
    with pytest.raises(ValueError):
        data.TabularSchema((cat("y", ["a", "b", "c"]),), label="y")
    with pytest.raises(ValueError):
        data.Attribute.binned("a", 5, 5, 3)


def test_adult_like_schema_shape():
    assert len(SCHEMA.attributes) == 8
    assert SCHEMA["age"].size == 9
    assert SCHEMA.width == 37
    assert SCHEMA.feature_width() == 35


def test_binning_edges():
    a = data.Attribute.binned("size", 0, 10, 4)
    assert [a.bin_index(v) for v in (0, 2.49, 2.5, 9.99, 10)] == [0, 0, 1, 3, 3]
    with pytest.raises(ValueError):
        a.bin_index(10.01)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 3), st.integers(0, 1)), min_size=1, max_size=40))
def test_decode_inverts_encode(rows):
    ds = data.TabularDataset(small_schema(), np.array(rows))
    back = data.TabularDataset.decode(ds.schema, ds.encode())
    assert np.array_equal(back.codes, ds.codes)


def test_encoding_widths():
    ds = data.gen_mini_tabular(SCHEMA, SPEC, 50, seed=0)
    assert ds.encode().shape == (50, SCHEMA.width)
    assert ds.features().shape == (50, SCHEMA.feature_width())
    assert np.all(ds.encode().sum(axis=1) == len(SCHEMA.attributes))


def test_dataset_is_immutable():
    ds = data.gen_mini_tabular(SCHEMA, SPEC, 10, seed=0)
    with pytest.raises(ValueError):
        ds.codes[0, 0] = 1


# ---- mini-tabular generator ---------------------------------------------------

def test_marginals_match_configured_pmfs():
    ds = data.gen_mini_tabular(SCHEMA, SPEC, 100_000, seed=11)
    for name in SCHEMA.names:
        got = ev.pmf_of_attribute(ds, name).probs
        assert np.max(np.abs(got - SPEC.pmf(SCHEMA, name))) < 0.01, name


def test_label_pmf_matches_brute_force_enumeration():
    names = list(SPEC.log_odds)
    p1 = 0.0
    for combo in itertools.product(*[range(SCHEMA[n].size) for n in names]):
        prob, logit = 1.0, SPEC.intercept
        for n, c in zip(names, combo):
            prob *= SPEC.marginals[n][c]
            logit += SPEC.log_odds[n][c]
        p1 += prob / (1 + math.exp(-logit))
    assert SPEC.label_pmf(SCHEMA)[1] == pytest.approx(p1, rel=1e-12)


def test_zero_log_odds_gives_balanced_labels():
    spec = data.CorrelationSpec(marginals={k: v for k, v in SPEC.marginals.items()})
    ds = data.gen_mini_tabular(SCHEMA, spec, 20_000, seed=2)
    # 4 binomial standard errors
    assert abs(ds.labels.mean() - 0.5) < 4 * 0.5 / math.sqrt(20_000)


def test_inconsistent_spec_rejected():
    bad = data.CorrelationSpec(marginals={**SPEC.marginals, "gender": [0.5, 0.6]})
    with pytest.raises(ValueError):
        data.gen_mini_tabular(SCHEMA, bad, 10, seed=0)
    bad = data.CorrelationSpec(marginals=SPEC.marginals, log_odds={"education": [1.0]})
    with pytest.raises(ValueError):
        data.gen_mini_tabular(SCHEMA, bad, 10, seed=0)


def test_tabular_generator_is_seeded():
    a = data.gen_mini_tabular(SCHEMA, SPEC, 200, seed=4)
    assert np.array_equal(a.codes, data.gen_mini_tabular(SCHEMA, SPEC, 200, seed=4).codes)


def bayes_accuracy(spec, schema):
    names = list(spec.log_odds)
    acc = 0.0
    for combo in itertools.product(*[range(schema[n].size) for n in names]):
        prob, logit = 1.0, spec.intercept
        for n, c in zip(names, combo):
            prob *= spec.marginals[n][c]
            logit += spec.log_odds[n][c]
        p1 = 1 / (1 + math.exp(-logit))
        acc += prob * max(p1, 1 - p1)
    return acc


def test_perceptron_beats_majority_below_bayes_rate():
    train = data.gen_mini_tabular(SCHEMA, SPEC, 10_000, seed=20)
    test = data.gen_mini_tabular(SCHEMA, SPEC, 10_000, seed=21)
    clf = ev.train_eval_classifier(train.features(), train.labels, seed=0)
    acc = ev.utility_accuracy(clf, test.features(), test.labels)
    bayes = bayes_accuracy(SPEC, SCHEMA)
    majority = max(SPEC.label_pmf(SCHEMA))
    assert bayes > majority + 0.05
    assert acc > majority + 0.05
    assert acc < bayes + 4 * math.sqrt(bayes * (1 - bayes) / 10_000)


# ---- subsampling ----------------------------------------------------------------

def test_full_batch_is_a_permutation():
    x = np.arange(30.0).reshape(15, 2)
    b = data.subsample_batch(x, 15, SeedPath(0))
    assert sorted(b.indices.tolist()) == list(range(15))
    assert np.array_equal(b.x, x[b.indices])


def test_batch_rejects_oversized_request():
    with pytest.raises(ValueError):
        data.subsample_batch(np.zeros((5, 2)), 6, SeedPath(0))
    with pytest.raises(ValueError):
        data.subsample_batch(np.zeros((5, 2)), 0, SeedPath(0))


@settings(max_examples=50)
@given(st.integers(1, 200), st.integers(0, 10_000), st.integers(0, 100))
def test_batches_never_duplicate_rows(n, seed, it):
    m = max(1, n // 3)
    b = data.subsample_batch(np.zeros((n, 1)), m, SeedPath(seed, it))
    assert len(set(b.indices.tolist())) == m


def test_batch_is_deterministic_and_carries_labels():
    ds = data.gen_mini_tabular(SCHEMA, SPEC, 100, seed=0)
    a = data.subsample_batch(ds, 10, SeedPath(1, 2, 3))
    b = data.subsample_batch(ds, 10, SeedPath(1, 2, 3))
    assert np.array_equal(a.indices, b.indices)
    assert np.array_equal(a.labels, ds.labels[a.indices])
    assert a.x.shape == (10, SCHEMA.width)


def test_single_row_batches_cover_dataset():
    n = 50
    draws = 20 * n
    seen = [int(data.subsample_batch(np.zeros((n, 1)), 1, SeedPath(8, t)).indices[0])
            for t in range(draws)]
    assert set(seen) == set(range(n))
    # distinct rows after k draws has mean n(1 - (1 - 1/n)^k)
    k = n
    expected = n * (1 - (1 - 1 / n) ** k)
    distinct = [len(set(seen[i:i + k])) for i in range(0, draws, k)]
    assert abs(np.mean(distinct) - expected) < 2.0


# ---- delimited files ---------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    ds = data.gen_mini_tabular(SCHEMA, SPEC, 300, seed=9)
    path = tmp_path / "rows.csv"
    data.save_delimited(path, ds)
    back = data.load_delimited(path, SCHEMA)
    assert back.rejected == ()
    assert np.array_equal(back.encode(), ds.encode())


def test_empty_file_gives_empty_dataset(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(",".join(SCHEMA.names) + "\n")
    ds = data.load_delimited(path, SCHEMA)
    assert len(ds) == 0 and ds.rejected == ()


def test_bad_row_reported_with_line_number(tmp_path):
    schema = small_schema()
    path = tmp_path / "rows.csv"
    path.write_text("colour,size,y\nred,1.5,no\npurple,2,yes\nblue,9.5,yes\n")
    ds = data.load_delimited(path, schema)
    assert len(ds) == 2
    assert [ln for ln, _ in ds.rejected] == [3]
    assert "purple" in ds.rejected[0][1]


def test_loader_rejects_bad_cells(tmp_path):
    schema = small_schema()
    path = tmp_path / "rows.csv"
    path.write_text('colour,size,y\nred,abc,no\n"red",1,no\nred,11,no\nred,1\nred,1,no\n')
    ds = data.load_delimited(path, schema)
    assert len(ds) == 1
    assert [ln for ln, _ in ds.rejected] == [2, 3, 4, 5]


def test_loader_header_errors(tmp_path):
    schema = small_schema()
    path = tmp_path / "rows.csv"
    path.write_text("colour,y\nred,no\n")
    with pytest.raises(IngestionError):
        data.load_delimited(path, schema)
    path.write_text("")
    with pytest.raises(IngestionError):
        data.load_delimited(path, schema)


def test_loader_accepts_reordered_columns(tmp_path):
    schema = small_schema()
    path = tmp_path / "rows.csv"
    path.write_text("y,colour,size\nyes,blue,3\n")
    ds = data.load_delimited(path, schema)
    assert ds.codes.tolist() == [[2, 1, 1]]
