from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from _helpers import ADULT_LIKE, build_dataset
from scripts import dataset, errors, generators, strategies
from scripts.dataset import SubgroupKey
from scripts.generators import GeneratorKind
from scripts.runtime import ModelCache

PAIR_SCHEMA = dataset.DatasetSchema.from_dict([
    {"name": "a", "kind": "discrete"},
    {"name": "b", "kind": "discrete"},
    {"name": "g", "kind": "discrete", "role": "protected"},
    {"name": "y", "kind": "discrete", "role": "target"},
])


def _largest_subgroup(d: dataset.Dataset) -> np.ndarray:
    part = dataset.partition(d)
    key = max(part.keys(), key=lambda k: (len(part.rows(k)), k))
    return d.matrix()[part.rows(key)]


def _pair_rows(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    a = (rng.uniform(size=n) < 0.3).astype(np.float64)
    return np.column_stack([a, a, np.zeros(n), np.zeros(n)])


def test_copula_preserves_continuous_marginals(mixed_dataset) -> None:
    rows = _largest_subgroup(mixed_dataset)
    model = generators.fit(GeneratorKind.GAUSSIAN_COPULA, rows, mixed_dataset.schema, seed=1)
    synthetic = generators.sample(model, 20_000, seed=2)
    for name in mixed_dataset.schema.continuous:
        j = mixed_dataset.schema.index_of(name)
        ks = stats.ks_2samp(rows[:, j], synthetic[name].to_numpy()).statistic
        assert ks <= 0.05, name


def test_copula_preserves_rank_correlation(mixed_dataset) -> None:
    rows = _largest_subgroup(mixed_dataset)
    schema = mixed_dataset.schema
    model = generators.fit("copula", rows, schema, seed=3)
    synthetic = generators.sample(model, 20_000, seed=4)
    i, j = schema.index_of("x0"), schema.index_of("x1")
    real_rho = stats.spearmanr(rows[:, i], rows[:, j]).statistic
    syn_rho = stats.spearmanr(synthetic["x0"], synthetic["x1"]).statistic
    assert abs(real_rho - syn_rho) <= 0.1


CORRELATED_SCHEMA = dataset.DatasetSchema.from_dict([
    {"name": "x0", "kind": "continuous"},
    {"name": "x1", "kind": "continuous"},
    {"name": "g", "kind": "discrete", "role": "protected"},
    {"name": "y", "kind": "discrete", "role": "target"},
])


def test_copula_keeps_strong_rank_correlation() -> None:
    # 皮尔逊 0.81 的二元正态，秩相关约 0.8
    rng = np.random.default_rng(8)
    cov = [[1.0, 0.81], [0.81, 1.0]]
    xy = rng.multivariate_normal([0.0, 0.0], cov, size=5000)
    rows = np.column_stack([xy, np.zeros(5000), np.zeros(5000)])
    real_rho = stats.spearmanr(rows[:, 0], rows[:, 1]).statistic
    assert 0.75 <= real_rho <= 0.85

    model = generators.fit("copula", rows, CORRELATED_SCHEMA, seed=9)
    synthetic = generators.sample(model, 5000, seed=10)
    syn_rho = stats.spearmanr(synthetic["x0"], synthetic["x1"]).statistic
    assert abs(real_rho - syn_rho) <= 0.1


def test_copula_discrete_values_stay_in_fit_set(mixed_dataset) -> None:
    rows = _largest_subgroup(mixed_dataset)
    model = generators.fit("copula", rows, mixed_dataset.schema, seed=5)
    synthetic = generators.sample(model, 5000, seed=6)
    for name in mixed_dataset.schema.discrete:
        j = mixed_dataset.schema.index_of(name)
        assert set(synthetic[name]) <= set(rows[:, j].astype(int))


def test_cart_preserves_discrete_marginals(mixed_dataset) -> None:
    rows = _largest_subgroup(mixed_dataset)
    schema = mixed_dataset.schema
    model = generators.fit(GeneratorKind.CART_CHAIN, rows, schema, seed=1)
    synthetic = generators.sample(model, 20_000, seed=2)
    for name in schema.discrete:
        j = schema.index_of(name)
        count = mixed_dataset.category_count(name)
        real = np.bincount(rows[:, j].astype(int), minlength=count) / len(rows)
        syn = np.bincount(synthetic[name].to_numpy(), minlength=count) / len(synthetic)
        assert 0.5 * np.abs(real - syn).sum() <= 0.05, name


def test_cart_first_column_frequencies() -> None:
    model = generators.fit("cart", _pair_rows(1000, seed=0), PAIR_SCHEMA, seed=0)
    synthetic = generators.sample(model, 10_000, seed=1)
    share = float((synthetic["a"] == 0).mean())
    assert 0.65 <= share <= 0.75


def test_cart_keeps_functional_dependency() -> None:
    model = generators.fit("cart", _pair_rows(1000, seed=2), PAIR_SCHEMA, seed=0)
    synthetic = generators.sample(model, 10_000, seed=3)
    assert float((synthetic["a"] == synthetic["b"]).mean()) >= 0.99


def test_cart_two_rows_is_valid() -> None:
    rows = np.array([[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]])
    model = generators.fit("cart", rows, PAIR_SCHEMA, seed=0)
    synthetic = generators.sample(model, 50, seed=1)
    assert len(synthetic) == 50
    assert set(synthetic["a"]) <= {0, 1}
    assert set(synthetic["g"]) == {0}


def test_smote_interpolation_is_bounded() -> None:
    d = build_dataset(
        [(float(i % 2), "Male", "no") for i in range(40)] + [(1.0, "Female", "yes")] * 2,
        ADULT_LIKE,
    )
    part = dataset.partition(d)
    rows = d.matrix()[part.rows(SubgroupKey((1,), 0))]
    model = generators.fit(GeneratorKind.SMOTE_NC, rows, d.schema, seed=0)
    synthetic = generators.sample(model, 2000, seed=1)
    assert synthetic["age"].between(0.0, 1.0).all()


def test_smote_samples_lie_on_neighbor_segments(mixed_dataset) -> None:
    rows = _largest_subgroup(mixed_dataset)[:60]
    schema = mixed_dataset.schema
    model = generators.fit("smote-nc", rows, schema, seed=0)
    synthetic = generators.sample(model, 10_000, seed=7)

    cols = [schema.index_of(n) for n in schema.continuous]
    x = rows[:, cols]
    knn = model.neighbors(np.arange(len(rows)))
    base = np.repeat(np.arange(len(rows)), knn.shape[1])
    start, delta = x[base], x[knn.ravel()] - x[base]
    norm2 = np.einsum("ij,ij->i", delta, delta)

    for s in synthetic[list(schema.continuous)].to_numpy():
        u = np.einsum("ij,j->i", delta, s) - np.einsum("ij,ij->i", delta, start)
        u = np.divide(u, norm2, out=np.zeros_like(u), where=norm2 > 0)
        tol = 1e-9 * max(1.0, float(np.abs(s).max()))
        ok = (u >= -1e-9) & (u <= 1 + 1e-9)
        residual = np.abs(start + u[:, None] * delta - s).max(axis=1)
        assert np.any(ok & (residual <= tol))


def test_smote_not_applicable_without_continuous_columns(discrete_dataset) -> None:
    rows = _largest_subgroup(discrete_dataset)
    with pytest.raises(errors.NotApplicable):
        generators.fit("smote-nc", rows, discrete_dataset.schema, seed=0)


@pytest.mark.parametrize("kind", list(GeneratorKind))
def test_single_row_is_too_few(kind: GeneratorKind, small_dataset) -> None:
    rows = small_dataset.matrix()[:1]
    with pytest.raises(errors.TooFewRows):
        generators.fit(kind, rows, small_dataset.schema, seed=0)


@pytest.mark.parametrize("kind", list(GeneratorKind))
def test_sampling_is_deterministic(kind: GeneratorKind, small_dataset) -> None:
    rows = _largest_subgroup(small_dataset)
    a = generators.sample(generators.fit(kind, rows, small_dataset.schema, seed=9), 300, seed=10)
    b = generators.sample(generators.fit(kind, rows, small_dataset.schema, seed=9), 300, seed=10)
    assert a.equals(b)
    c = generators.sample(generators.fit(kind, rows, small_dataset.schema, seed=9), 300, seed=11)
    assert not a.equals(c)


@pytest.mark.parametrize("kind", list(GeneratorKind))
def test_sample_zero_rows(kind: GeneratorKind, small_dataset) -> None:
    model = generators.fit(kind, _largest_subgroup(small_dataset), small_dataset.schema, seed=0)
    batch = generators.sample(model, 0, seed=0)
    assert len(batch) == 0
    assert list(batch.columns) == list(small_dataset.schema.names)
    with pytest.raises(errors.UsageError):
        generators.sample(model, -1, seed=0)


def test_fit_rejects_wrong_shape(small_dataset) -> None:
    with pytest.raises(errors.SchemaMismatch):
        generators.fit("cart", small_dataset.matrix()[:, :3], small_dataset.schema, seed=0)


def test_parse_kinds() -> None:
    assert generators.parse_kinds("cart, smote-nc") == [GeneratorKind.CART_CHAIN, GeneratorKind.SMOTE_NC]
    with pytest.raises(ValueError):
        generators.parse_kinds("gan")


def test_fit_and_sample_plan_matches_plan(small_dataset) -> None:
    part = dataset.partition(small_dataset)
    plan = strategies.plan("class", strategies.GroupClassCounts.from_partition(part))
    batches = generators.fit_and_sample_plan("cart", small_dataset, part, plan, seed=4)
    assert set(batches) == set(part.keys())
    for key, batch in batches.items():
        assert len(batch) == plan.to_sample[key]
        if len(batch):
            assert (batch["income"] == key.class_label).all()
            assert (batch["sex"] == key.protected_values[0]).all()

    augmented = generators.synthesize("cart", small_dataset, plan, part, seed=4)
    assert len(augmented) == len(small_dataset) + plan.total_synthetic
    after = dataset.partition(augmented).counts()
    for g in {k.protected_values for k in part.keys()}:
        assert after[SubgroupKey(g, 0)] == after[SubgroupKey(g, 1)]


def test_fit_and_sample_plan_annotates_subgroup() -> None:
    rows = ([(i, "Male", "no") for i in range(5)] + [(i, "Male", "yes") for i in range(5)]
            + [(i, "Female", "no") for i in range(5)] + [(9, "Female", "yes")])
    d = build_dataset(rows, ADULT_LIKE)
    part = dataset.partition(d)
    plan = strategies.plan("class", strategies.GroupClassCounts.from_partition(part))
    with pytest.raises(errors.TooFewRows) as info:
        generators.fit_and_sample_plan("cart", d, part, plan, seed=0)
    assert info.value.key == SubgroupKey((0,), 1)
    assert "sex=Female" in str(info.value)


def test_fit_and_sample_plan_reuses_cached_models(small_dataset) -> None:
    part = dataset.partition(small_dataset)
    counts = strategies.GroupClassCounts.from_partition(part)
    cache = ModelCache()
    seen: list[SubgroupKey] = []
    for kind in ("class", "class-protected"):
        generators.fit_and_sample_plan("copula", small_dataset, part, strategies.plan(kind, counts),
                                       seed=1, cache=cache, on_fit=lambda key, ids: seen.append(key))
    assert cache.hits > 0
    assert len(cache) == cache.misses
    assert seen
