from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from _helpers import ADULT_LIKE, build_dataset
from scripts import dataset, errors
from scripts.dataset import ColumnKind, ColumnRole, SubgroupKey

SCHEMA = dataset.DatasetSchema.from_dict(
    {"columns": [{"name": n, "kind": k, "role": r} for n, k, r in ADULT_LIKE]}
)


def _write(tmp_path, text: str):
    path = tmp_path / "data.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_four_rows(tmp_path) -> None:
    path = _write(tmp_path, "age,sex,income\n39,Male,<=50K\n50,Female,>50K\n38,Male,<=50K\n53,Female,>50K\n")
    d = dataset.load_csv(path, SCHEMA)
    assert len(d) == 4
    assert d.n_continuous == 1
    assert d.n_discrete == 2
    assert d.categories["sex"] == ("Female", "Male")
    assert d.categories["income"] == ("<=50K", ">50K")
    assert d.labels.tolist() == [0, 1, 0, 1]
    assert d.frame["age"].tolist() == [39.0, 50.0, 38.0, 53.0]
    assert set(d.origin) == {"real"}


def test_load_csv_accepts_extra_columns_and_quotes(tmp_path) -> None:
    path = _write(tmp_path, 'id,age,sex,income\n1,"39.5",Male,"<=50K"\n2,41,"Female",>50K\n')
    d = dataset.load_csv(path, SCHEMA)
    assert list(d.frame.columns) == ["age", "sex", "income"]
    assert d.frame["age"].tolist() == [39.5, 41.0]


def test_load_csv_unparseable_cell(tmp_path) -> None:
    path = _write(tmp_path, "age,sex,income\n39,Male,<=50K\nabc,Female,>50K\n")
    with pytest.raises(errors.UnparseableCell) as info:
        dataset.load_csv(path, SCHEMA)
    assert info.value.row == 2
    assert info.value.column == "age"


def test_load_csv_rejects_infinite_values(tmp_path) -> None:
    path = _write(tmp_path, "age,sex,income\ninf,Male,<=50K\n3,Female,>50K\n")
    with pytest.raises(errors.UnparseableCell):
        dataset.load_csv(path, SCHEMA)


@pytest.mark.parametrize("token", ["", "NA", "?", "null"])
def test_load_csv_missing_value(tmp_path, token: str) -> None:
    path = _write(tmp_path, f"age,sex,income\n39,Male,<=50K\n40,{token},>50K\n")
    with pytest.raises(errors.MissingValue) as info:
        dataset.load_csv(path, SCHEMA)
    assert info.value.row == 2
    assert info.value.column == "sex"


def test_load_csv_ragged_row_is_malformed(tmp_path) -> None:
    path = _write(tmp_path, "age,sex,income\n39,Male,<=50K\n50,Female,>50K,extra\n")
    with pytest.raises(errors.MalformedCsv) as info:
        dataset.load_csv(path, SCHEMA)
    assert info.value.row == 2
    assert info.value.exit_code == 2


def test_load_csv_invalid_utf8_is_malformed(tmp_path) -> None:
    path = tmp_path / "data.csv"
    path.write_bytes(b"age,sex,income\n39,Male,<=50K\n38,Male,<=50K\n50,F\xffmale,>50K\n")
    with pytest.raises(errors.MalformedCsv) as info:
        dataset.load_csv(path, SCHEMA)
    assert info.value.row == 3


def test_load_csv_missing_column(tmp_path) -> None:
    path = _write(tmp_path, "age,income\n39,<=50K\n")
    with pytest.raises(errors.MissingColumn) as info:
        dataset.load_csv(path, SCHEMA)
    assert info.value.name == "sex"


def test_load_csv_target_not_binary(tmp_path) -> None:
    path = _write(tmp_path, "age,sex,income\n39,Male,low\n40,Female,mid\n41,Male,high\n")
    with pytest.raises(errors.TargetNotBinary):
        dataset.load_csv(path, SCHEMA)


def test_frozen_categories_reject_unseen_values(tmp_path) -> None:
    train = dataset.load_csv(_write(tmp_path, "age,sex,income\n39,Male,<=50K\n50,Female,>50K\n"), SCHEMA)
    other = tmp_path / "test.csv"
    other.write_text("age,sex,income\n39,Male,<=50K\n50,Other,>50K\n", encoding="utf-8")
    with pytest.raises(errors.UnseenCategory) as info:
        dataset.load_csv(other, SCHEMA, train.categories)
    assert info.value.row == 2


def test_load_csv_is_deterministic(tmp_path) -> None:
    path = _write(tmp_path, "age,sex,income\n39,Male,<=50K\n50,Female,>50K\n38,Male,>50K\n")
    a = dataset.load_csv(path, SCHEMA)
    b = dataset.load_csv(path, SCHEMA)
    assert a.frame.equals(b.frame)
    assert dict(a.categories) == dict(b.categories)


def test_schema_validation() -> None:
    with pytest.raises(errors.SchemaError):
        dataset.DatasetSchema.from_dict([
            {"name": "a", "kind": "discrete", "role": "target"},
            {"name": "b", "kind": "discrete", "role": "target"},
        ])
    with pytest.raises(errors.SchemaError):
        dataset.DatasetSchema.from_dict([
            {"name": "a", "kind": "continuous", "role": "protected"},
            {"name": "y", "kind": "discrete", "role": "target"},
        ])
    with pytest.raises(errors.SchemaError):
        dataset.DatasetSchema.from_dict([
            {"name": "a", "kind": "discrete", "role": "feature"},
            {"name": "y", "kind": "discrete", "role": "target"},
        ])
    with pytest.raises(errors.SchemaError):
        dataset.DatasetSchema.from_dict([
            {"name": "a", "kind": "discrete", "role": "protected"},
            {"name": "a", "kind": "discrete", "role": "target"},
        ])


def test_with_protected_override() -> None:
    schema = dataset.DatasetSchema.from_dict([
        {"name": "sex", "kind": "discrete", "role": "protected"},
        {"name": "race", "kind": "discrete"},
        {"name": "income", "kind": "discrete", "role": "target"},
    ])
    both = schema.with_protected(["sex", "race"])
    assert both.protected == ("sex", "race")
    only_race = schema.with_protected(["race"])
    assert only_race.protected == ("race",)
    assert only_race.column("sex").role is ColumnRole.FEATURE
    with pytest.raises(errors.SchemaError):
        schema.with_protected(["income"])


def test_partition_single_protected_has_four_keys(small_dataset) -> None:
    part = dataset.partition(small_dataset)
    assert len(part.keys()) == 4
    rows = np.concatenate([part.rows(k) for k in part.keys()])
    assert sorted(rows.tolist()) == list(range(len(small_dataset)))


def test_partition_two_protected_has_eight_keys(intersectional_dataset) -> None:
    part = dataset.partition(intersectional_dataset)
    assert len(part.keys()) == 8
    total = sum(part.counts().values())
    assert total == len(intersectional_dataset) == part.source_row_count
    for key in part.keys():
        rows = part.rows(key)
        assert np.all(np.diff(rows) > 0)
        assert np.all(intersectional_dataset.labels[rows] == key.class_label)


def test_partition_degenerate_single_subgroup() -> None:
    d = build_dataset(
        [(1, "Male", "no"), (2, "Male", "no"), (3, "Female", "yes"), (4, "Male", "no")],
        ADULT_LIKE,
    )
    only = d.take(np.array([0, 1, 3]))
    part = dataset.partition(only)
    counts = part.counts()
    assert len(counts) == 4
    assert counts[SubgroupKey((1,), 0)] == 3
    assert sum(1 for n in counts.values() if n == 0) == 3


def _copy_batch(d: dataset.Dataset, rows: np.ndarray, n: int) -> pd.DataFrame:
    return d.frame.iloc[np.resize(rows, n)].reset_index(drop=True)


def test_augment_appends_synthetic_rows(mixed_dataset) -> None:
    real = mixed_dataset.take(np.arange(1500))
    part = dataset.partition(real)
    key = max(part.keys(), key=lambda k: len(part.rows(k)))
    out = dataset.augment(real, {key: _copy_batch(real, part.rows(key), 500)})
    assert len(out) == 2000
    assert int(out.is_synthetic.sum()) == 500
    assert not out.is_synthetic[:1500].any()
    assert np.all(out.row_ids[1500:] == -1)


def test_augment_empty_batches_is_identity(small_dataset) -> None:
    part = dataset.partition(small_dataset)
    empty = {k: small_dataset.frame.iloc[:0] for k in part.keys()}
    assert dataset.augment(small_dataset, empty) is small_dataset
    assert dataset.augment(small_dataset, {}) is small_dataset


def test_augment_rejects_label_mismatch(small_dataset) -> None:
    part = dataset.partition(small_dataset)
    key = SubgroupKey((0,), 1)
    wrong = _copy_batch(small_dataset, part.rows(SubgroupKey((0,), 0)), 5)
    with pytest.raises(errors.SubgroupLabelMismatch):
        dataset.augment(small_dataset, {key: wrong})


def test_augment_rejects_out_of_range_category(small_dataset) -> None:
    part = dataset.partition(small_dataset)
    key = SubgroupKey((0,), 1)
    batch = _copy_batch(small_dataset, part.rows(key), 3)
    batch["d0"] = 99
    with pytest.raises(errors.SchemaMismatch):
        dataset.augment(small_dataset, {key: batch})


def test_partition_of_augmented_adds_batch_sizes(small_dataset) -> None:
    part = dataset.partition(small_dataset)
    sizes = {k: (i * 7) % 11 for i, k in enumerate(part.keys())}
    batches = {k: _copy_batch(small_dataset, part.rows(k), n) for k, n in sizes.items()
               if len(part.rows(k))}
    augmented = dataset.augment(small_dataset, batches)
    after = dataset.partition(augmented).counts()
    for key, n in part.counts().items():
        added = len(batches[key]) if key in batches else 0
        assert after[key] == n + added


def test_stratified_kfold_fold_sizes() -> None:
    rows = [(i, "Male" if i % 2 else "Female", "yes" if i < 100 else "no") for i in range(300)]
    d = build_dataset(rows, ADULT_LIKE)
    folds = dataset.stratified_kfold(d, 3, seed=1)
    for fold in range(3):
        test = folds.test_indices(fold)
        assert len(test) == 100
        assert 33 <= int(d.labels[test].sum()) <= 34
    assert np.array_equal(folds.fold_of_row, dataset.stratified_kfold(d, 3, seed=1).fold_of_row)


def test_stratified_kfold_proportions_and_seeds(mixed_dataset) -> None:
    a = dataset.stratified_kfold(mixed_dataset, 3, seed=1)
    b = dataset.stratified_kfold(mixed_dataset, 3, seed=2)
    assert not np.array_equal(a.fold_of_row, b.fold_of_row)
    overall = mixed_dataset.labels.mean()
    for folds in (a, b):
        for fold, train, test in folds.splits():
            assert len(np.intersect1d(train, test)) == 0
            assert len(train) + len(test) == len(mixed_dataset)
            assert abs(mixed_dataset.labels[test].mean() - overall) <= 0.02


def test_stratified_kfold_too_few_rows_per_class() -> None:
    rows = [(i, "Male" if i % 2 else "Female", "yes" if i < 3 else "no") for i in range(40)]
    d = build_dataset(rows, ADULT_LIKE)
    with pytest.raises(errors.TooFewRowsPerClass):
        dataset.stratified_kfold(d, 5, seed=0)


def test_write_csv_round_trip(tmp_path, small_dataset) -> None:
    path = tmp_path / "out.csv"
    small_dataset.write_csv(path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    assert list(raw.columns) == list(small_dataset.schema.names) + [dataset.ORIGIN_COLUMN]
    again = dataset.load_csv(path, small_dataset.schema)
    assert again.frame.equals(small_dataset.frame)


def test_write_csv_keeps_real_cells_verbatim(tmp_path) -> None:
    path = _write(tmp_path, "id,age,sex,income\nr1,30,Male,<=50K\nr2,41.50,Female,>50K\nr3,28,Male,>50K\n")
    d = dataset.load_csv(path, SCHEMA)
    batch = d.frame.iloc[[1]].reset_index(drop=True)
    out = dataset.augment(d, {SubgroupKey((0,), 1): batch})
    written = tmp_path / "out.csv"
    out.write_csv(written)
    raw = pd.read_csv(written, dtype=str, keep_default_na=False)
    assert list(raw.columns) == ["id", "age", "sex", "income", dataset.ORIGIN_COLUMN]
    assert raw["id"].tolist() == ["r1", "r2", "r3", ""]
    assert raw["age"].tolist() == ["30", "41.50", "28", "41.5"]
    assert raw[dataset.ORIGIN_COLUMN].tolist() == ["real", "real", "real", "synthetic"]


def test_write_csv_without_synthetic_rows_copies_input(tmp_path) -> None:
    text = "id,age,sex,income\nr1,30,Male,<=50K\nr2,41.50,Female,>50K\n"
    d = dataset.load_csv(_write(tmp_path, text), SCHEMA)
    written = tmp_path / "out.csv"
    d.write_csv(written, with_origin=False)
    assert written.read_text(encoding="utf-8") == text


def test_to_frame_decodes_categories(small_dataset) -> None:
    frame = small_dataset.to_frame()
    assert set(frame["income"]) == {"<=50K", ">50K"}
    assert frame["x0"].dtype == np.float64
    encoded = small_dataset.to_frame(decoded=False, with_origin=False)
    assert list(encoded.columns) == list(small_dataset.schema.names)


def test_column_kinds(small_dataset) -> None:
    schema = small_dataset.schema
    assert schema.column("x0").kind is ColumnKind.CONTINUOUS
    assert schema.features == ("x0", "x1", "x2", "d0", "d1", "d2")
    assert schema.target == "income"
