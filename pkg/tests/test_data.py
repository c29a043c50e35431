import numpy as np
import pytest

from spmtl.core import TaskKind
from spmtl.data import (
    CsvFormatError,
    CsvSchema,
    SplitSpec,
    SynConfig,
    generate_syn1,
    generate_syn2,
    kfold,
    load_csv_dataset,
    split,
    syn1_latents,
    syn2_latents,
)
from spmtl.solvers import AnchoredPenalty, solve_penalized_least_squares
from spmtl.core import task_average_loss


def datasets_equal(a, b):
    if a.n_tasks != b.n_tasks:
        return False
    return all(
        np.array_equal(ta.X, tb.X) and np.array_equal(ta.y, tb.y)
        for ta, tb in zip(a.tasks, b.tasks)
    )


class TestSyn1:
    def test_deterministic(self):
        cfg = SynConfig.syn1(seed=11)
        assert datasets_equal(generate_syn1(cfg), generate_syn1(cfg))

    def test_shapes_and_defaults(self):
        data = generate_syn1(SynConfig.syn1(seed=0))
        assert data.n_tasks == 30
        assert data.d == 20
        assert all(t.n_examples == 15 for t in data)

    def test_latents_match_generator_stream(self):
        cfg = SynConfig.syn1(seed=5)
        W, hard = syn1_latents(cfg)
        assert W.shape == (20, 30)
        assert hard.sum() == 10  # a third of 30 tasks
        # regenerating with the same seed gives the same latents
        W2, hard2 = syn1_latents(cfg)
        np.testing.assert_array_equal(W, W2)
        np.testing.assert_array_equal(hard, hard2)

    def test_equal_sigmas_erase_difficulty_split(self):
        # with sigma_hard == sigma_easy the two designated sets have
        # statistically indistinguishable residual variance
        hard_vars, easy_vars = [], []
        for seed in range(20):
            cfg = SynConfig.syn1(seed=seed, sigma_easy=5.0, sigma_hard=5.0, n_per_task=50)
            data = generate_syn1(cfg)
            W, hard = syn1_latents(cfg)
            for i, task in enumerate(data):
                resid = task.y - task.X @ W[:, i]
                (hard_vars if hard[i] else easy_vars).append(resid.var())
        ratio = np.mean(hard_vars) / np.mean(easy_vars)
        assert 0.9 < ratio < 1.1

    def test_hard_tasks_have_higher_ridge_training_error(self):
        diffs = []
        for seed in range(20):
            cfg = SynConfig.syn1(seed=seed)
            data = generate_syn1(cfg)
            _, hard = syn1_latents(cfg)
            errs = []
            for task in data:
                pen = AnchoredPenalty(M=np.eye(task.d), m=np.zeros(task.d), gamma=0.1)
                w = solve_penalized_least_squares(task, pen)
                errs.append(task_average_loss(task, w))
            errs = np.array(errs)
            diffs.append(errs[hard].mean() - errs[~hard].mean())
        assert np.mean(diffs) > 0


class TestSyn2:
    def test_support_size_equals_task_index(self):
        cfg = SynConfig.syn2(seed=3)
        W = syn2_latents(cfg)
        for t in range(30):
            assert np.count_nonzero(W[:, t]) == t + 1

    def test_deterministic(self):
        cfg = SynConfig.syn2(seed=4)
        assert datasets_equal(generate_syn2(cfg), generate_syn2(cfg))

    def test_requires_square_setup(self):
        with pytest.raises(ValueError):
            generate_syn2(SynConfig.syn2(seed=0, d=10))

    def test_shared_prefix_across_tasks(self):
        W = syn2_latents(SynConfig.syn2(seed=9))
        # column t+1 extends column t by one coefficient
        for t in range(29):
            np.testing.assert_array_equal(W[: t + 1, t], W[: t + 1, t + 1])


def write_csv(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestCsvLoader:
    def test_school_like_column_count(self, tmp_path):
        # categorical levels totalling 19 plus 7 numeric features -> 26, +1 bias = 27
        rng = np.random.default_rng(0)
        header = "school,score," + ",".join(f"n{i}" for i in range(7)) + ",catA,catB"
        lines = [header]
        cat_a = [f"a{i}" for i in range(10)]
        cat_b = [f"b{i}" for i in range(9)]
        for row in range(60):
            nums = ",".join(f"{v:.3f}" for v in rng.standard_normal(7))
            lines.append(
                f"{row % 3},{rng.standard_normal():.3f},{nums},"
                f"{cat_a[row % 10]},{cat_b[row % 9]}"
            )
        path = write_csv(tmp_path, "school.csv", "\n".join(lines) + "\n")
        schema = CsvSchema(
            task_column="school",
            target_column="score",
            categorical_columns=("catA", "catB"),
            add_bias=True,
        )
        data = load_csv_dataset(path, schema)
        assert data.d == 27
        assert data.n_tasks == 3
        np.testing.assert_array_equal(np.vstack([t.X for t in data])[:, -1], 1.0)

    def test_plain_numeric_single_task(self, tmp_path):
        path = write_csv(tmp_path, "t.csv", "task,y,f1,f2\n7,1.5,2.0,3.0\n7,-1.0,0.5,0.25\n")
        data = load_csv_dataset(path, CsvSchema(task_column="task", target_column="y"))
        assert data.n_tasks == 1
        assert data.tasks[0].task_id == 7
        np.testing.assert_allclose(data.tasks[0].X, [[2.0, 3.0], [0.5, 0.25]])
        np.testing.assert_allclose(data.tasks[0].y, [1.5, -1.0])

    def test_two_level_categorical_one_hot(self, tmp_path):
        text = "task,y,color\n0,1.0,red\n0,2.0,blue\n0,3.0,red\n0,4.0,blue\n"
        path = write_csv(tmp_path, "c.csv", text)
        schema = CsvSchema(task_column="task", target_column="y", categorical_columns=("color",))
        data = load_csv_dataset(path, schema)
        # first occurrence order: red then blue
        np.testing.assert_array_equal(
            data.tasks[0].X, [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]
        )

    def test_ragged_row_reports_line(self, tmp_path):
        path = write_csv(tmp_path, "r.csv", "task,y,f\n0,1.0,2.0\n0,1.0\n")
        with pytest.raises(CsvFormatError, match=":3"):
            load_csv_dataset(path, CsvSchema(task_column="task", target_column="y"))

    def test_non_numeric_reports_line_and_column(self, tmp_path):
        path = write_csv(tmp_path, "n.csv", "task,y,f\n0,1.0,2.0\n0,oops,1.0\n")
        with pytest.raises(CsvFormatError, match=r":3.*'y'"):
            load_csv_dataset(path, CsvSchema(task_column="task", target_column="y"))

    def test_unknown_schema_column(self, tmp_path):
        path = write_csv(tmp_path, "u.csv", "task,y\n0,1.0\n")
        with pytest.raises(CsvFormatError, match="missing"):
            load_csv_dataset(path, CsvSchema(task_column="task", target_column="missing"))

    def test_binary_labels_normalized(self, tmp_path):
        path = write_csv(tmp_path, "b.csv", "task,y,f\n0,0,1.0\n0,1,2.0\n")
        schema = CsvSchema(
            task_column="task", target_column="y", kind=TaskKind.BINARY_CLASSIFICATION
        )
        data = load_csv_dataset(path, schema)
        np.testing.assert_array_equal(data.tasks[0].y, [-1.0, 1.0])

    def test_column_order_stable(self, tmp_path):
        text = "task,y,cat\n0,1.0,x\n0,2.0,y\n0,3.0,z\n"
        path = write_csv(tmp_path, "s.csv", text)
        schema = CsvSchema(task_column="task", target_column="y", categorical_columns=("cat",))
        a = load_csv_dataset(path, schema)
        b = load_csv_dataset(path, schema)
        np.testing.assert_array_equal(a.tasks[0].X, b.tasks[0].X)


def toy_dataset(T=3, n=20, d=4, seed=0, kind=TaskKind.REGRESSION):
    from spmtl.core import MultitaskDataset, TaskDataset

    rng = np.random.default_rng(seed)
    tasks = []
    for t in range(T):
        X = rng.standard_normal((n, d))
        if kind is TaskKind.REGRESSION:
            y = rng.standard_normal(n)
        else:
            y = np.concatenate([np.ones(n // 2), -np.ones(n - n // 2)])
        tasks.append(TaskDataset(task_id=t, X=X, y=y, kind=kind))
    return MultitaskDataset.of(tasks)


class TestSplit:
    def test_three_quarter_split(self):
        data = toy_dataset(n=20)
        (train, test), = split(data, SplitSpec(seed=0, train_fraction=0.75))
        assert all(t.n_examples == 15 for t in train)
        assert all(t.n_examples == 5 for t in test)

    def test_repeats_reproducible(self):
        data = toy_dataset()
        spec = SplitSpec(seed=42, train_count=12, n_repeats=10)
        a = split(data, spec)
        b = split(data, spec)
        assert len(a) == 10
        for (tr_a, te_a), (tr_b, te_b) in zip(a, b):
            assert datasets_equal(tr_a, tr_b) and datasets_equal(te_a, te_b)

    def test_repeats_differ_from_each_other(self):
        data = toy_dataset()
        a, b = split(data, SplitSpec(seed=1, train_count=10, n_repeats=2))
        assert not datasets_equal(a[0], b[0])

    def test_disjoint_and_covering(self):
        data = toy_dataset(n=13)
        (train, test), = split(data, SplitSpec(seed=3, train_fraction=0.6))
        for tr, te, orig in zip(train, test, data):
            assert tr.n_examples + te.n_examples == orig.n_examples
            combined = np.vstack([tr.X, te.X])
            assert np.array_equal(
                np.sort(combined.ravel()), np.sort(orig.X.ravel())
            )

    def test_stratified_preserves_ratio(self):
        data = toy_dataset(T=1, n=80, kind=TaskKind.BINARY_CLASSIFICATION)
        (train, _), = split(data, SplitSpec(seed=5, train_fraction=0.5, stratified=True))
        y = train.tasks[0].y
        assert (y > 0).sum() == 20 and (y < 0).sum() == 20

    def test_stratified_requires_classification(self):
        data = toy_dataset()
        with pytest.raises(ValueError):
            split(data, SplitSpec(seed=0, train_fraction=0.5, stratified=True))

    def test_train_count_too_large_names_task(self):
        data = toy_dataset(n=10)
        with pytest.raises(ValueError, match="task 0"):
            split(data, SplitSpec(seed=0, train_count=10))

    def test_exactly_one_sizing_mode(self):
        with pytest.raises(ValueError):
            SplitSpec(seed=0)
        with pytest.raises(ValueError):
            SplitSpec(seed=0, train_fraction=0.5, train_count=3)


class TestKfold:
    def test_fold_sizes(self):
        data = toy_dataset(n=15)
        folds = kfold(data, k=3, seed=0)
        assert len(folds) == 3
        for _, val in folds:
            assert all(t.n_examples == 5 for t in val)

    def test_union_of_validation_folds_is_everything(self):
        data = toy_dataset(n=14)
        folds = kfold(data, k=3, seed=1)
        for i, orig in enumerate(data.tasks):
            rows = np.vstack([val.tasks[i].X for _, val in folds])
            assert np.array_equal(np.sort(rows.ravel()), np.sort(orig.X.ravel()))

    def test_deterministic(self):
        data = toy_dataset()
        a = kfold(data, k=4, seed=7)
        b = kfold(data, k=4, seed=7)
        for (tr_a, va_a), (tr_b, va_b) in zip(a, b):
            assert datasets_equal(tr_a, tr_b) and datasets_equal(va_a, va_b)

    def test_task_smaller_than_k(self):
        data = toy_dataset(n=3)
        with pytest.raises(ValueError, match="task"):
            kfold(data, k=4, seed=0)
