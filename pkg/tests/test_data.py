import itertools
import json

import numpy as np
import pytest

from cleval.data import (
    disjoint_class_split,
    load_cifar_binary,
    load_csv,
    random_project,
    save_csv,
    synth_gaussians,
)
from cleval.errors import ContractViolation, DataFormatError

from conftest import tiny_dataset


class TestCifarLoader:
    def test_single_record_cifar10(self, tmp_path):
        path = tmp_path / "one.bin"
        path.write_bytes(bytes([7]) + b"\xff" * 3072)
        ds = load_cifar_binary(path, "cifar10")
        assert ds.num_examples == 1
        assert ds.labels[0] == 7
        assert ds.features.shape == (1, 3072)
        assert np.all(ds.features == 1.0)

    def test_cifar100_uses_fine_label(self, tmp_path):
        path = tmp_path / "one100.bin"
        path.write_bytes(bytes([3, 42]) + bytes(3072))
        ds = load_cifar_binary(path, "cifar100-fine")
        assert list(ds.labels) == [42]

    def test_cifar100_two_records(self, tmp_path):
        path = tmp_path / "two.bin"
        path.write_bytes((bytes([0, 1]) + bytes(3072)) * 2)
        assert path.stat().st_size == 6148
        assert load_cifar_binary(path, "cifar100-fine").num_examples == 2

    def test_truncated_file_names_offset(self, tmp_path):
        path = tmp_path / "trunc.bin"
        path.write_bytes(bytes([1]) + b"\x00" * 3072 + b"\x01\x02")
        with pytest.raises(DataFormatError, match="byte offset 3073"):
            load_cifar_binary(path, "cifar10")

    def test_label_out_of_range_names_offset(self, tmp_path):
        path = tmp_path / "bad.bin"
        good = bytes([3]) + bytes(3072)
        bad = bytes([12]) + bytes(3072)
        path.write_bytes(good + bad)
        with pytest.raises(DataFormatError, match="byte offset 3073"):
            load_cifar_binary(path, "cifar10")

    def test_pixel_scaling(self, tmp_path):
        path = tmp_path / "gray.bin"
        path.write_bytes(bytes([0]) + bytes([51]) * 3072)
        ds = load_cifar_binary(path, "cifar10")
        assert np.allclose(ds.features, 51 / 255)


class TestCsvLoader:
    def test_roundtrip_single_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("label,f0,f1\n2,0.5,1.5\n")
        ds = load_csv(path)
        assert ds.num_examples == 1
        assert ds.labels[0] == 2
        assert list(ds.features[0]) == [0.5, 1.5]

    def test_empty_body(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("label,f0\n")
        with pytest.raises(DataFormatError, match="no examples"):
            load_csv(path)

    def test_ragged_row_reports_line(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("label,f0,f1\n1,0.0,0.0\n2,0.0\n")
        with pytest.raises(DataFormatError, match="line 3"):
            load_csv(path)

    def test_non_numeric_reports_line(self, tmp_path):
        path = tmp_path / "text.csv"
        path.write_text("label,f0\n1,abc\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_csv(path)

    def test_header_required(self, tmp_path):
        path = tmp_path / "nohdr.csv"
        path.write_text("x,f0\n1,2\n")
        with pytest.raises(DataFormatError, match="line 1"):
            load_csv(path)

    def test_save_then_load_roundtrips(self, tmp_path, small_dataset):
        path = tmp_path / "out.csv"
        save_csv(small_dataset, path)
        back = load_csv(path)
        assert np.array_equal(back.labels, small_dataset.labels)
        assert np.array_equal(back.features, small_dataset.features)
        meta = json.loads((tmp_path / "out.csv.meta.json").read_text())
        assert meta["num_classes"] == 4
        assert meta["dim"] == 8


class TestSynthGaussians:
    def test_deterministic_bytes(self):
        a = synth_gaussians(5, 8, 10, 2.0, seed=99)
        b = synth_gaussians(5, 8, 10, 2.0, seed=99)
        assert a.features.tobytes() == b.features.tobytes()
        assert np.array_equal(a.labels, b.labels)

    def test_seed_changes_data(self):
        a = synth_gaussians(5, 8, 10, 2.0, seed=1)
        b = synth_gaussians(5, 8, 10, 2.0, seed=2)
        assert a.features.tobytes() != b.features.tobytes()

    def test_shapes_and_counts(self):
        ds = synth_gaussians(6, 4, 12, 1.0, seed=0)
        assert ds.features.shape == (72, 4)
        assert ds.class_counts() == {c: 12 for c in range(6)}

    def test_preconditions(self):
        with pytest.raises(ContractViolation):
            synth_gaussians(1, 4, 10, 1.0, seed=0)
        with pytest.raises(ContractViolation):
            synth_gaussians(3, 4, 2, 1.0, seed=0)
        with pytest.raises(ContractViolation):
            synth_gaussians(3, 4, 10, 0.0, seed=0)

    def test_class_means_separated(self, blob_dataset):
        # separation 4 with unit variance: class means ~4 apart from origin
        for c in range(3):
            mean = blob_dataset.features[blob_dataset.labels == c].mean(axis=0)
            assert 3.0 < np.linalg.norm(mean) < 5.0

    def _single_task_accuracy(self, dataset):
        from cleval.learners import make_learner
        from cleval.scenario import ScenarioSpec, make_scenario

        n = len(dataset.class_set)
        seq = make_scenario(dataset, ScenarioSpec(n, n, 0.2), list(dataset.class_set), seed=6)
        learner = make_learner(
            "finetune",
            {
                "Epoch": 10, "LR": 0.1, "LR Scheduler": "Cosine", "LR decay": 0.1,
                "Batch size": 32, "Weigh decay": 0.0005,
            },
        )
        learner.train_task(0, seq.tasks[0], 11)
        return learner.evaluate_upto([seq.tasks[0].val])

    def test_separated_blobs_are_learnable(self, blob_dataset):
        # oracle-established during fixture design: widely separated
        # Gaussians are near-linearly separable
        assert self._single_task_accuracy(blob_dataset) >= 0.95

    def test_vanishing_separation_gives_chance_accuracy(self):
        near_zero = synth_gaussians(4, 8, 40, 1e-9, seed=2)
        acc = self._single_task_accuracy(near_zero)
        assert acc <= 0.45  # chance is 0.25 for 4 classes


class TestDisjointSplit:
    def test_half_split_is_disjoint_and_exhaustive(self, blob_dataset):
        pair = disjoint_class_split(blob_dataset, 0.5, seed=3)
        tuning_src = set(pair.tuning.source_labels.values())
        eval_src = set(pair.evaluation.source_labels.values())
        assert tuning_src.isdisjoint(eval_src)
        assert tuning_src | eval_src == set(blob_dataset.class_set)
        assert len(tuning_src) == 5

    def test_two_class_minimal_case(self):
        ds = tiny_dataset(2)
        pair = disjoint_class_split(ds, 0.5, seed=0)
        assert len(pair.tuning.class_set) == 1
        assert len(pair.evaluation.class_set) == 1

    def test_same_seed_identical_partition(self, small_dataset):
        a = disjoint_class_split(small_dataset, 0.5, seed=17)
        b = disjoint_class_split(small_dataset, 0.5, seed=17)
        assert a.tuning.source_labels == b.tuning.source_labels
        assert np.array_equal(a.tuning.features, b.tuning.features)

    def test_dense_reindex(self, small_dataset):
        pair = disjoint_class_split(small_dataset, 0.5, seed=2)
        assert pair.tuning.class_set == (0, 1)
        assert pair.evaluation.class_set == (0, 1)

    def test_single_class_rejected(self):
        ds = tiny_dataset(2).subset(np.repeat([True, False], 4))
        with pytest.raises(ContractViolation):
            disjoint_class_split(ds, 0.5, seed=0)

    def test_fuzzed_invariants(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            n_classes = int(rng.integers(2, 15))
            ds = tiny_dataset(n_classes, per_class=2)
            fraction = float(rng.uniform(0.05, 0.95))
            pair = disjoint_class_split(ds, fraction, seed=int(rng.integers(1 << 30)))
            t_src = set(pair.tuning.source_labels.values())
            e_src = set(pair.evaluation.source_labels.values())
            assert t_src.isdisjoint(e_src)
            assert t_src | e_src == set(ds.class_set)
            assert pair.tuning.num_examples + pair.evaluation.num_examples == ds.num_examples


class TestRandomProject:
    def test_standardized_output(self, small_dataset):
        out = random_project(small_dataset, 8, seed=21)
        kept = out.features.std(axis=0) > 0
        assert np.allclose(out.features.mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(out.features.std(axis=0)[kept], 1.0, atol=1e-9)

    def test_labels_untouched(self, small_dataset):
        out = random_project(small_dataset, 3, seed=4)
        assert np.array_equal(out.labels, small_dataset.labels)

    def test_deterministic(self, small_dataset):
        a = random_project(small_dataset, 8, seed=5)
        b = random_project(small_dataset, 8, seed=5)
        assert a.features.tobytes() == b.features.tobytes()

    def test_distance_distortion_bounded(self):
        # 100-point fixture, out_dim 128: pairwise-distance ratios stay
        # within a factor of 2 after removing the global scale
        ds = synth_gaussians(10, 32, 10, 3.0, seed=8)
        out = random_project(ds, 128, seed=8)
        idx = list(itertools.combinations(range(0, 100, 7), 2))
        before = np.array([np.linalg.norm(ds.features[i] - ds.features[j]) for i, j in idx])
        after = np.array([np.linalg.norm(out.features[i] - out.features[j]) for i, j in idx])
        ratio = after / before
        ratio /= np.median(ratio)
        assert ratio.max() < 2.0
        assert ratio.min() > 0.5

    def test_zero_variance_dimension_skipped(self):
        from cleval.data import LabeledDataset

        features = np.tile([1.0, 2.0, 3.0], (5, 1))
        ds = LabeledDataset(features=features, labels=np.zeros(5, dtype=np.int64), name="flat")
        out = random_project(ds, 4, seed=1)
        assert np.all(np.isfinite(out.features))
        assert np.allclose(out.features, 0.0)
