import numpy as np
import pytest

from cleval.errors import ConfigurationError, ContractViolation
from cleval.scenario import (
    ExemplarMemory,
    ScenarioSpec,
    make_scenario,
    rebuild_exemplar_memory,
    shuffle_ordering,
)

from conftest import tiny_dataset


class TestShuffleOrdering:
    def test_singleton(self):
        assert shuffle_ordering([3], seed=0) == [3]

    def test_is_permutation(self):
        classes = list(range(50))
        out = shuffle_ordering(classes, seed=123)
        assert sorted(out) == classes

    def test_deterministic_and_seed_sensitive(self):
        classes = list(range(50))
        assert shuffle_ordering(classes, 0) == shuffle_ordering(classes, 0)
        assert shuffle_ordering(classes, 0) != shuffle_ordering(classes, 1)

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            shuffle_ordering([], seed=0)


class TestScenarioSpec:
    def test_presets(self):
        assert ScenarioSpec.preset("10tasks").task_sizes(50) == [5] * 10
        assert ScenarioSpec.preset("6tasks").task_sizes(50) == [25, 5, 5, 5, 5, 5]

    def test_divisibility_error_names_residue(self):
        spec = ScenarioSpec(25, 4)
        with pytest.raises(ConfigurationError, match="residue 1"):
            spec.task_sizes(50)

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            ScenarioSpec.preset("42tasks")

    def test_invariants(self):
        with pytest.raises(ContractViolation):
            ScenarioSpec(1, 2)
        with pytest.raises(ContractViolation):
            ScenarioSpec(2, 2, val_fraction=0.5)


class TestMakeScenario:
    def test_task_structure(self):
        ds = tiny_dataset(6, per_class=5)
        ordering = shuffle_ordering(list(ds.class_set), 3)
        seq = make_scenario(ds, ScenarioSpec(2, 2, 0.25), ordering, seed=9)
        assert [len(t.class_ids) for t in seq.tasks] == [2, 2, 2]
        assert list(np.concatenate([t.class_ids for t in seq.tasks])) == ordering

    def test_train_val_disjoint_and_nonempty(self):
        ds = tiny_dataset(4, per_class=5)
        seq = make_scenario(ds, ScenarioSpec(2, 2, 0.2), list(ds.class_set), seed=1)
        for task in seq.tasks:
            for cls in task.class_ids:
                n_train = int((task.train.labels == cls).sum())
                n_val = int((task.val.labels == cls).sum())
                assert n_train >= 1 and n_val >= 1
                assert n_train + n_val == 5

    def test_bad_ordering_rejected(self):
        ds = tiny_dataset(4)
        with pytest.raises(ContractViolation):
            make_scenario(ds, ScenarioSpec(2, 2), [0, 1, 2, 9], seed=0)

    def test_every_example_lands_exactly_once(self):
        ds = tiny_dataset(6, per_class=4)
        seq = make_scenario(ds, ScenarioSpec(3, 3, 0.25), list(ds.class_set), seed=2)
        counted = sum(t.train.num_examples + t.val.num_examples for t in seq.tasks)
        assert counted == ds.num_examples

    def test_fuzzed_partition_invariants(self):
        rng = np.random.default_rng(40)
        for _ in range(60):
            increment = int(rng.integers(1, 4))
            tasks_after_first = int(rng.integers(1, 4))
            first = increment * int(rng.integers(1, 3))
            n_classes = first + increment * tasks_after_first
            ds = tiny_dataset(n_classes, per_class=3)
            ordering = shuffle_ordering(list(ds.class_set), int(rng.integers(1 << 30)))
            spec = ScenarioSpec(first, increment, float(rng.uniform(0.1, 0.45)))
            seq = make_scenario(ds, spec, ordering, seed=int(rng.integers(1 << 30)))
            seen: set[int] = set()
            for task in seq.tasks:
                assert seen.isdisjoint(task.class_ids)
                seen.update(task.class_ids)
            assert seen == set(ordering)
            flat = [c for t in seq.tasks for c in t.class_ids]
            assert flat == ordering


class TestExemplarMemory:
    def _rebuild_chain(self, capacity, tasks, seed=77):
        memory = ExemplarMemory(capacity=capacity)
        for t, task_ds in enumerate(tasks):
            memory = rebuild_exemplar_memory(memory, task_ds, seed + t)
        return memory

    def test_even_quota(self):
        # capacity 1000 over 10 classes: exactly 100 each
        tasks = [
            tiny_dataset(10, per_class=120).subset(
                np.repeat(np.arange(10) == c, 120), name=f"t{c}"
            )
            for c in range(10)
        ]
        memory = self._rebuild_chain(1000, tasks)
        assert memory.class_counts() == {c: 100 for c in range(10)}
        assert memory.size == 1000

    def test_remainder_goes_to_earliest(self):
        ds = tiny_dataset(3, per_class=10)
        parts = [ds.subset(ds.labels == c, name=f"c{c}") for c in range(3)]
        memory = ExemplarMemory(capacity=10)
        for part in parts:
            memory = rebuild_exemplar_memory(memory, part, 5)
        assert memory.class_counts() == {0: 4, 1: 3, 2: 3}

    def test_availability_bound(self):
        ds = tiny_dataset(2, per_class=2)
        memory = rebuild_exemplar_memory(ExemplarMemory(capacity=10), ds, 1)
        assert memory.class_counts() == {0: 2, 1: 2}

    def test_overlap_rejected(self):
        ds = tiny_dataset(2, per_class=4)
        memory = rebuild_exemplar_memory(ExemplarMemory(capacity=8), ds, 1)
        with pytest.raises(ContractViolation):
            rebuild_exemplar_memory(memory, ds, 2)

    def test_counts_depend_only_on_capacity_and_seen(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            capacity = int(rng.integers(5, 60))
            n_tasks = int(rng.integers(1, 5))
            per_class = int(rng.integers(4, 20))
            memory = ExemplarMemory(capacity=capacity)
            pools = {}
            for t in range(n_tasks):
                ds = tiny_dataset(2, per_class=per_class)
                remap = ds.labels + 2 * t
                from cleval.data import LabeledDataset

                ds = LabeledDataset(features=ds.features, labels=remap, name=f"t{t}")
                for c in np.unique(remap):
                    pools[int(c)] = per_class
                memory = rebuild_exemplar_memory(memory, ds, int(rng.integers(1 << 30)))
                quotas = memory.quotas()
                for cls, count in memory.class_counts().items():
                    assert count == min(quotas[cls], pools[cls])
                assert memory.size <= capacity
                counts = list(memory.class_counts().values())
                if all(pools[c] >= quotas[c] for c in memory.seen_classes):
                    assert max(counts) - min(counts) <= 1

    def test_rebuild_draws_only_from_store_and_new_task(self):
        ds = tiny_dataset(2, per_class=6)
        memory = rebuild_exemplar_memory(ExemplarMemory(capacity=4), ds, 3)
        feats, labels = memory.as_arrays()
        assert set(labels.tolist()) <= {0, 1}
        rows = {tuple(r) for r in ds.features}
        assert all(tuple(r) in rows for r in feats)
