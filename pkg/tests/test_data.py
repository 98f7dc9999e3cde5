import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import labels
from hyperhar.data import (MISSING, NEGATIVE, POSITIVE, LabeledInstance, LabelSpace, SplitSpec,
                           SynthConfig, apply_normalizer, conflict_rule, fit_normalizer,
                           generate_synthetic, read_instances, read_prototypes,
                           resolve_conflicts, split, write_instances, write_prototypes)
from hyperhar.errors import ConfigError
from hyperhar.graph import build_hypergraph

PHONE_SPACE = LabelSpace(("In Hand", "In Bag", "On Table"),
                       ("Sleeping", "Running", "Sitting", "Talking", "Walking"))


def inst(ctx=(), act=(), user=0, feats=(0.0,)):
    return LabeledInstance(user, np.array(feats, dtype=float),
                           labels(3, ctx), labels(5, act))


class TestLabelSpace:
    def test_sizes(self):
        assert PHONE_SPACE.num_labels == 8
        assert PHONE_SPACE.names[3] == "Sleeping"

    def test_duplicate_names(self):
        with pytest.raises(ConfigError):
            LabelSpace(("a", "b"), ("b", "c"))

    def test_default_exclusive_groups_apply_by_name(self):
        assert PHONE_SPACE.exclusive_index_groups() == [[0, 1], [0, 4]]

    def test_dict_round_trip(self):
        assert LabelSpace.from_dict(PHONE_SPACE.to_dict()) == PHONE_SPACE


class TestConflicts:
    def test_two_placements(self):
        assert conflict_rule(inst(ctx=(0, 1), act=(2,)), PHONE_SPACE) == 1

    def test_sleeping_and_running(self):
        assert conflict_rule(inst(ctx=(0,), act=(0, 1)), PHONE_SPACE) == 2

    def test_sitting_and_talking_kept(self):
        kept, report = resolve_conflicts([inst(ctx=(2,), act=(2, 3))], PHONE_SPACE)
        assert len(kept) == 1 and report.total == 0

    def test_report_counts(self):
        data = [inst(ctx=(0, 1)), inst(act=(0, 4)), inst(act=(0, 1)), inst(ctx=(0,), act=(2,))]
        kept, report = resolve_conflicts(data, PHONE_SPACE)
        assert (report.multiple_contexts, report.exclusive_activities) == (1, 2)
        assert kept == [data[3]]

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.sets(st.integers(0, 2)), st.sets(st.integers(0, 4))),
                    max_size=20))
    def test_idempotent(self, specs):
        data = [inst(tuple(c), tuple(a)) for c, a in specs]
        once, _ = resolve_conflicts(data, PHONE_SPACE)
        twice, report = resolve_conflicts(once, PHONE_SPACE)
        assert twice == once and report.total == 0


class TestSplit:
    def data(self, n):
        return [inst(feats=(float(i),)) for i in range(n)]

    def test_sizes(self):
        s = split(self.data(10), SplitSpec(seed=0))
        assert (len(s.train), len(s.val), len(s.test)) == (6, 2, 2)

    def test_deterministic(self):
        d = self.data(50)
        a, b = split(d, SplitSpec(seed=4)), split(d, SplitSpec(seed=4))
        for part in ("train", "val", "test"):
            assert getattr(a, part) == getattr(b, part)

    def test_seeds_differ(self):
        d = self.data(1000)
        assert split(d, SplitSpec(seed=1)).test != split(d, SplitSpec(seed=2)).test

    @given(st.integers(5, 300), st.integers(0, 1000))
    def test_partition(self, n, seed):
        d = self.data(n)
        s = split(d, SplitSpec(seed=seed))
        ids = [id(x) for x in s.train + s.val + s.test]
        assert len(ids) == n and len(set(ids)) == n

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            SplitSpec(0.5, 0.2, 0.2)

    def test_too_small(self):
        with pytest.raises(ConfigError):
            split(self.data(4), SplitSpec())


class TestNormalizer:
    def test_hand_example(self):
        train = [inst(feats=(0.0,)), inst(feats=(2.0,))]
        n = fit_normalizer(train)
        assert n.mu.tolist() == [1.0] and n.s.tolist() == [1.0]
        assert [i.features[0] for i in apply_normalizer(n, train)] == [-1.0, 1.0]

    def test_mean_maps_to_zero(self):
        rng = np.random.default_rng(0)
        train = [inst(feats=rng.standard_normal(4)) for _ in range(20)]
        n = fit_normalizer(train)
        np.testing.assert_array_equal(n.transform(n.mu), np.zeros(4))

    def test_degenerate_feature(self):
        train = [inst(feats=(3.0, float(i))) for i in range(5)]
        n = fit_normalizer(train)
        assert n.degenerate.tolist() == [True, False] and n.s[0] == 1.0
        assert all(i.features[0] == 0.0 for i in apply_normalizer(n, train))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_standardized_train(self, seed):
        rng = np.random.default_rng(seed)
        train = [inst(feats=rng.normal(5, 3, 6)) for _ in range(30)]
        z = np.array([i.features for i in apply_normalizer(fit_normalizer(train), train)])
        np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(z.std(axis=0), 1, atol=1e-9)

    def test_fit_uses_train_only(self):
        rng = np.random.default_rng(1)
        train = [inst(feats=rng.normal(0, 1, 3)) for _ in range(20)]
        val = [inst(feats=rng.normal(2, 1, 3)) for _ in range(20)]
        a = apply_normalizer(fit_normalizer(train), val)
        b = apply_normalizer(fit_normalizer(train + val), val)
        assert not np.allclose(a[0].features, b[0].features)

    def test_minmax(self):
        train = [inst(feats=(1.0,)), inst(feats=(3.0,)), inst(feats=(2.0,))]
        z = [i.features[0] for i in apply_normalizer(fit_normalizer(train, "minmax"), train)]
        assert z == [0.0, 1.0, 0.5]

    def test_empty_train(self):
        with pytest.raises(ConfigError):
            fit_normalizer([])


class TestSynthetic:
    def test_zero_noise_features_are_prototype_means(self):
        cfg = SynthConfig(noise_sigma=0.0, p_missing_context=0, p_missing_activity=0,
                          num_instances=50, seed=2)
        syn = generate_synthetic(cfg)
        U, C = cfg.num_users, cfg.num_contexts
        for i in syn.instances:
            rows = [i.user, U + int(np.flatnonzero(i.context_labels == 1)[0])]
            rows += [U + C + int(a) for a in np.flatnonzero(i.activity_labels == 1)]
            np.testing.assert_allclose(i.features, syn.prototypes[rows].mean(axis=0), atol=1e-15)

    def test_deterministic_and_seed_sensitive(self):
        a = generate_synthetic(SynthConfig(num_instances=30, seed=1))
        b = generate_synthetic(SynthConfig(num_instances=30, seed=1))
        c = generate_synthetic(SynthConfig(num_instances=30, seed=2))
        assert np.array_equal(a.prototypes, b.prototypes)
        assert all(np.array_equal(x.features, y.features) for x, y in zip(a.instances, b.instances))
        assert not np.allclose(a.prototypes, c.prototypes)

    def test_prototypes_unit_norm(self):
        syn = generate_synthetic(SynthConfig(num_instances=5))
        np.testing.assert_allclose(np.linalg.norm(syn.prototypes, axis=1), 1.0, atol=1e-12)

    def test_invariants_hold(self):
        space = LabelSpace(("c0", "c1"), ("Sleeping", "Running", "Walking", "Sitting"))
        cfg = SynthConfig(num_contexts=2, num_activities=4, num_instances=500, p_cooccur=0.9,
                          seed=8)
        syn = generate_synthetic(cfg, space)
        kept, report = resolve_conflicts(syn.instances, space)
        assert report.total == 0
        for i in syn.instances:
            assert not (i.context_missing and i.activity_missing)
            assert int(np.sum(i.context_labels == POSITIVE)) <= 1
            assert 1 <= int(np.sum(i.activity_labels == POSITIVE)) <= 2 or i.activity_missing

    def test_probability_checks(self):
        with pytest.raises(ConfigError):
            SynthConfig(p_missing_context=0.7, p_missing_activity=0.4)
        with pytest.raises(ConfigError):
            SynthConfig(p_cooccur=1.5)
        with pytest.raises(ConfigError):
            SynthConfig(num_users=0)

    def test_init_embeddings_track_prototypes(self):
        syn = generate_synthetic(SynthConfig(seed=0))
        g = build_hypergraph(syn.instances, syn.label_space, syn.num_users)
        types = g.node_types
        unit = lambda m: m / np.linalg.norm(m, axis=1, keepdims=True)  # noqa: E731
        cos = unit(g.init_embeddings) @ unit(syn.prototypes).T
        hits = 0
        for v in range(g.num_nodes):
            same = np.flatnonzero(types == types[v])
            others = same[same != v]
            hits += bool(cos[v, v] > cos[v, others].max())
        assert hits / g.num_nodes >= 0.95


class TestFiles:
    def test_round_trip(self, tmp_path, small_synth):
        p = tmp_path / "inst.csv"
        write_instances(p, small_synth.instances, small_synth.label_space)
        back = read_instances(p, small_synth.label_space)
        assert len(back) == len(small_synth.instances)
        for a, b in zip(small_synth.instances, back):
            assert a.user == b.user
            assert np.array_equal(a.features, b.features)
            assert np.array_equal(a.labels(), b.labels())

    def test_prototype_round_trip(self, tmp_path, small_synth):
        p = tmp_path / "protos.csv"
        write_prototypes(p, small_synth.node_names, small_synth.prototypes)
        names, protos = read_prototypes(p)
        assert names == small_synth.node_names
        assert np.array_equal(protos, small_synth.prototypes)

    def test_tri_state_ingestion(self, tmp_path):
        space = LabelSpace(("c0", "c1"), ("a0", "a1"), ())
        p = tmp_path / "x.csv"
        p.write_text("user,f0,c0,c1,a0,a1\n0,1.5,1,,,\n1,2.0,,,0,1\n")
        a, b = read_instances(p, space)
        assert a.context_labels.tolist() == [POSITIVE, NEGATIVE]
        assert a.activity_labels.tolist() == [MISSING, MISSING]
        assert b.context_labels.tolist() == [MISSING, MISSING]
        assert b.activity_labels.tolist() == [NEGATIVE, POSITIVE]

    def test_bad_label_value(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("user,f0,c0,a0\n0,1.0,2,1\n")
        with pytest.raises(ConfigError, match="line 2"):
            read_instances(p, LabelSpace(("c0",), ("a0",), ()))

    def test_missing_label_column(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("user,f0,c0\n0,1.0,1\n")
        with pytest.raises(ConfigError):
            read_instances(p, LabelSpace(("c0",), ("a0",), ()))


def test_negative_default_constant():
    assert (POSITIVE, NEGATIVE, MISSING) == (1, 0, -1)
