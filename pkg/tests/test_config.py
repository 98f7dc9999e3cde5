from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from hyperhar.config import (RunConfig, SweepSpec, labels_to_ini, load_config, parse_config,
                             read_labels_ini, to_ini, train_config_from_dict,
                             train_config_to_dict)
from hyperhar.data import DEFAULT_EXCLUSIVE_GROUPS, LabelSpace
from hyperhar.errors import ConfigError
from hyperhar.losses import LossConfig
from hyperhar.model import ModelConfig
from hyperhar.trainer import TrainConfig


def test_empty_config_gives_defaults():
    assert parse_config("") == RunConfig()
    assert load_config(None) == RunConfig()


def test_values_parsed():
    cfg = parse_config("""
[synth]
num_instances = 50
p_missing_context = 0.3
[model]
num_layers = 3
head_dim = none
enable_edge_hetero = false
[train]
beta2 = 0.99
early_stop_patience = 5
[sweep]
num_layers = 1, 2
""")
    assert cfg.synth.num_instances == 50 and cfg.synth.p_missing_context == 0.3
    assert cfg.train.model.num_layers == 3 and not cfg.train.model.enable_edge_hetero
    assert cfg.train.betas == (0.9, 0.99)
    assert cfg.train.early_stop_patience == 5
    assert cfg.sweep == SweepSpec((1, 2), ())


@pytest.mark.parametrize("text,key", [
    ("[model]\nnum_layer = 2\n", "model.num_layer"),
    ("[modle]\nnum_layers = 2\n", "modle"),
    ("[train]\nepochs = many\n", "train.epochs"),
    ("[model]\nenable_contrastive = maybe\n", "model.enable_contrastive"),
    ("[model]\nnum_layers = 0\n", "model.num_layers"),
    ("[normalize]\nmode = rank\n", "normalize.mode"),
    ("[labels]\ncontexts = a, b\n", "labels"),
])
def test_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key


def test_syntax_error():
    with pytest.raises(ConfigError):
        parse_config("no section header\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_labels_default_exclusive_groups():
    cfg = parse_config("[labels]\ncontexts = a, b\nactivities = c, d\n")
    assert cfg.labels.exclusive_groups == LabelSpace(("a", "b"), ("c", "d"),
                                                     DEFAULT_EXCLUSIVE_GROUPS).exclusive_groups


def test_labels_ini_round_trip(tmp_path):
    space = LabelSpace(("InHand", "OnTable"), ("Sitting", "Walking", "Running"),
                       (frozenset({"Walking", "Sitting"}), frozenset({"Running", "Sitting"})))
    p = tmp_path / "labels.ini"
    p.write_text(labels_to_ini(space))
    assert read_labels_ini(p) == space


def test_labels_ini_without_section(tmp_path):
    p = tmp_path / "x.ini"
    p.write_text("[synth]\nseed = 1\n")
    with pytest.raises(ConfigError):
        read_labels_ini(p)


def test_with_seed_sets_all_streams():
    cfg = RunConfig().with_seed(7)
    assert cfg.synth.seed == cfg.split.seed == cfg.train.seed == 7


def test_train_config_dict_round_trip():
    cfg = TrainConfig(learning_rate=3e-4, betas=(0.8, 0.95), early_stop_patience=4,
                      loss=LossConfig(0.1, 0.2, "inverse_frequency"),
                      model=ModelConfig(head_dim=8, normalization="row"))
    assert train_config_from_dict(train_config_to_dict(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(layers=st.integers(1, 6), dim=st.integers(1, 128), lr=st.floats(0, 1),
       l1=st.floats(0, 1), dropout=st.floats(0, 0.9), seed=st.integers(0, 2**31),
       hetero=st.booleans(), patience=st.none() | st.integers(1, 10),
       sweep=st.lists(st.integers(1, 8), min_size=1, max_size=4))
def test_ini_round_trip(layers, dim, lr, l1, dropout, seed, hetero, patience, sweep):
    base = RunConfig(labels=LabelSpace(("a", "b"), ("c", "d", "e"), (frozenset({"c", "d"}),)),
                     instances="x.csv", edge_weighting="count")
    train = replace(base.train, learning_rate=lr, early_stop_patience=patience,
                    model=replace(base.train.model, num_layers=layers, embed_dim=dim,
                                  dropout=dropout, enable_edge_hetero=hetero),
                    loss=replace(base.train.loss, lambda1=l1))
    cfg = replace(base, train=train, sweep=SweepSpec(tuple(sweep), (dim,))).with_seed(seed)
    assert parse_config(to_ini(cfg)) == cfg
