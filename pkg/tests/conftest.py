import numpy as np
import pytest

from sersrecon import neuralnet as nn
from sersrecon import pipeline as pl
from sersrecon.config import PipelineConfig


@pytest.fixture(scope="session")
def cfg():
    return PipelineConfig()


@pytest.fixture(scope="session")
def pretrain_data(cfg):
    return pl.pretrain_dataset(cfg)


@pytest.fixture(scope="session")
def pretrained(cfg, pretrain_data):
    net0 = nn.init_network(cfg.network, cfg.seeds.pretrain_init)
    net, hist = nn.train(net0, pretrain_data, cfg.pretrain)
    return net, hist


@pytest.fixture(scope="session")
def finetune_data(cfg):
    return pl.finetune_datasets(cfg)


@pytest.fixture(scope="session")
def finetuned(cfg, pretrained, finetune_data):
    train_ds, test_ds = finetune_data
    head = nn.replace_head(nn.freeze_all(pretrained[0]), 2, cfg.seeds.head_init)
    net, hist = nn.train(head, train_ds, cfg.finetune)
    return net, hist


@pytest.fixture
def tiny_config():
    return nn.NetworkConfig(
        64,
        (nn.conv(3, 5, 2), nn.RELU, nn.pool(2), nn.FLATTEN, nn.dense(8), nn.RELU, nn.dense(3), nn.SOFTMAX),
        3,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
