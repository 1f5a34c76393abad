"""Shared fixtures: tiny zoos reused across the train/cli test modules."""

import pytest

from scalegmn.zoo import gen_cnn_zoo, gen_inr_zoo


@pytest.fixture(scope="session")
def tiny_inr_zoo(tmp_path_factory):
    path = tmp_path_factory.mktemp("zoos") / "inr"
    gen_inr_zoo(path, count=10, seed=101, steps=300)
    return path


@pytest.fixture(scope="session")
def tiny_cnn_zoo(tmp_path_factory):
    path = tmp_path_factory.mktemp("zoos") / "cnn"
    gen_cnn_zoo(path, count=14, seed=102)
    return path
