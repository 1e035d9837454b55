"""Shared fixtures: a seeded checkpoint and the ten-image smoke set."""

import pytest

from capextract import init_model, save_checkpoint
from imagegen import write_images


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "captioner.pt"
    save_checkpoint(init_model(seed=7), path)
    return path


@pytest.fixture(scope="session")
def smoke_images(tmp_path_factory):
    """The ten-image smoke set used across the extraction tests."""
    root = tmp_path_factory.mktemp("images")
    write_images(root, 10, seed=11)
    return root
